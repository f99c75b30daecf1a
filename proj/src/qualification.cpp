#include "avqoe/qualification.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "avqoe/error.hpp"

namespace avqoe::qualification {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

}  // namespace

PixelCalibration estimate_pixel_pitch(int card_width_px) {
    if (card_width_px < kMinCardWidthPx || card_width_px > kMaxCardWidthPx) {
        throw Error(ErrorCode::CalibrationOutOfRange,
                    "card width " + std::to_string(card_width_px) + " px outside [100, 10000]");
    }
    return {card_width_px, kCardWidthMm / static_cast<double>(card_width_px)};
}

double landolt_gap_px(double target_acuity, double distance_mm, const PixelCalibration& calib) {
    if (!(distance_mm >= kMinViewingDistanceMm && distance_mm <= kMaxViewingDistanceMm)) {
        throw Error(ErrorCode::DistanceOutOfRange, "viewing distance must be within [500, 750] mm");
    }
    if (!(target_acuity > 0.0) || !(calib.pitch_mm_per_px > 0.0)) {
        throw Error(ErrorCode::CalibrationOutOfRange, "acuity and pixel pitch must be positive");
    }
    const double theta = (1.0 / target_acuity) * (std::numbers::pi / 10800.0);
    const double gap_mm = 2.0 * distance_mm * std::tan(theta / 2.0);
    return gap_mm / calib.pitch_mm_per_px;
}

LandoltRow make_landolt_row(double target_acuity, double distance_mm, const PixelCalibration& calib,
                            std::mt19937_64& rng) {
    LandoltRow row;
    row.acuity = target_acuity;
    row.distance_mm = distance_mm;
    row.gap_px = landolt_gap_px(target_acuity, distance_mm, calib);
    row.ring_diameter_px = 5.0 * row.gap_px;
    std::uniform_int_distribution<std::size_t> pick(0, kCompassDirections.size() - 1);
    row.trials.resize(kTrialsPerRow);
    for (auto& trial : row.trials) {
        trial.presented = kCompassDirections[pick(rng)];
        trial.answered = Direction::skip;
    }
    return row;
}

Outcome evaluate_landolt_row(const LandoltRow& row) {
    if (row.trials.size() != static_cast<std::size_t>(kTrialsPerRow)) {
        throw Error(ErrorCode::MalformedRow, "expected 5 trials, got " + std::to_string(row.trials.size()));
    }
    const auto correct = std::count_if(row.trials.begin(), row.trials.end(), [](const LandoltTrial& t) {
        return t.answered != Direction::skip && t.answered == t.presented;
    });
    return correct >= kRowPassCount ? Outcome::pass : Outcome::fail;
}

Outcome evaluate_landolt_protocol(std::span<const LandoltRow> rows, const LandoltSchedule& schedule) {
    constexpr double eps = 1e-9;
    const LandoltRow* gate = nullptr;
    for (const auto& row : rows) {
        if (row.acuity + eps >= schedule.pass_acuity && (gate == nullptr || row.acuity < gate->acuity)) {
            gate = &row;
        }
    }
    if (gate == nullptr) {
        return Outcome::fail;
    }
    return evaluate_landolt_row(*gate);
}

Outcome evaluate_ishihara(std::span<const IshiharaResponse> responses) {
    const IshiharaResponse* plate3 = nullptr;
    const IshiharaResponse* plate4 = nullptr;
    for (const auto& r : responses) {
        const IshiharaResponse** slot = r.plate_id == 3 ? &plate3 : r.plate_id == 4 ? &plate4 : nullptr;
        if (slot == nullptr) {
            throw Error(ErrorCode::MalformedTask, "plate " + std::to_string(r.plate_id) + " is not part of the test");
        }
        if (*slot != nullptr) {
            throw Error(ErrorCode::MalformedTask, "duplicate response for plate " + std::to_string(r.plate_id));
        }
        *slot = &r;
    }
    if (plate3 == nullptr || plate4 == nullptr) {
        throw Error(ErrorCode::MissingPlate, plate3 == nullptr ? "plate 3" : "plate 4");
    }
    const auto ok = [](const IshiharaResponse& r) { return trim(r.answer) == trim(r.key); };
    return ok(*plate3) && ok(*plate4) ? Outcome::pass : Outcome::fail;
}

BrightnessTask make_brightness_task(std::mt19937_64& rng, int attempt, const ContrastBand& band, int cell_px) {
    BrightnessTask task;
    task.attempt = attempt;
    task.cell_px = cell_px;

    std::array<int, 16> grays{};
    for (int i = 0; i < 16; ++i) {
        grays[i] = 30 + i * 12;
    }
    std::shuffle(grays.begin(), grays.end(), rng);

    std::uniform_int_distribution<int> delta_dist(band.min_delta, band.max_delta);
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<int> size_dist(cell_px / 5, (cell_px * 9) / 20);
    for (std::size_t i = 0; i < task.grid.size(); ++i) {
        auto& cell = task.grid[i];
        cell.background_gray = grays[i];
        const int delta = delta_dist(rng);
        int fg = coin(rng) ? cell.background_gray + delta : cell.background_gray - delta;
        if (fg > 255 || fg < 0) {
            fg = cell.background_gray * 2 - fg;
        }
        cell.foreground_gray = fg;
        cell.shape = coin(rng) ? Shape::triangle : Shape::circle;
        cell.size_px = size_dist(rng);
        const int margin = cell.size_px / 2 + 2;
        std::uniform_int_distribution<int> pos(margin, std::max(margin, cell_px - margin));
        cell.x_px = pos(rng);
        cell.y_px = pos(rng);
    }
    task.target_shape = coin(rng) ? Shape::triangle : Shape::circle;
    task.expected_count = static_cast<int>(std::count_if(task.grid.begin(), task.grid.end(), [&](const auto& c) {
        return c.shape == task.target_shape;
    }));
    return task;
}

BrightnessOutcome evaluate_brightness(const BrightnessTask& task, int answer) {
    const bool in_range = answer >= 0 && answer <= 16;
    if (in_range && answer == task.expected_count) {
        return BrightnessOutcome::pass;
    }
    return task.attempt >= 2 ? BrightnessOutcome::hard_fail : BrightnessOutcome::retry;
}

Outcome evaluate_blur_pairs(const BlurPairTask& task, int pass_threshold) {
    if (task.pairs.size() != 3 || task.selections.size() != task.pairs.size()) {
        throw Error(ErrorCode::MalformedTask, "blur task needs exactly 3 pairs and 3 selections");
    }
    int sharp = 0;
    for (std::size_t i = 0; i < task.pairs.size(); ++i) {
        if (task.selections[i] != task.pairs[i].blurred_side) {
            ++sharp;
        }
    }
    return sharp >= pass_threshold ? Outcome::pass : Outcome::fail;
}

DeviceCheck check_device(const DeviceReport& report, const DeviceRequirements& req) {
    if (report.width_px < req.min_width || report.height_px < req.min_height) {
        return {false, "resolution"};
    }
    if (report.refresh_hz < req.min_refresh_hz) {
        return {false, "refresh"};
    }
    if (!req.allowed_classes.contains(report.viewer_class)) {
        return {false, "device_class"};
    }
    return {true, ""};
}

Json render_spec(const BrightnessTask& task) {
    Json cells = Json::array();
    for (std::size_t i = 0; i < task.grid.size(); ++i) {
        Json cell = task.grid[i];
        cell["row"] = i / 4;
        cell["col"] = i % 4;
        cells.push_back(std::move(cell));
    }
    return Json{{"rows", 4},
                {"cols", 4},
                {"cell_px", task.cell_px},
                {"attempt", task.attempt},
                {"target_shape", task.target_shape},
                {"cells", std::move(cells)}};
}

}  // namespace avqoe::qualification
