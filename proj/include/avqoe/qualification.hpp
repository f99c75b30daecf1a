#pragma once

// Participant eligibility and viewing-environment checks: screen pixel pitch
// from a credit-card resize, Landolt-ring acuity rows, the two-plate Ishihara
// screen, the brightness counting grid, blurred-pair viewing-distance test and
// device requirements. All evaluators are pure functions.

#include <array>
#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "avqoe/json_support.hpp"

namespace avqoe::qualification {

/// Width of an ISO/IEC 7810 ID-1 card.
inline constexpr double kCardWidthMm = 85.60;
inline constexpr double kCardHeightMm = 53.98;

inline constexpr int kMinCardWidthPx = 100;
inline constexpr int kMaxCardWidthPx = 10000;
inline constexpr double kMinViewingDistanceMm = 500.0;
inline constexpr double kMaxViewingDistanceMm = 750.0;
inline constexpr int kTrialsPerRow = 5;
inline constexpr int kRowPassCount = 3;

struct PixelCalibration {
    int card_width_px = 0;
    double pitch_mm_per_px = 0.0;
};

PixelCalibration estimate_pixel_pitch(int card_width_px);

// --- Landolt rings ----------------------------------------------------------

enum class Direction { n, ne, e, se, s, sw, w, nw, skip };

inline constexpr std::array<Direction, 8> kCompassDirections{
    Direction::n, Direction::ne, Direction::e, Direction::se,
    Direction::s, Direction::sw, Direction::w, Direction::nw};

struct LandoltTrial {
    Direction presented = Direction::n;
    Direction answered = Direction::skip;
};

struct LandoltRow {
    double acuity = 1.0;
    double gap_px = 0.0;
    double ring_diameter_px = 0.0;
    double distance_mm = 0.0;
    std::vector<LandoltTrial> trials;
};

/// Gap (pixels) whose angular size at `distance_mm` is 1/target_acuity arcmin.
double landolt_gap_px(double target_acuity, double distance_mm, const PixelCalibration& calib);

/// Row geometry with randomly presented directions; answers default to skip.
LandoltRow make_landolt_row(double target_acuity, double distance_mm, const PixelCalibration& calib,
                            std::mt19937_64& rng);

enum class Outcome { pass, fail };

Outcome evaluate_landolt_row(const LandoltRow& row);

/// Rows are presented from large to small gap (ascending acuity). The protocol
/// passes when the row at pass_acuity (the 20/30 line by default) passes.
struct LandoltSchedule {
    std::vector<double> row_acuities{0.5, 2.0 / 3.0};
    double pass_acuity = 2.0 / 3.0;

    bool operator==(const LandoltSchedule&) const = default;
};

Outcome evaluate_landolt_protocol(std::span<const LandoltRow> rows, const LandoltSchedule& schedule);

// --- Ishihara ---------------------------------------------------------------

struct IshiharaResponse {
    int plate_id = 0;
    std::string answer;
    std::string key;
};

Outcome evaluate_ishihara(std::span<const IshiharaResponse> responses);

// --- Brightness grid --------------------------------------------------------

enum class Shape { triangle, circle };

struct BrightnessCell {
    int background_gray = 0;
    Shape shape = Shape::circle;
    int size_px = 0;
    int x_px = 0;  // shape center within the cell
    int y_px = 0;
    int foreground_gray = 0;
};

struct ContrastBand {
    int min_delta = 4;
    int max_delta = 12;

    bool operator==(const ContrastBand&) const = default;
};

struct BrightnessTask {
    std::array<BrightnessCell, 16> grid{};
    Shape target_shape = Shape::triangle;
    int expected_count = 0;
    int attempt = 1;
    int cell_px = 120;
};

BrightnessTask make_brightness_task(std::mt19937_64& rng, int attempt, const ContrastBand& band,
                                    int cell_px = 120);

enum class BrightnessOutcome { pass, retry, hard_fail };

BrightnessOutcome evaluate_brightness(const BrightnessTask& task, int answer);

// --- Blurred pairs ----------------------------------------------------------

enum class Side { left, right };

struct BlurPair {
    std::string left_id;
    std::string right_id;
    Side blurred_side = Side::left;
};

struct BlurPairTask {
    std::vector<BlurPair> pairs;
    std::vector<Side> selections;
};

Outcome evaluate_blur_pairs(const BlurPairTask& task, int pass_threshold = 2);

// --- Device -----------------------------------------------------------------

enum class ViewerClass { mobile, pc };

struct DeviceReport {
    int width_px = 0;
    int height_px = 0;
    double refresh_hz = 0.0;
    ViewerClass viewer_class = ViewerClass::pc;
};

struct DeviceRequirements {
    int min_width = 1280;
    int min_height = 720;
    double min_refresh_hz = 30.0;
    std::set<ViewerClass> allowed_classes{ViewerClass::pc};

    bool operator==(const DeviceRequirements&) const = default;
};

struct DeviceCheck {
    bool passed = false;
    std::string reason;  // "resolution", "refresh", "device_class" or empty
};

DeviceCheck check_device(const DeviceReport& report, const DeviceRequirements& req);

// --- JSON -------------------------------------------------------------------

NLOHMANN_JSON_SERIALIZE_ENUM(Direction, {{Direction::n, "n"},
                                         {Direction::ne, "ne"},
                                         {Direction::e, "e"},
                                         {Direction::se, "se"},
                                         {Direction::s, "s"},
                                         {Direction::sw, "sw"},
                                         {Direction::w, "w"},
                                         {Direction::nw, "nw"},
                                         {Direction::skip, "skip"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Outcome, {{Outcome::pass, "pass"}, {Outcome::fail, "fail"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Shape, {{Shape::triangle, "triangle"}, {Shape::circle, "circle"}})
NLOHMANN_JSON_SERIALIZE_ENUM(BrightnessOutcome, {{BrightnessOutcome::pass, "pass"},
                                                 {BrightnessOutcome::retry, "retry"},
                                                 {BrightnessOutcome::hard_fail, "hard_fail"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Side, {{Side::left, "left"}, {Side::right, "right"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ViewerClass, {{ViewerClass::mobile, "mobile"}, {ViewerClass::pc, "pc"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LandoltTrial, presented, answered)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LandoltRow, acuity, gap_px, ring_diameter_px, distance_mm,
                                                trials)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LandoltSchedule, row_acuities, pass_acuity)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BrightnessCell, background_gray, shape, size_px, x_px, y_px,
                                                foreground_gray)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ContrastBand, min_delta, max_delta)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(BrightnessTask, grid, target_shape, expected_count, attempt, cell_px)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(BlurPair, left_id, right_id, blurred_side)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(BlurPairTask, pairs, selections)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DeviceReport, width_px, height_px, refresh_hz, viewer_class)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DeviceRequirements, min_width, min_height, min_refresh_hz,
                                                allowed_classes)

/// Declarative render spec of a brightness grid; the expected count is omitted.
Json render_spec(const BrightnessTask& task);

}  // namespace avqoe::qualification
