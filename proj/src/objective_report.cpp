#include "avqoe/objective_report.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

#include "avqoe/csv.hpp"
#include "avqoe/error.hpp"
#include "avqoe/frechet.hpp"

namespace avqoe {

namespace fs = std::filesystem;

std::string to_string(Region r) { return r == Region::face ? "face" : "head_torso"; }

Region parse_region(const std::string& s) {
    if (s == "face") {
        return Region::face;
    }
    if (s == "head_torso") {
        return Region::head_torso;
    }
    throw Error(ErrorCode::InvalidConfig, "region must be head_torso or face, got '" + s + "'");
}

namespace {

double parse_number(const std::string& text, const std::string& where) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error(ErrorCode::ParseError, where + ": not a number '" + text + "'");
    }
    return v;
}

// Reads a headered CSV, skipping '#' comment lines.
std::vector<std::map<std::string, std::string>> read_table(std::istream& in, const std::string& name) {
    std::vector<std::map<std::string, std::string>> rows;
    std::vector<std::string> header;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.starts_with('#')) {
            continue;
        }
        auto fields = csv::split(line);
        if (header.empty()) {
            header = std::move(fields);
            continue;
        }
        if (fields.size() != header.size()) {
            throw Error(ErrorCode::ParseError, name + ": row has " + std::to_string(fields.size()) + " fields, header " +
                                                   std::to_string(header.size()));
        }
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < header.size(); ++i) {
            row[header[i]] = fields[i];
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::map<std::string, std::string>> read_table(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    return read_table(in, path.string());
}

const std::string& field(const std::map<std::string, std::string>& row, const std::string& key, const std::string& where) {
    const auto it = row.find(key);
    if (it == row.end()) {
        throw Error(ErrorCode::ParseError, where + ": missing column " + key);
    }
    return it->second;
}

std::optional<double> optional_number(const std::map<std::string, std::string>& row, const std::string& key) {
    const auto it = row.find(key);
    if (it == row.end() || it->second.empty()) {
        return std::nullopt;
    }
    return parse_number(it->second, key);
}

std::string opt_cell(const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); }

}  // namespace

std::map<int, FrameLandmarks> read_landmarks_csv(const fs::path& path) {
    std::map<int, std::map<int, Point2>> ref;
    std::map<int, std::map<int, Point2>> deg;
    const auto where = path.string();
    for (const auto& row : read_table(path)) {
        const int frame = static_cast<int>(parse_number(field(row, "frame", where), where));
        const int index = static_cast<int>(parse_number(field(row, "index", where), where));
        const Point2 p(parse_number(field(row, "x", where), where), parse_number(field(row, "y", where), where));
        const auto& side = field(row, "side", where);
        if (side == "ref") {
            ref[frame][index] = p;
        } else if (side == "deg") {
            deg[frame][index] = p;
        } else {
            throw Error(ErrorCode::ParseError, where + ": side must be ref or deg, got '" + side + "'");
        }
    }
    std::map<int, FrameLandmarks> out;
    for (const auto& [frame, pts] : ref) {
        const auto d = deg.find(frame);
        if (d == deg.end()) {
            continue;
        }
        FrameLandmarks fl;
        for (const auto& [index, p] : pts) {
            const auto q = d->second.find(index);
            if (q != d->second.end()) {
                fl.ref.push_back(p);
                fl.deg.push_back(q->second);
            }
        }
        out[frame] = std::move(fl);
    }
    return out;
}

double read_lpips_mean(const fs::path& path) {
    const auto rows = read_table(path);
    if (rows.empty()) {
        throw Error(ErrorCode::ParseError, path.string() + ": no LPIPS rows");
    }
    double sum = 0.0;
    for (const auto& row : rows) {
        sum += parse_number(field(row, "lpips", path.string()), path.string());
    }
    return sum / static_cast<double>(rows.size());
}

ClipMetrics compute_clip_metrics(const std::string& clip_id, const ClipInputs& in, const MetricOptions& opt) {
    if (in.ref_frames.empty() || in.ref_frames.size() != in.deg_frames.size()) {
        throw Error(ErrorCode::LengthMismatch, clip_id + ": " + std::to_string(in.ref_frames.size()) +
                                                   " reference vs " + std::to_string(in.deg_frames.size()) +
                                                   " avatar frames");
    }
    std::vector<SimilarityTransform> transforms(in.ref_frames.size());
    if (in.landmarks) {
        const auto marks = read_landmarks_csv(*in.landmarks);
        if (marks.empty()) {
            throw Error(ErrorCode::DegenerateLandmarks, clip_id + ": landmark file has no paired frames");
        }
        // Frames without landmarks reuse the nearest earlier fit (or the first one).
        std::optional<SimilarityTransform> last;
        for (std::size_t f = 0; f < transforms.size(); ++f) {
            const auto it = marks.find(static_cast<int>(f));
            if (it != marks.end()) {
                last = estimate_similarity(it->second.ref, it->second.deg).transform;
            } else if (!last) {
                last = estimate_similarity(marks.begin()->second.ref, marks.begin()->second.deg).transform;
            }
            transforms[f] = *last;
        }
    }

    std::vector<Frame> aligned;
    std::vector<Frame> unaligned;
    std::vector<Frame> deg;
    for (std::size_t f = 0; f < in.ref_frames.size(); ++f) {
        const Frame r = read_png(in.ref_frames[f]);
        Frame d = read_png(in.deg_frames[f]);
        std::optional<Frame> mask;
        if (in.mask_dir) {
            mask = read_png(*in.mask_dir / in.deg_frames[f].filename());
            d = apply_mask(d, *mask, opt.background);
        }
        aligned.push_back(warp_and_mask(r, transforms[f], d.width, d.height, mask, opt.background));
        unaligned.push_back(warp_and_mask(r, SimilarityTransform{}, d.width, d.height, mask, opt.background));
        deg.push_back(std::move(d));
    }

    ClipMetrics m;
    m.clip_id = clip_id;
    m.region = opt.region;
    m.n_frames = static_cast<int>(deg.size());
    m.psnr = video_metric(aligned, deg, Metric::psnr, opt.pooling);
    m.psnr_infinite = m.psnr == kPsnrCapDb;
    m.ssim = video_metric(aligned, deg, Metric::ssim);
    m.psnr_unaligned = video_metric(unaligned, deg, Metric::psnr, opt.pooling);
    m.ssim_unaligned = video_metric(unaligned, deg, Metric::ssim);
    if (in.lpips) {
        m.lpips = read_lpips_mean(*in.lpips);
    }
    if (in.fid_real && in.fid_gen) {
        m.fid = frechet_distance(read_embeddings(*in.fid_real).vectors, read_embeddings(*in.fid_gen).vectors);
    }
    if (in.fvd_real && in.fvd_gen) {
        m.fvd = frechet_distance(read_embeddings(*in.fvd_real).vectors, read_embeddings(*in.fvd_gen).vectors);
    }
    return m;
}

std::vector<ClipMetrics> compute_directory_metrics(const MetricDirs& dirs, const MetricOptions& opt) {
    std::vector<std::pair<std::string, bool>> clips;  // (clip id, nested)
    if (!list_frames(dirs.deg_dir).empty()) {
        clips.emplace_back(dirs.deg_dir.filename().string(), false);
    } else {
        for (const auto& e : fs::directory_iterator(dirs.deg_dir)) {
            if (e.is_directory()) {
                clips.emplace_back(e.path().filename().string(), true);
            }
        }
        std::sort(clips.begin(), clips.end());
    }
    const auto optional_file = [](const std::optional<fs::path>& dir, const std::string& name) -> std::optional<fs::path> {
        if (!dir || !fs::exists(*dir / name)) {
            return std::nullopt;
        }
        return *dir / name;
    };

    std::vector<ClipMetrics> out;
    for (const auto& [clip, nested] : clips) {
        ClipInputs in;
        in.ref_frames = list_frames(nested ? dirs.ref_dir / clip : dirs.ref_dir);
        in.deg_frames = list_frames(nested ? dirs.deg_dir / clip : dirs.deg_dir);
        in.landmarks = optional_file(dirs.landmarks_dir, clip + ".csv");
        if (dirs.masks_dir) {
            in.mask_dir = nested ? *dirs.masks_dir / clip : *dirs.masks_dir;
        }
        in.lpips = optional_file(dirs.lpips_dir, clip + ".csv");
        in.fid_real = optional_file(dirs.embeddings_dir, clip + ".fid.real.emb");
        in.fid_gen = optional_file(dirs.embeddings_dir, clip + ".fid.gen.emb");
        in.fvd_real = optional_file(dirs.embeddings_dir, clip + ".fvd.real.emb");
        in.fvd_gen = optional_file(dirs.embeddings_dir, clip + ".fvd.gen.emb");
        out.push_back(compute_clip_metrics(clip, in, opt));
    }
    return out;
}

std::string clip_metrics_csv(const std::vector<ClipMetrics>& rows, const Provenance& prov) {
    std::string out = prov.header_line() +
                      "\nclip_id,region,n_frames,psnr,psnr_infinite,ssim,psnr_unaligned,ssim_unaligned,lpips,fid,fvd\n";
    for (const auto& m : rows) {
        out += csv::join({m.clip_id, to_string(m.region), std::to_string(m.n_frames), csv::format_double(m.psnr),
                          m.psnr_infinite ? "true" : "false", csv::format_double(m.ssim),
                          csv::format_double(m.psnr_unaligned), csv::format_double(m.ssim_unaligned), opt_cell(m.lpips),
                          opt_cell(m.fid), opt_cell(m.fvd)});
        out += '\n';
    }
    return out;
}

std::vector<ClipMetrics> read_clip_metrics_csv(std::istream& in) {
    std::vector<ClipMetrics> out;
    const std::string where = "metrics csv";
    for (const auto& row : read_table(in, where)) {
        ClipMetrics m;
        m.clip_id = field(row, "clip_id", where);
        m.region = parse_region(field(row, "region", where));
        m.n_frames = static_cast<int>(parse_number(field(row, "n_frames", where), where));
        m.psnr = parse_number(field(row, "psnr", where), where);
        m.psnr_infinite = field(row, "psnr_infinite", where) == "true";
        m.ssim = parse_number(field(row, "ssim", where), where);
        m.psnr_unaligned = optional_number(row, "psnr_unaligned").value_or(0.0);
        m.ssim_unaligned = optional_number(row, "ssim_unaligned").value_or(0.0);
        m.lpips = optional_number(row, "lpips");
        m.fid = optional_number(row, "fid");
        m.fvd = optional_number(row, "fvd");
        out.push_back(std::move(m));
    }
    return out;
}

ModelMetrics model_metrics(const std::vector<ClipMetrics>& clips, const std::map<std::string, std::string>& model_of_clip) {
    std::map<std::string, std::map<std::string, std::vector<double>>> acc;
    for (const auto& c : clips) {
        const auto it = model_of_clip.find(c.clip_id);
        if (it == model_of_clip.end()) {
            continue;
        }
        auto& m = acc[it->second];
        m["psnr"].push_back(c.psnr);
        m["ssim"].push_back(c.ssim);
        if (c.lpips) {
            m["lpips"].push_back(*c.lpips);
        }
        if (c.fid) {
            m["fid"].push_back(*c.fid);
        }
        if (c.fvd) {
            m["fvd"].push_back(*c.fvd);
        }
    }
    ModelMetrics out;
    for (auto& [model, metrics] : acc) {
        for (auto& [name, values] : metrics) {
            std::sort(values.begin(), values.end());
            out[model][name] = stats::mean(values);
        }
    }
    return out;
}

std::vector<SubjectiveObjectiveEntry> subjective_objective_report(const ModelMetrics& metrics,
                                                                  const stats::ScoreTable& condition_mos,
                                                                  const std::vector<std::string>& items, Region region) {
    static const std::vector<std::string> kOrder{"psnr", "ssim", "lpips", "fid", "fvd"};
    std::set<std::string> present;
    for (const auto& [model, m] : metrics) {
        for (const auto& [name, v] : m) {
            present.insert(name);
        }
    }
    std::vector<SubjectiveObjectiveEntry> out;
    for (const auto& metric : kOrder) {
        if (!present.contains(metric)) {
            continue;
        }
        for (const auto& item : items) {
            std::vector<double> x;
            std::vector<double> y;
            for (const auto& [model, m] : metrics) {
                const auto v = m.find(metric);
                const auto* row = condition_mos.find(model, item);
                if (v != m.end() && row != nullptr) {
                    x.push_back(v->second);
                    y.push_back(row->mos);
                }
            }
            if (x.size() < 4) {
                throw Error(ErrorCode::TooFewModels, metric + "/" + item + ": " + std::to_string(x.size()) +
                                                         " models in common, need at least 4");
            }
            SubjectiveObjectiveEntry e{metric, item, region, x.size(), std::nullopt, std::nullopt};
            try {
                e.pcc = stats::pcc(x, y);
                e.kendall_tau_b = stats::kendall_tau_b(x, y);
            } catch (const Error& err) {
                if (err.code() != ErrorCode::DegenerateInput) {
                    throw;
                }
            }
            out.push_back(std::move(e));
        }
    }
    if (out.empty()) {
        throw Error(ErrorCode::TooFewModels, "no objective metrics matched any rated model");
    }
    return out;
}

std::string subjective_objective_csv(const std::vector<SubjectiveObjectiveEntry>& entries,
                                     const std::vector<std::string>& items, const Provenance& prov) {
    std::vector<std::string> header{"region", "metric", "stat"};
    header.insert(header.end(), items.begin(), items.end());
    std::string out = prov.header_line() + "\n" + csv::join(header) + "\n";
    std::vector<std::string> metrics;
    for (const auto& e : entries) {
        if (std::find(metrics.begin(), metrics.end(), e.metric) == metrics.end()) {
            metrics.push_back(e.metric);
        }
    }
    for (const auto& metric : metrics) {
        for (const bool tau : {false, true}) {
            std::vector<std::string> row;
            for (const auto& item : items) {
                const auto it = std::find_if(entries.begin(), entries.end(), [&](const SubjectiveObjectiveEntry& e) {
                    return e.metric == metric && e.item == item;
                });
                if (row.empty()) {
                    row = {to_string(it == entries.end() ? Region::head_torso : it->region), metric,
                           tau ? "kendall_tau_b" : "pcc"};
                }
                row.push_back(it == entries.end() ? std::string() : opt_cell(tau ? it->kendall_tau_b : it->pcc));
            }
            out += csv::join(row) + "\n";
        }
    }
    return out;
}

}  // namespace avqoe
