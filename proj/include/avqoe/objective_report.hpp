#pragma once

// Per-clip objective metric extraction from frame dumps and the
// subjective-vs-objective correlation table.

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avqoe/alignment.hpp"
#include "avqoe/image_quality.hpp"
#include "avqoe/provenance.hpp"
#include "avqoe/stats.hpp"

namespace avqoe {

enum class Region { head_torso, face };
std::string to_string(Region r);
Region parse_region(const std::string& s);

/// Landmarks per frame index: reference-side and avatar-side point lists.
struct FrameLandmarks {
    std::vector<Point2> ref;
    std::vector<Point2> deg;
};
/// CSV columns frame,side,index,x,y with side "ref" or "deg".
std::map<int, FrameLandmarks> read_landmarks_csv(const std::filesystem::path& path);

/// Mean of the `lpips` column of a per-frame sidecar CSV.
double read_lpips_mean(const std::filesystem::path& path);

struct ClipMetrics {
    std::string clip_id;
    Region region = Region::head_torso;
    int n_frames = 0;
    double psnr = 0.0;
    bool psnr_infinite = false;
    double ssim = 0.0;
    double psnr_unaligned = 0.0;
    double ssim_unaligned = 0.0;
    std::optional<double> lpips;
    std::optional<double> fid;
    std::optional<double> fvd;

    bool operator==(const ClipMetrics&) const = default;
};

struct ClipInputs {
    std::vector<std::filesystem::path> ref_frames;
    std::vector<std::filesystem::path> deg_frames;
    std::optional<std::filesystem::path> landmarks;
    std::optional<std::filesystem::path> mask_dir;  // masks named like the avatar frames
    std::optional<std::filesystem::path> lpips;
    std::optional<std::filesystem::path> fid_real, fid_gen, fvd_real, fvd_gen;
};

struct MetricOptions {
    Region region = Region::head_torso;
    PsnrPooling pooling = PsnrPooling::db_mean;
    std::uint8_t background = 128;
};

ClipMetrics compute_clip_metrics(const std::string& clip_id, const ClipInputs& in, const MetricOptions& opt);

struct MetricDirs {
    std::filesystem::path ref_dir;
    std::filesystem::path deg_dir;
    std::optional<std::filesystem::path> landmarks_dir;   // <clip>.csv
    std::optional<std::filesystem::path> masks_dir;       // <clip>/<frame>.png
    std::optional<std::filesystem::path> embeddings_dir;  // <clip>.{fid,fvd}.{real,gen}.emb
    std::optional<std::filesystem::path> lpips_dir;       // <clip>.csv
};

/// Clips are the subdirectories of deg_dir, or deg_dir itself when it holds
/// PNG frames directly.
std::vector<ClipMetrics> compute_directory_metrics(const MetricDirs& dirs, const MetricOptions& opt);

std::string clip_metrics_csv(const std::vector<ClipMetrics>& rows, const Provenance& prov);
std::vector<ClipMetrics> read_clip_metrics_csv(std::istream& in);

/// Metric value per model: mean over that model's clips.
using ModelMetrics = std::map<std::string, std::map<std::string, double>>;
ModelMetrics model_metrics(const std::vector<ClipMetrics>& clips, const std::map<std::string, std::string>& model_of_clip);

struct SubjectiveObjectiveEntry {
    std::string metric;
    std::string item;
    Region region = Region::head_torso;
    std::size_t n_models = 0;
    std::optional<double> pcc;  // empty when either side is constant
    std::optional<double> kendall_tau_b;
};

/// Needs at least 4 models present on both sides (TooFewModels).
std::vector<SubjectiveObjectiveEntry> subjective_objective_report(const ModelMetrics& metrics,
                                                                  const stats::ScoreTable& condition_mos,
                                                                  const std::vector<std::string>& items, Region region);

/// Wide layout: region,metric,stat,<items...> with stat pcc or kendall_tau_b.
std::string subjective_objective_csv(const std::vector<SubjectiveObjectiveEntry>& entries,
                                     const std::vector<std::string>& items, const Provenance& prov);

}  // namespace avqoe
