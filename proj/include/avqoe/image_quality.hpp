#pragma once

#include <vector>

#include "avqoe/frame.hpp"

namespace avqoe {

inline constexpr double kPsnrCapDb = 100.0;

struct PsnrResult {
    double db = 0.0;
    bool infinite = false;  // identical inputs, db holds the cap
    double mse = 0.0;
};

/// 10 log10(255^2 / MSE) over all channels, capped at kPsnrCapDb.
PsnrResult psnr(const Frame& ref, const Frame& deg);

/// Mean SSIM over the valid region with an 11x11 Gaussian window
/// (sigma 1.5). Colour frames are compared on BT.601 luma.
double ssim(const Frame& ref, const Frame& deg);

enum class Metric { psnr, ssim };
enum class PsnrPooling { db_mean, pooled_mse };

/// Frames paired by index. PSNR is averaged in dB unless pooled_mse is asked for.
double video_metric(const std::vector<Frame>& ref, const std::vector<Frame>& deg, Metric metric,
                    PsnrPooling pooling = PsnrPooling::db_mean);

}  // namespace avqoe
