#pragma once

// Landmark-driven similarity alignment of reference video frames onto the
// avatar frame, plus background masking.

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "avqoe/frame.hpp"

namespace avqoe {

using Point2 = Eigen::Vector2d;

struct SimilarityTransform {
    double scale = 1.0;
    Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();
    Eigen::Vector2d translation = Eigen::Vector2d::Zero();

    Point2 apply(const Point2& p) const { return scale * (rotation * p) + translation; }
    /// Exact algebraic inverse, used for backward warping.
    Point2 invert(const Point2& q) const { return rotation.transpose() * (q - translation) / scale; }
    double angle_rad() const;
    static SimilarityTransform from_params(double scale, double angle_rad, const Eigen::Vector2d& t);
};

struct SimilarityFit {
    SimilarityTransform transform;
    double rms_residual = 0.0;
};

/// Least-squares s, R, t minimising sum |s R x_i + t - y_i|^2 (closed form,
/// rotation only). Throws DegenerateLandmarks for fewer than 3 pairs or
/// coincident / collinear source points.
SimilarityFit estimate_similarity(const std::vector<Point2>& source, const std::vector<Point2>& target);

double rms_residual(const SimilarityTransform& t, const std::vector<Point2>& source, const std::vector<Point2>& target);

/// Backward bilinear warp of `frame` under T into an out_w x out_h canvas.
/// Samples outside the source take `background`; a single-channel mask
/// (0..255 alpha, output geometry) blends towards the background.
Frame warp_and_mask(const Frame& frame, const SimilarityTransform& T, int out_w, int out_h,
                    const std::optional<Frame>& mask = std::nullopt, std::uint8_t background = 128);

/// Blend an already aligned frame with the background under a mask.
Frame apply_mask(const Frame& frame, const Frame& mask, std::uint8_t background = 128);

}  // namespace avqoe
