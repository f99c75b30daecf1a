#include "avqoe/alignment.hpp"

#include <cmath>

#include "avqoe/error.hpp"

namespace avqoe {

double SimilarityTransform::angle_rad() const { return std::atan2(rotation(1, 0), rotation(0, 0)); }

SimilarityTransform SimilarityTransform::from_params(double scale, double angle_rad, const Eigen::Vector2d& t) {
    SimilarityTransform T;
    T.scale = scale;
    T.rotation << std::cos(angle_rad), -std::sin(angle_rad), std::sin(angle_rad), std::cos(angle_rad);
    T.translation = t;
    return T;
}

double rms_residual(const SimilarityTransform& t, const std::vector<Point2>& source, const std::vector<Point2>& target) {
    double ss = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        ss += (t.apply(source[i]) - target[i]).squaredNorm();
    }
    return source.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(source.size()));
}

SimilarityFit estimate_similarity(const std::vector<Point2>& source, const std::vector<Point2>& target) {
    if (source.size() != target.size()) {
        throw Error(ErrorCode::DegenerateLandmarks, "source and target landmark counts differ");
    }
    if (source.size() < 3) {
        throw Error(ErrorCode::DegenerateLandmarks, "need at least 3 landmark pairs");
    }
    const auto n = static_cast<double>(source.size());
    Point2 mu_x = Point2::Zero();
    Point2 mu_y = Point2::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        mu_x += source[i];
        mu_y += target[i];
    }
    mu_x /= n;
    mu_y /= n;

    Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d scatter_x = Eigen::Matrix2d::Zero();
    double var_x = 0.0;
    double var_y = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const Point2 dx = source[i] - mu_x;
        const Point2 dy = target[i] - mu_y;
        sigma += dy * dx.transpose();
        scatter_x += dx * dx.transpose();
        var_x += dx.squaredNorm();
        var_y += dy.squaredNorm();
    }
    sigma /= n;
    var_x /= n;
    var_y /= n;

    // Collinear sources leave the scatter matrix rank one.
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(scatter_x / n);
    const double lmin = es.eigenvalues()(0);
    const double lmax = es.eigenvalues()(1);
    if (var_x <= 0.0 || lmax <= 0.0 || lmin <= 1e-12 * lmax) {
        throw Error(ErrorCode::DegenerateLandmarks, "source landmarks are coincident or collinear");
    }
    if (var_y <= 1e-12 * var_x) {
        throw Error(ErrorCode::DegenerateLandmarks, "target landmarks are coincident");
    }

    Eigen::JacobiSVD<Eigen::Matrix2d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix2d S = Eigen::Matrix2d::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
        S(1, 1) = -1.0;
    }
    SimilarityFit fit;
    auto& T = fit.transform;
    T.rotation = svd.matrixU() * S * svd.matrixV().transpose();
    T.scale = (svd.singularValues().asDiagonal() * S).trace() / var_x;
    if (!(T.scale > 0.0)) {
        throw Error(ErrorCode::DegenerateLandmarks, "no orientation-preserving similarity fits these landmarks");
    }
    T.translation = mu_y - T.scale * (T.rotation * mu_x);
    fit.rms_residual = rms_residual(T, source, target);
    return fit;
}

namespace {

void check_mask(const Frame& mask, int w, int h) {
    if (mask.channels != 1 || mask.width != w || mask.height != h) {
        throw Error(ErrorCode::DimensionMismatch, "mask must be single-channel " + std::to_string(w) + "x" +
                                                      std::to_string(h) + ", got " + std::to_string(mask.width) +
                                                      "x" + std::to_string(mask.height) + "x" +
                                                      std::to_string(mask.channels));
    }
}

std::uint8_t blend(double value, std::uint8_t alpha, std::uint8_t background) {
    const double a = alpha / 255.0;
    const double v = a * value + (1.0 - a) * background;
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

Frame warp_and_mask(const Frame& frame, const SimilarityTransform& T, int out_w, int out_h,
                    const std::optional<Frame>& mask, std::uint8_t background) {
    if (mask) {
        check_mask(*mask, out_w, out_h);
    }
    Frame out(out_w, out_h, frame.channels, background);
    const double max_x = frame.width - 1;
    const double max_y = frame.height - 1;
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const std::uint8_t alpha = mask ? mask->at(x, y) : 255;
            if (alpha == 0) {
                continue;
            }
            const Point2 p = T.invert(Point2(x, y));
            if (!(p.x() >= 0.0 && p.x() <= max_x && p.y() >= 0.0 && p.y() <= max_y)) {
                continue;
            }
            const int x0 = static_cast<int>(std::floor(p.x()));
            const int y0 = static_cast<int>(std::floor(p.y()));
            const double fx = p.x() - x0;
            const double fy = p.y() - y0;
            const int x1 = std::min(x0 + 1, frame.width - 1);
            const int y1 = std::min(y0 + 1, frame.height - 1);
            for (int c = 0; c < frame.channels; ++c) {
                const double top = (1.0 - fx) * frame.at(x0, y0, c) + fx * frame.at(x1, y0, c);
                const double bottom = (1.0 - fx) * frame.at(x0, y1, c) + fx * frame.at(x1, y1, c);
                out.at(x, y, c) = blend((1.0 - fy) * top + fy * bottom, alpha, background);
            }
        }
    }
    return out;
}

Frame apply_mask(const Frame& frame, const Frame& mask, std::uint8_t background) {
    check_mask(mask, frame.width, frame.height);
    Frame out = frame;
    for (int y = 0; y < frame.height; ++y) {
        for (int x = 0; x < frame.width; ++x) {
            for (int c = 0; c < frame.channels; ++c) {
                out.at(x, y, c) = blend(frame.at(x, y, c), mask.at(x, y), background);
            }
        }
    }
    return out;
}

}  // namespace avqoe
