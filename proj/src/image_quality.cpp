#include "avqoe/image_quality.hpp"

#include <array>
#include <cmath>

#include "avqoe/error.hpp"

namespace avqoe {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
constexpr double kC2 = (0.03 * 255) * (0.03 * 255);

void require_same(const Frame& a, const Frame& b) {
    if (!a.same_shape(b)) {
        throw Error(ErrorCode::DimensionMismatch, std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                                                      std::to_string(a.channels) + " vs " + std::to_string(b.width) +
                                                      "x" + std::to_string(b.height) + "x" +
                                                      std::to_string(b.channels));
    }
}

double psnr_from_mse(double mse) {
    if (mse == 0.0) {
        return kPsnrCapDb;
    }
    return std::min(kPsnrCapDb, 10.0 * std::log10(255.0 * 255.0 / mse));
}

std::array<double, kWin> gaussian_kernel() {
    std::array<double, kWin> k{};
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        k[i] = std::exp(-d * d / (2 * kSigma * kSigma));
        sum += k[i];
    }
    for (double& v : k) {
        v /= sum;
    }
    return k;
}

// 'Valid' separable filtering: output is (w-10) x (h-10).
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h, const std::array<double, kWin>& k) {
    const int ow = w - kWin + 1;
    const int oh = h - kWin + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y) {
        const double* row = img.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < kWin; ++i) {
                s += k[i] * row[x + i];
            }
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < kWin; ++i) {
                s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            }
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    return out;
}

}  // namespace

PsnrResult psnr(const Frame& ref, const Frame& deg) {
    require_same(ref, deg);
    double ss = 0.0;
    for (std::size_t i = 0; i < ref.pixels.size(); ++i) {
        const double d = static_cast<double>(ref.pixels[i]) - deg.pixels[i];
        ss += d * d;
    }
    PsnrResult r;
    r.mse = ss / static_cast<double>(ref.pixels.size());
    r.infinite = r.mse == 0.0;
    r.db = psnr_from_mse(r.mse);
    return r;
}

double ssim(const Frame& ref, const Frame& deg) {
    require_same(ref, deg);
    if (ref.width < kWin || ref.height < kWin) {
        throw Error(ErrorCode::FrameTooSmall, "SSIM needs at least 11x11 pixels");
    }
    const int w = ref.width;
    const int h = ref.height;
    const auto x = ref.luma();
    const auto y = deg.luma();
    std::vector<double> xx(x.size());
    std::vector<double> yy(x.size());
    std::vector<double> xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto k = gaussian_kernel();
    const auto mx = filter_valid(x, w, h, k);
    const auto my = filter_valid(y, w, h, k);
    const auto sxx = filter_valid(xx, w, h, k);
    const auto syy = filter_valid(yy, w, h, k);
    const auto sxy = filter_valid(xy, w, h, k);

    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double mu_x2 = mx[i] * mx[i];
        const double mu_y2 = my[i] * my[i];
        const double mu_xy = mx[i] * my[i];
        const double var_x = sxx[i] - mu_x2;
        const double var_y = syy[i] - mu_y2;
        const double cov = sxy[i] - mu_xy;
        total += ((2 * mu_xy + kC1) * (2 * cov + kC2)) / ((mu_x2 + mu_y2 + kC1) * (var_x + var_y + kC2));
    }
    return total / static_cast<double>(mx.size());
}

double video_metric(const std::vector<Frame>& ref, const std::vector<Frame>& deg, Metric metric, PsnrPooling pooling) {
    if (ref.empty() || ref.size() != deg.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(ref.size()) + " reference frames vs " +
                                                   std::to_string(deg.size()) + " degraded frames");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (metric == Metric::ssim) {
            sum += ssim(ref[i], deg[i]);
        } else {
            const auto p = psnr(ref[i], deg[i]);
            sum += pooling == PsnrPooling::db_mean ? p.db : p.mse;
        }
    }
    const double m = sum / static_cast<double>(ref.size());
    return metric == Metric::psnr && pooling == PsnrPooling::pooled_mse ? psnr_from_mse(m) : m;
}

}  // namespace avqoe
