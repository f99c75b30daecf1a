#include <doctest.h>

#include <random>

#include "../support/oracles.hpp"
#include "avqoe/error.hpp"
#include "avqoe/image_quality.hpp"

using namespace avqoe;

namespace {

Frame noise_frame(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(0, 255);
    Frame f(w, h, 1);
    for (auto& p : f.pixels) {
        p = static_cast<std::uint8_t>(d(rng));
    }
    return f;
}

std::vector<double> as_doubles(const Frame& f) { return {f.pixels.begin(), f.pixels.end()}; }

}  // namespace

TEST_CASE("identical frames hit the psnr cap and ssim one") {
    const auto f = noise_frame(32, 32, 1);
    const auto p = psnr(f, f);
    CHECK(p.infinite);
    CHECK(p.db == kPsnrCapDb);
    CHECK(ssim(f, f) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("uniform +1 offset gives 48.13 dB") {
    Frame a(20, 20, 3, 100);
    Frame b(20, 20, 3, 101);
    const auto p = psnr(a, b);
    CHECK(p.mse == doctest::Approx(1.0));
    CHECK(std::abs(p.db - 48.13) <= 0.01);
    CHECK(p.db == doctest::Approx(oracle::psnr_db(1.0)).epsilon(1e-12));
}

TEST_CASE("psnr matches the closed form on random noise") {
    const auto a = noise_frame(24, 16, 2);
    const auto b = noise_frame(24, 16, 3);
    double mse = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = double(a.pixels[i]) - double(b.pixels[i]);
        mse += d * d;
    }
    mse /= a.pixels.size();
    CHECK(psnr(a, b).db == doctest::Approx(oracle::psnr_db(mse)).epsilon(1e-12));
}

TEST_CASE("ssim equals a direct window computation") {
    const auto a = noise_frame(30, 25, 4);
    auto b = a;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0, 20);
    for (auto& p : b.pixels) {
        p = static_cast<std::uint8_t>(std::clamp(p + n(rng), 0.0, 255.0));
    }
    CHECK(ssim(a, b) == doctest::Approx(oracle::ssim(as_doubles(a), as_doubles(b), 30, 25)).epsilon(1e-9));
}

TEST_CASE("shape errors") {
    CHECK_THROWS_AS(psnr(Frame(4, 4, 1), Frame(5, 4, 1)), Error);
    CHECK_THROWS_AS(ssim(Frame(8, 8, 1), Frame(8, 8, 1)), Error);
    CHECK_THROWS_AS(video_metric({Frame(12, 12, 1)}, {}, Metric::psnr), Error);
}

TEST_CASE("video pooling") {
    const std::vector<Frame> ref{Frame(12, 12, 1, 10), Frame(12, 12, 1, 10)};
    const std::vector<Frame> deg{Frame(12, 12, 1, 11), Frame(12, 12, 1, 13)};
    const double db_mean = (oracle::psnr_db(1) + oracle::psnr_db(9)) / 2;
    CHECK(video_metric(ref, deg, Metric::psnr) == doctest::Approx(db_mean));
    CHECK(video_metric(ref, deg, Metric::psnr, PsnrPooling::pooled_mse) == doctest::Approx(oracle::psnr_db(5)));
}
