#include <doctest.h>

#include <Eigen/Geometry>
#include <random>

#include "avqoe/alignment.hpp"
#include "avqoe/error.hpp"

using namespace avqoe;

TEST_CASE("similarity round trip recovers random transforms") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> scale(0.5, 2.0), angle(-3.0, 3.0), shift(-50, 50), coord(0, 200);
    for (int trial = 0; trial < 100; ++trial) {
        const auto truth = SimilarityTransform::from_params(scale(rng), angle(rng), {shift(rng), shift(rng)});
        std::vector<Point2> src, dst;
        for (int k = 0; k < 68; ++k) {
            src.emplace_back(coord(rng), coord(rng));
            dst.push_back(truth.apply(src.back()));
        }
        const auto fit = estimate_similarity(src, dst);
        CHECK(std::abs(fit.transform.scale - truth.scale) <= 1e-9);
        CHECK(std::abs(fit.transform.angle_rad() - truth.angle_rad()) <= 1e-9);
        CHECK((fit.transform.translation - truth.translation).norm() <= 1e-9);
        CHECK(fit.rms_residual <= 1e-9);
    }
}

TEST_CASE("least-squares fit agrees with Eigen::umeyama on noisy points") {
    std::mt19937_64 rng(18);
    std::normal_distribution<double> noise(0, 0.5);
    std::uniform_real_distribution<double> coord(0, 100);
    const auto truth = SimilarityTransform::from_params(1.3, 0.4, {5, -7});
    std::vector<Point2> src, dst;
    Eigen::Matrix2Xd a(2, 30), b(2, 30);
    for (int k = 0; k < 30; ++k) {
        src.emplace_back(coord(rng), coord(rng));
        dst.push_back(truth.apply(src.back()) + Point2(noise(rng), noise(rng)));
        a.col(k) = src.back();
        b.col(k) = dst.back();
    }
    const Eigen::Matrix3d ref = Eigen::umeyama(a, b, true);
    const auto fit = estimate_similarity(src, dst);
    const Eigen::Matrix2d sr = fit.transform.scale * fit.transform.rotation;
    CHECK((sr - ref.topLeftCorner<2, 2>()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((fit.transform.translation - ref.topRightCorner<2, 1>()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("degenerate landmark sets are rejected") {
    CHECK_THROWS_AS(estimate_similarity({{0, 0}, {1, 1}}, {{0, 0}, {1, 1}}), Error);
    CHECK_THROWS_AS(estimate_similarity({{0, 0}, {1, 1}, {2, 2}}, {{0, 0}, {1, 1}, {3, 3}}), Error);
    CHECK_THROWS_AS(estimate_similarity({{1, 1}, {1, 1}, {1, 1}}, {{0, 0}, {1, 0}, {0, 1}}), Error);
    CHECK_THROWS_AS(estimate_similarity({{0, 0}, {1, 0}, {0, 1}}, {{0, 0}, {1, 0}}), Error);
}

TEST_CASE("warp is exact for identity and integer shifts") {
    Frame f(16, 12, 1);
    for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 16; ++x) {
            f.at(x, y) = static_cast<std::uint8_t>(x * 10 + y);
        }
    }
    CHECK(warp_and_mask(f, {}, 16, 12) == f);
    const auto shifted = warp_and_mask(f, SimilarityTransform::from_params(1.0, 0.0, {3, 2}), 16, 12, std::nullopt, 7);
    CHECK(shifted.at(5, 4) == f.at(2, 2));
    CHECK(shifted.at(0, 0) == 7);
}

TEST_CASE("mask blends towards the background") {
    Frame f(4, 4, 1, 200);
    Frame mask(4, 4, 1, 0);
    mask.at(1, 1) = 255;
    const auto out = apply_mask(f, mask, 100);
    CHECK(out.at(1, 1) == 200);
    CHECK(out.at(0, 0) == 100);
}
