#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "../support/fixtures.hpp"
#include "avqoe/error.hpp"
#include "avqoe/frechet.hpp"
#include "avqoe/objective_report.hpp"

using namespace avqoe;
namespace fs = std::filesystem;

namespace {

// Smooth texture so bilinear resampling stays close to the original.
Frame texture(int w, int h, double dx = 0, double dy = 0) {
    Frame f(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double u = x - dx, v = y - dy;
            const double g = 128 + 60 * std::sin(u / 5.0) * std::cos(v / 7.0);
            for (int c = 0; c < 3; ++c) {
                f.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(g + 10 * c, 0.0, 255.0));
            }
        }
    }
    return f;
}

void write_landmarks(const fs::path& p, int frames, double dx, double dy) {
    std::ofstream out(p);
    out << "frame,side,index,x,y\n";
    const double pts[][2] = {{10, 10}, {50, 12}, {30, 40}, {12, 50}, {48, 48}};
    for (int f = 0; f < frames; ++f) {
        for (int i = 0; i < 5; ++i) {
            out << f << ",ref," << i << ',' << pts[i][0] << ',' << pts[i][1] << '\n';
            out << f << ",deg," << i << ',' << pts[i][0] + dx << ',' << pts[i][1] + dy << '\n';
        }
    }
}

}  // namespace

TEST_CASE("identical directories give the psnr cap and ssim one") {
    avqoe::testing::TempDir dir("ident");
    fs::create_directories(dir / "ref/clip1");
    fs::create_directories(dir / "deg/clip1");
    for (int i = 0; i < 3; ++i) {
        const auto f = texture(64, 64, i, 0);
        write_png(dir / ("ref/clip1/f" + std::to_string(i) + ".png"), f);
        write_png(dir / ("deg/clip1/f" + std::to_string(i) + ".png"), f);
    }
    const auto rows = compute_directory_metrics({dir / "ref", dir / "deg"}, {});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].clip_id == "clip1");
    CHECK(rows[0].psnr_infinite);
    CHECK(rows[0].psnr == 100.0);
    CHECK(rows[0].ssim == doctest::Approx(1.0));
    CHECK_FALSE(rows[0].fid.has_value());
}

TEST_CASE("landmark alignment improves psnr on a shifted avatar") {
    avqoe::testing::TempDir dir("shift");
    fs::create_directories(dir / "ref/c");
    fs::create_directories(dir / "deg/c");
    fs::create_directories(dir / "lm");
    for (int i = 0; i < 2; ++i) {
        write_png(dir / ("ref/c/f" + std::to_string(i) + ".png"), texture(64, 64));
        write_png(dir / ("deg/c/f" + std::to_string(i) + ".png"), texture(64, 64, 3, 2));
    }
    write_landmarks(dir / "lm/c.csv", 2, 3, 2);
    MetricDirs dirs{dir / "ref", dir / "deg", dir / "lm"};
    const auto rows = compute_directory_metrics(dirs, {});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].psnr > rows[0].psnr_unaligned + 3.0);
    CHECK(rows[0].ssim > rows[0].ssim_unaligned);
}

TEST_CASE("embedding sidecars add fid and fvd columns") {
    avqoe::testing::TempDir dir("emb");
    fs::create_directories(dir / "ref/c");
    fs::create_directories(dir / "deg/c");
    fs::create_directories(dir / "emb");
    write_png(dir / "ref/c/f0.png", texture(32, 32));
    write_png(dir / "deg/c/f0.png", texture(32, 32, 1, 0));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z(0, 1);
    for (const std::string kind : {"fid", "fvd"}) {
        Eigen::MatrixXd real(50, 3), gen(50, 3);
        for (int i = 0; i < 50; ++i) {
            for (int j = 0; j < 3; ++j) {
                real(i, j) = z(rng);
                gen(i, j) = z(rng) + 1.0;
            }
        }
        write_embeddings(dir / ("emb/c." + kind + ".real.emb"), {real, "real"});
        write_embeddings(dir / ("emb/c." + kind + ".gen.emb"), {gen, "generated"});
    }
    MetricDirs dirs{dir / "ref", dir / "deg", std::nullopt, std::nullopt, dir / "emb"};
    const auto rows = compute_directory_metrics(dirs, {});
    REQUIRE(rows[0].fid);
    REQUIRE(rows[0].fvd);
    CHECK(*rows[0].fid > 1.0);
    const auto csv = clip_metrics_csv(rows, {"h", 0});
    CHECK(csv.find("fid") != std::string::npos);
    std::istringstream in(csv);
    CHECK(read_clip_metrics_csv(in) == rows);
}

TEST_CASE("subjective-objective correlation needs four models") {
    std::vector<ClipMetrics> clips;
    std::map<std::string, std::string> model_of;
    std::vector<VoteRecord> votes;
    for (int m = 0; m < 5; ++m) {
        ClipMetrics c;
        c.clip_id = "c" + std::to_string(m);
        c.psnr = 20 + m;
        c.ssim = 0.5 + 0.1 * m;
        clips.push_back(c);
        model_of[c.clip_id] = "m" + std::to_string(m);
        for (int r = 0; r < 3; ++r) {
            votes.push_back({c.clip_id, model_of[c.clip_id], "realistic", 1 + m, "r" + std::to_string(r), "run1"});
        }
    }
    const auto mos = stats::aggregate(votes, stats::Level::condition, 5);
    const auto entries = subjective_objective_report(model_metrics(clips, model_of), mos, {"realistic"},
                                                     Region::head_torso);
    bool saw_psnr = false;
    for (const auto& e : entries) {
        if (e.metric == "psnr") {
            saw_psnr = true;
            REQUIRE(e.pcc);
            CHECK(*e.pcc == doctest::Approx(1.0));
            CHECK(*e.kendall_tau_b == doctest::Approx(1.0));
        }
    }
    CHECK(saw_psnr);
    clips.resize(3);
    const auto few = stats::aggregate({votes.begin(), votes.begin() + 9}, stats::Level::condition, 5);
    CHECK_THROWS_AS(subjective_objective_report(model_metrics(clips, model_of), few, {"realistic"}, Region::face),
                    Error);
}
