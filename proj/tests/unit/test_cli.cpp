#include <doctest.h>

#include <fstream>
#include <map>
#include <random>
#include <set>

#include "../support/fixtures.hpp"
#include "../support/process.hpp"
#include "avqoe/cleansing.hpp"
#include "avqoe/frame.hpp"
#include "avqoe/frechet.hpp"
#include "avqoe/session_builder.hpp"
#include "avqoe/simulator.hpp"

using namespace avqoe;
using namespace avqoe::testing;

namespace {

const std::string kCli = AVQOE_CLI_PATH;

std::string cli(const std::string& args) { return quote(kCli) + " " + args; }

void write_json(const std::filesystem::path& p, const Json& j) { std::ofstream(p) << j.dump(2); }

std::map<std::string, int> coverage_of(const std::string& manifest_path) {
    const auto m = load_manifest(manifest_path);
    std::map<std::string, int> out;
    for (const auto& s : m.sessions) {
        for (const auto& slot : s.playlist) {
            out[slot.clip.clip_id] += slot.kind == SlotKind::test;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("build writes manifests deterministically") {
    TempDir dir("cli-build");
    write_json(dir / "study.json", Json(make_study()));
    const auto study = (dir / "study.json").string();
    REQUIRE(run_command(cli("build " + study + " --seed 4 --out " + (dir / "a").string())).exit_code == 0);
    REQUIRE(run_command(cli("build " + study + " --seed 4 --out " + (dir / "b").string())).exit_code == 0);
    REQUIRE(run_command(cli("build " + study + " --seed 5 --out " + (dir / "c").string())).exit_code == 0);
    const auto a = read_text((dir / "a/manifest.json").string());
    CHECK(a == read_text((dir / "b/manifest.json").string()));
    CHECK(a != read_text((dir / "c/manifest.json").string()));
    CHECK(a.find("\"provenance\"") != std::string::npos);
    CHECK(read_text((dir / "a/assignments.csv").string()).rfind("# avqoe ", 0) == 0);
    std::vector<int> ca, cc;
    for (const auto& [k, n] : coverage_of((dir / "a/manifest.json").string())) ca.push_back(n);
    for (const auto& [k, n] : coverage_of((dir / "c/manifest.json").string())) cc.push_back(n);
    std::sort(ca.begin(), ca.end());
    std::sort(cc.begin(), cc.end());
    CHECK(ca == cc);
}

TEST_CASE("build exit codes") {
    TempDir dir("cli-codes");
    auto config = make_study();
    config.gold_specs.clear();
    write_json(dir / "nogold.json", Json(config));
    const auto r = run_command(cli("build " + (dir / "nogold.json").string() + " --out " + (dir / "o").string()));
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("MissingGoldSpec") != std::string::npos);
    CHECK(run_command(cli("build")).exit_code == 2);
    CHECK(run_command(cli("frobnicate")).exit_code == 2);
}

TEST_CASE("parse-results: empty input, corrupt line, simulated contamination") {
    TempDir dir("cli-parse");
    const auto config = make_study();
    write_json(dir / "study.json", Json(config));
    sim::SimConfig s;
    s.seed = 3;
    s.mixture = {0.6, 0.25, 0.1, 0.05};
    write_json(dir / "sim.json", Json(s));
    REQUIRE(run_command(cli("simulate " + (dir / "study.json").string() + " --sim " + (dir / "sim.json").string() +
                            " --out " + (dir / "sim").string()))
                .exit_code == 0);
    const auto manifest = (dir / "sim/manifest.json").string();

    std::ofstream(dir / "empty.jsonl").close();
    auto r = run_command(cli("parse-results " + (dir / "empty.jsonl").string() + " --manifest " + manifest +
                             " --out " + (dir / "empty").string()));
    CHECK(r.exit_code == 0);
    const auto empty_report = Json::parse(read_text((dir / "empty/report.json").string()));
    CHECK(empty_report["total"] == 0);
    const auto empty_votes = read_text((dir / "empty/votes.csv").string());
    CHECK(std::count(empty_votes.begin(), empty_votes.end(), '\n') == 2);

    const auto good = read_text((dir / "sim/submissions.jsonl").string());
    std::ofstream(dir / "corrupt.jsonl") << good.substr(0, good.find('\n', good.find('\n') + 1) + 1) << "{\"oops\": \n";
    r = run_command(cli("parse-results " + (dir / "corrupt.jsonl").string() + " --manifest " + manifest + " --out " +
                        (dir / "bad").string()));
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("line 3") != std::string::npos);

    r = run_command(cli("parse-results " + (dir / "sim/submissions.jsonl").string() + " --manifest " + manifest +
                        " --out " + (dir / "res").string()));
    REQUIRE(r.exit_code == 0);
    const auto report = Json::parse(read_text((dir / "res/report.json").string()));
    std::set<std::string> rejected;
    for (const auto& e : report["rejected"]) {
        rejected.insert(e["rater_id"]);
    }
    std::istringstream raters(read_text((dir / "sim/raters.csv").string()));
    std::string line;
    int contaminated = 0, caught = 0, honest = 0, honest_rejected = 0;
    while (std::getline(raters, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("rater_id", 0) == 0) {
            continue;
        }
        const auto fields = line.substr(line.rfind(',') + 1);
        const auto rater = line.substr(0, line.find(','));
        if (fields == "honest") {
            ++honest;
            honest_rejected += rejected.count(rater);
        } else {
            ++contaminated;
            caught += rejected.count(rater);
        }
    }
    CHECK(caught >= 0.95 * contaminated);
    CHECK(honest_rejected <= 0.1 * honest);
    CHECK(report["acceptance_rate"].get<double>() ==
          doctest::Approx(double(report["accepted"].size()) / (report["accepted"].size() + report["rejected"].size())));
}

TEST_CASE("stats: regression, realism filter and pca") {
    TempDir dir("cli-stats");
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> realism(1.0, 4.5);
    std::normal_distribution<double> noise(0, 0.1);
    std::vector<VoteRecord> votes;
    // Integer votes whose condition means follow affinity = 0.8 realism + 0.5.
    for (int m = 0; m < 20; ++m) {
        const std::string model = "m" + std::to_string(m);
        const double r = realism(rng);
        const double a = std::clamp(0.8 * r + 0.5 + noise(rng), 1.0, 5.0);
        const int votes_per = 40;
        for (int k = 0; k < votes_per; ++k) {
            const double frac_r = r - std::floor(r), frac_a = a - std::floor(a);
            const int vr = static_cast<int>(std::floor(r)) + (k < frac_r * votes_per ? 1 : 0);
            const int va = static_cast<int>(std::floor(a)) + (k < frac_a * votes_per ? 1 : 0);
            votes.push_back({model + "_c", model, "realistic", std::min(vr, 5), "r" + std::to_string(k), "run1"});
            votes.push_back({model + "_c", model, "affinity", std::min(va, 5), "r" + std::to_string(k), "run1"});
        }
    }
    std::ofstream(dir / "votes.csv") << votes_csv(votes, {"synthetic", 2});
    const auto r = run_command(cli("stats " + (dir / "votes.csv").string() +
                                   " --regress realistic affinity --filter-realism '>2' --pca --out " +
                                   (dir / "out").string()));
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const auto reg = Json::parse(read_text((dir / "out/regression.json").string()));
    CHECK(reg["r_squared"].get<double>() >= 0.95);
    CHECK(reg["slope"].get<double>() > 0);
    const auto pca = Json::parse(read_text((dir / "out/pca.json").string()));
    CHECK(pca.contains("loadings"));
    CHECK(pca.contains("explained_variance_ratio"));
    const auto corr = read_text((dir / "out/correlations.csv").string());
    CHECK(corr.rfind("# avqoe ", 0) == 0);
    CHECK(corr.find("config=synthetic seed=2") != std::string::npos);
}

TEST_CASE("metrics on identical frames and with embedding sidecars") {
    TempDir dir("cli-metrics");
    std::filesystem::create_directories(dir / "ref/c1");
    std::filesystem::create_directories(dir / "deg/c1");
    std::filesystem::create_directories(dir / "emb");
    Frame f(32, 32, 3);
    for (std::size_t i = 0; i < f.pixels.size(); ++i) {
        f.pixels[i] = static_cast<std::uint8_t>((i * 37) % 251);
    }
    write_png(dir / "ref/c1/0001.png", f);
    write_png(dir / "deg/c1/0001.png", f);
    auto r = run_command(cli("metrics --ref-dir " + (dir / "ref").string() + " --deg-dir " + (dir / "deg").string() +
                             " --out " + (dir / "m1").string()));
    REQUIRE(r.exit_code == 0);
    const auto csv = read_text((dir / "m1/clip_metrics.csv").string());
    CHECK(csv.find(",100,") != std::string::npos);
    Eigen::MatrixXd real = Eigen::MatrixXd::Random(20, 4), gen = Eigen::MatrixXd::Random(20, 4).array() + 1.0;
    for (const std::string kind : {"fid", "fvd"}) {
        write_embeddings(dir / ("emb/c1." + kind + ".real.emb"), {real, "real"});
        write_embeddings(dir / ("emb/c1." + kind + ".gen.emb"), {gen, "generated"});
    }
    r = run_command(cli("metrics --ref-dir " + (dir / "ref").string() + " --deg-dir " + (dir / "deg").string() +
                        " --embeddings " + (dir / "emb").string() + " --out " + (dir / "m2").string()));
    REQUIRE(r.exit_code == 0);
    const auto with = read_text((dir / "m2/clip_metrics.csv").string());
    const auto header = with.substr(with.find('\n') + 1, with.find('\n', with.find('\n') + 1) - with.find('\n') - 1);
    CHECK(header.find("fid") != std::string::npos);
    CHECK(header.find("fvd") != std::string::npos);
}
