#include <doctest.h>

#include <map>

#include "../support/fixtures.hpp"
#include "avqoe/error.hpp"
#include "avqoe/simulator.hpp"

using namespace avqoe;
using avqoe::testing::make_study;

namespace {

sim::SimConfig contaminated() {
    sim::SimConfig s;
    s.seed = 21;
    s.mixture = {0.6, 0.25, 0.10, 0.05};
    s.ground_truth.latent_min = 0.25;
    s.ground_truth.latent_max = 0.75;
    return s;
}

}  // namespace

TEST_CASE("simulation is deterministic") {
    const auto study = make_study();
    const auto sessions = build_sessions(study, 1);
    const auto s = contaminated();
    const auto truth = sim::make_ground_truth(study, s.ground_truth, s.seed);
    const auto a = sim::simulate_run(study, sessions, s, truth, 0);
    const auto b = sim::simulate_run(study, sessions, s, truth, 0);
    CHECK(a.submissions == b.submissions);
    CHECK(a.archetypes == b.archetypes);
    const auto c = sim::simulate_run(study, sessions, s, truth, 1);
    CHECK(c.submissions != a.submissions);
    CHECK(c.submissions[0].rater_id != a.submissions[0].rater_id);
}

TEST_CASE("ground truth stays on the scale and single factor ties items together") {
    const auto study = make_study();
    sim::GroundTruthConfig g;
    g.clip_offset_sd = 0;
    const auto truth = sim::make_ground_truth(study, g, 4);
    for (const auto& [clip, items] : truth.clip_scores) {
        for (const auto& [item, v] : items) {
            CHECK(v >= 1.0);
            CHECK(v <= 5.0);
        }
    }
    const auto cond = truth.condition_scores();
    std::vector<double> a, b;
    for (const auto& [model, items] : cond) {
        a.push_back(items.at("realistic"));
        b.push_back(items.at("affinity"));
    }
    CHECK(stats::pcc(a, b) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("archetype shares follow the mixture and cleansing catches contamination") {
    auto study = make_study({.models = 10, .clips_per_model = 4, .votes_per_clip = 60, .min_accepted = 10});
    const auto sessions = build_sessions(study, 2);
    const auto s = contaminated();
    const auto truth = sim::make_ground_truth(study, s.ground_truth, s.seed);
    const auto run = sim::simulate_run(study, sessions, s, truth, 0);
    std::map<sim::Archetype, int> n, rejected;
    for (std::size_t i = 0; i < run.submissions.size(); ++i) {
        ++n[run.archetypes[i]];
        const auto v = validate_submission(run.submissions[i], sessions[i], study);
        rejected[run.archetypes[i]] += !v.accepted();
    }
    const double total = static_cast<double>(run.submissions.size());
    CHECK(n[sim::Archetype::honest] / total == doctest::Approx(0.6).epsilon(0.15));
    CHECK(n[sim::Archetype::spammer] / total == doctest::Approx(0.25).epsilon(0.25));
    CHECK(rejected[sim::Archetype::spammer] == n[sim::Archetype::spammer]);
    CHECK(rejected[sim::Archetype::straight_liner] == n[sim::Archetype::straight_liner]);
    CHECK(rejected[sim::Archetype::honest] < 0.1 * n[sim::Archetype::honest]);
}

TEST_CASE("subsampling keeps the requested vote groups per clip") {
    const auto study = make_study();
    const auto sessions = build_sessions(study, 3);
    sim::SimConfig s;
    const auto truth = sim::make_ground_truth(study, s.ground_truth, 1);
    const SessionManifest manifest{study, 3, sessions};
    const auto cleansed = cleanse(sim::simulate_run(study, sessions, s, truth, 0).submissions, manifest);
    const auto kept = sim::subsample_votes(cleansed.votes, 5, 9);
    const auto per_clip = votes_per_clip(kept, study);
    for (const auto& [clip, k] : per_clip) {
        CHECK(k == 5);
    }
    CHECK(kept.size() == study.clips.size() * 5 * study.items.size());
    CHECK(sim::subsample_votes(cleansed.votes, 5, 9) == kept);
}

TEST_CASE("config validation") {
    sim::SimConfig s;
    s.mixture = {0.5, 0.1, 0.1, 0.1};
    CHECK_THROWS_AS(sim::validate(s), Error);
    s = {};
    s.inattentive_q = 1.5;
    CHECK_THROWS_AS(sim::validate(s), Error);
    CHECK_THROWS_AS(sim::reproducibility_experiment(make_study(), sim::SimConfig{}, 1), Error);
}
