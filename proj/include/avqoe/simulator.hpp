#pragma once

// Synthetic rater populations answering built sessions. Used to exercise
// cleansing, aggregation and the reproducibility analysis without a crowd.

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avqoe/cleansing.hpp"
#include "avqoe/session_builder.hpp"
#include "avqoe/stats.hpp"
#include "avqoe/study.hpp"

namespace avqoe::sim {

enum class GroundTruthMode { single_factor, independent };

struct GroundTruthConfig {
    GroundTruthMode mode = GroundTruthMode::single_factor;
    /// Model latent drawn uniformly in [latent_min, latent_max], as a
    /// fraction of the scale range above 1.
    double latent_min = 0.05;
    double latent_max = 0.9;
    double clip_offset_sd = 0.2;
    double item_offset_sd = 0.05;
    /// Round every true score to an integer.
    bool quantize = false;

    bool operator==(const GroundTruthConfig&) const = default;
};

enum class Archetype { honest, spammer, straight_liner, inattentive };

struct Mixture {
    double honest = 1.0;
    double spammer = 0.0;
    double straight_liner = 0.0;
    double inattentive = 0.0;

    bool operator==(const Mixture&) const = default;
};

struct HonestParams {
    double bias_sd = 0.3;
    double noise_sd = 0.7;
    /// Extra noise on the second answer to a repeated item.
    double repeat_noise_sd = 0.3;
    double playback_min = 1.0;
    double playback_max = 1.3;

    bool operator==(const HonestParams&) const = default;
};

struct SimConfig {
    std::uint64_t seed = 1;
    int runs = 1;
    GroundTruthConfig ground_truth;
    Mixture mixture;
    HonestParams honest;
    double spammer_playback_min = 0.2;
    double spammer_playback_max = 0.6;
    /// Probability that an inattentive rater misses each attention check.
    double inattentive_q = 0.8;
    /// Overrides the study's target_votes_per_clip when > 0.
    int raters_per_clip = 0;
    /// Reproducibility runs keep this many accepted vote groups per clip (0 = all).
    int accepted_votes_per_clip = 0;

    bool operator==(const SimConfig&) const = default;
};

/// Throws InvalidConfig for negative weights, weights not summing to 1 or
/// out-of-range parameters.
void validate(const SimConfig& sim);
SimConfig load_sim_config(const std::string& path);

struct GroundTruth {
    /// clip -> item -> true score within the scale
    std::map<std::string, std::map<std::string, double>> clip_scores;
    std::map<std::string, double> model_latent;
    std::map<std::string, std::string> clip_model;

    /// Mean of the clip scores of each model, per item.
    std::map<std::string, std::map<std::string, double>> condition_scores() const;
};

GroundTruth make_ground_truth(const StudyConfig& study, const GroundTruthConfig& cfg, std::uint64_t seed);

struct SimulatedRun {
    std::vector<Submission> submissions;
    std::vector<Archetype> archetypes;  // parallel to submissions
};

/// Deterministic for (study, sessions, sim, run_index). Each session is
/// answered by one fresh rater named R<run>-<n>.
SimulatedRun simulate_run(const StudyConfig& study, const std::vector<Session>& sessions, const SimConfig& sim,
                          const GroundTruth& truth, int run_index);

struct RunSummary {
    std::string run_id;
    stats::ScoreTable clip_scores;
    stats::ScoreTable condition_scores;
    CleansingReport report;
};

struct ReproducibilityResult {
    std::vector<RunSummary> runs;
    /// runs x runs: PCC above the diagonal, SRCC below, 1 on the diagonal.
    Eigen::MatrixXd clip_matrix;
    Eigen::MatrixXd condition_matrix;
    double mean_clip_pcc = 0.0;
    double mean_condition_pcc = 0.0;
};

/// Study config as used by a simulation: raters_per_clip, when set, overrides
/// the vote target.
StudyConfig effective_study(const StudyConfig& study, const SimConfig& sim);

/// Requires n_runs >= 2 (InvalidConfig otherwise). Runs draw disjoint rater
/// pools; MOS vectors are compared over (entity, item) pairs present in both.
ReproducibilityResult reproducibility_experiment(const StudyConfig& study, const SimConfig& sim, int n_runs);

/// Keeps `per_clip` accepted vote groups per clip, chosen by a seeded shuffle.
std::vector<VoteRecord> subsample_votes(const std::vector<VoteRecord>& votes, int per_clip, std::uint64_t seed);

Json reproducibility_json(const ReproducibilityResult& r, const Provenance& prov);

NLOHMANN_JSON_SERIALIZE_ENUM(GroundTruthMode, {{GroundTruthMode::single_factor, "single_factor"},
                                               {GroundTruthMode::independent, "independent"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Archetype, {{Archetype::honest, "honest"},
                                         {Archetype::spammer, "spammer"},
                                         {Archetype::straight_liner, "straight_liner"},
                                         {Archetype::inattentive, "inattentive"}})
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GroundTruthConfig, mode, latent_min, latent_max, clip_offset_sd,
                                                item_offset_sd, quantize)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Mixture, honest, spammer, straight_liner, inattentive)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(HonestParams, bias_sd, noise_sd, repeat_noise_sd, playback_min,
                                                playback_max)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SimConfig, seed, runs, ground_truth, mixture, honest,
                                                spammer_playback_min, spammer_playback_max, inattentive_q,
                                                raters_per_clip, accepted_votes_per_clip)

}  // namespace avqoe::sim
