#include "avqoe/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <tuple>

#include "avqoe/error.hpp"
#include "avqoe/rng.hpp"

namespace avqoe::sim {

namespace {

constexpr std::int64_t kEpoch = 1700000000;

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidConfig, "sim config: " + what); }

int clamp_vote(double v, int scale) { return static_cast<int>(std::clamp(std::lround(v), 1L, static_cast<long>(scale))); }

int uniform_vote(std::mt19937_64& rng, int scale) { return std::uniform_int_distribution<int>(1, scale)(rng); }

int wrong_vote(std::mt19937_64& rng, int expected, int scale) {
    const int v = std::uniform_int_distribution<int>(1, scale - 1)(rng);
    return v >= expected ? v + 1 : v;
}

struct Rater {
    Archetype kind = Archetype::honest;
    double bias = 0.0;
    int constant = 1;
};

Archetype draw_archetype(std::mt19937_64& rng, const Mixture& m) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = m.honest;
    if (u < acc) {
        return Archetype::honest;
    }
    acc += m.spammer;
    if (u < acc) {
        return Archetype::spammer;
    }
    acc += m.straight_liner;
    if (u < acc) {
        return Archetype::straight_liner;
    }
    return m.inattentive > 0.0 ? Archetype::inattentive
                               : (m.straight_liner > 0.0 ? Archetype::straight_liner
                                                         : (m.spammer > 0.0 ? Archetype::spammer : Archetype::honest));
}

// True score the rater perceives for an item of this slot before personal noise.
double slot_truth(const Slot& slot, const std::string& item, const GroundTruth& truth, int scale) {
    const double mid = (1.0 + scale) / 2.0;
    switch (slot.kind) {
        case SlotKind::test: {
            const auto c = truth.clip_scores.find(slot.clip.clip_id);
            if (c != truth.clip_scores.end()) {
                const auto s = c->second.find(item);
                if (s != c->second.end()) {
                    return s->second;
                }
            }
            return mid;
        }
        case SlotKind::gold: {
            for (const auto& g : slot.gold) {
                if (g.item_id == item) {
                    return g.expected_score;
                }
            }
            return slot.gold.empty() ? mid : slot.gold.front().expected_score;
        }
        case SlotKind::trapping:
            return mid;
    }
    return mid;
}

bool passes_check(const Rater& r, std::mt19937_64& rng, double q) {
    return r.kind != Archetype::inattentive || std::bernoulli_distribution(1.0 - q)(rng);
}

}  // namespace

void validate(const SimConfig& s) {
    const auto& m = s.mixture;
    for (double w : {m.honest, m.spammer, m.straight_liner, m.inattentive}) {
        if (!(w >= 0.0)) {
            bad("mixture weights must be non-negative");
        }
    }
    if (std::abs(m.honest + m.spammer + m.straight_liner + m.inattentive - 1.0) > 1e-9) {
        bad("mixture weights must sum to 1");
    }
    if (s.runs < 1) {
        bad("runs must be >= 1");
    }
    if (s.honest.bias_sd < 0 || s.honest.noise_sd < 0 || s.honest.repeat_noise_sd < 0) {
        bad("noise parameters must be non-negative");
    }
    if (!(s.honest.playback_min > 0 && s.honest.playback_min <= s.honest.playback_max) ||
        !(s.spammer_playback_min > 0 && s.spammer_playback_min <= s.spammer_playback_max)) {
        bad("playback ranges must be positive and ordered");
    }
    if (s.inattentive_q < 0 || s.inattentive_q > 1) {
        bad("inattentive_q must be a probability");
    }
    const auto& g = s.ground_truth;
    if (!(g.latent_min >= 0 && g.latent_min <= g.latent_max && g.latent_max <= 1) || g.clip_offset_sd < 0 ||
        g.item_offset_sd < 0) {
        bad("ground truth latent range must lie in [0, 1] and offsets must be non-negative");
    }
    if (s.raters_per_clip < 0 || s.accepted_votes_per_clip < 0) {
        bad("vote counts must be non-negative");
    }
}

SimConfig load_sim_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path);
    }
    SimConfig s;
    try {
        s = Json::parse(in).get<SimConfig>();
    } catch (const Json::exception& e) {
        bad(e.what());
    }
    validate(s);
    return s;
}

std::map<std::string, std::map<std::string, double>> GroundTruth::condition_scores() const {
    std::map<std::string, std::map<std::string, std::vector<double>>> acc;
    for (const auto& [clip, items] : clip_scores) {
        for (const auto& [item, score] : items) {
            acc[clip_model.at(clip)][item].push_back(score);
        }
    }
    std::map<std::string, std::map<std::string, double>> out;
    for (const auto& [model, items] : acc) {
        for (const auto& [item, scores] : items) {
            out[model][item] = stats::mean(scores);
        }
    }
    return out;
}

GroundTruth make_ground_truth(const StudyConfig& study, const GroundTruthConfig& cfg, std::uint64_t seed) {
    auto rng = substream(seed, 0x67740000u);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> latent(cfg.latent_min, cfg.latent_max);

    std::set<std::string> models;
    for (const auto& c : study.clips) {
        models.insert(c.model_id);
    }
    GroundTruth gt;
    std::map<std::string, std::map<std::string, double>> model_item_latent;
    for (const auto& m : models) {
        gt.model_latent[m] = latent(rng);
        for (const auto& item : study.items) {
            model_item_latent[m][item] = cfg.mode == GroundTruthMode::independent ? latent(rng) : gt.model_latent[m];
        }
    }
    std::map<std::string, double> item_offset;
    for (const auto& item : study.items) {
        item_offset[item] = cfg.item_offset_sd * unit(rng);
    }
    const double range = study.scale_points - 1.0;
    for (const auto& c : study.clips) {
        const double clip_offset = cfg.clip_offset_sd * unit(rng);
        auto& scores = gt.clip_scores[c.clip_id];
        for (const auto& item : study.items) {
            double v = 1.0 + range * model_item_latent[c.model_id][item] + clip_offset + item_offset[item];
            v = std::clamp(v, 1.0, static_cast<double>(study.scale_points));
            scores[item] = cfg.quantize ? std::round(v) : v;
        }
    }
    for (const auto& c : study.clips) {
        gt.clip_model[c.clip_id] = c.model_id;
    }
    return gt;
}

SimulatedRun simulate_run(const StudyConfig& study, const std::vector<Session>& sessions, const SimConfig& sim,
                          const GroundTruth& truth, int run_index) {
    const int scale = study.scale_points;
    const auto& hp = sim.honest;
    SimulatedRun out;
    for (std::size_t si = 0; si < sessions.size(); ++si) {
        const Session& session = sessions[si];
        auto rng = substream(sim.seed, (static_cast<std::uint64_t>(run_index) + 1) << 32 | si);
        std::normal_distribution<double> unit(0.0, 1.0);

        Rater rater;
        rater.kind = draw_archetype(rng, sim.mixture);
        rater.bias = hp.bias_sd * unit(rng);
        rater.constant = uniform_vote(rng, scale);

        Submission sub;
        sub.assignment_id = session.assignment_id;
        sub.session_id = session.session_id;
        char rid[48];
        std::snprintf(rid, sizeof rid, "R%d-%05zu", run_index + 1, si + 1);
        sub.rater_id = rid;
        sub.run_id = "run" + std::to_string(run_index + 1);
        sub.verification_code = session.verification_code;
        sub.started_at = kEpoch + static_cast<std::int64_t>(run_index) * 86400 + static_cast<std::int64_t>(si) * 7;
        sub.submitted_at = sub.started_at + 900;

        for (const auto& slot : session.playlist) {
            const auto& items = slot.items;
            std::vector<int> answers(items.items.size(), 1);
            std::vector<double> perceived(items.items.size(), 0.0);
            std::optional<std::size_t> instructed;
            if (slot.kind == SlotKind::trapping && slot.overlay) {
                for (std::size_t p = 0; p < items.items.size() && !instructed; ++p) {
                    if (items.items[p] == slot.overlay->item_id) {
                        instructed = p;
                    }
                }
            }
            for (std::size_t p = 0; p < items.items.size(); ++p) {
                const bool is_trap = items.trap_index && p == *items.trap_index;
                const bool is_repeat = items.repeat_index && p == *items.repeat_index;
                if (rater.kind == Archetype::spammer) {
                    answers[p] = uniform_vote(rng, scale);
                    continue;
                }
                if (rater.kind == Archetype::straight_liner) {
                    answers[p] = rater.constant;
                    continue;
                }
                if (is_trap) {
                    answers[p] = passes_check(rater, rng, sim.inattentive_q)
                                     ? slot.trap_expected_score
                                     : wrong_vote(rng, slot.trap_expected_score, scale);
                    continue;
                }
                if (instructed && p == *instructed) {
                    answers[p] = passes_check(rater, rng, sim.inattentive_q) ? slot.overlay->score
                                                                              : wrong_vote(rng, slot.overlay->score, scale);
                    continue;
                }
                if (is_repeat && items.repeat_source_index) {
                    const double v = perceived[*items.repeat_source_index] + hp.repeat_noise_sd * unit(rng);
                    answers[p] = clamp_vote(v, scale);
                    continue;
                }
                perceived[p] = slot_truth(slot, items.items[p], truth, scale) + rater.bias + hp.noise_sd * unit(rng);
                answers[p] = clamp_vote(perceived[p], scale);
            }
            const bool fast = rater.kind == Archetype::spammer;
            std::uniform_real_distribution<double> ratio(fast ? sim.spammer_playback_min : hp.playback_min,
                                                         fast ? sim.spammer_playback_max : hp.playback_max);
            sub.playback_s.push_back(ratio(rng) * slot.clip.duration_s);
            sub.answers.push_back(std::move(answers));
        }
        out.submissions.push_back(std::move(sub));
        out.archetypes.push_back(rater.kind);
    }
    return out;
}

std::vector<VoteRecord> subsample_votes(const std::vector<VoteRecord>& votes, int per_clip, std::uint64_t seed) {
    if (per_clip <= 0) {
        return votes;
    }
    using Group = std::tuple<std::string, std::string>;  // (rater, run)
    std::map<std::string, std::set<Group>> groups;
    for (const auto& v : votes) {
        groups[v.clip_id].insert({v.rater_id, v.run_id});
    }
    auto rng = substream(seed, 0x5ab5u);
    std::map<std::string, std::set<Group>> keep;
    for (const auto& [clip, g] : groups) {
        std::vector<Group> list(g.begin(), g.end());
        std::shuffle(list.begin(), list.end(), rng);
        list.resize(std::min(list.size(), static_cast<std::size_t>(per_clip)));
        keep[clip] = std::set<Group>(list.begin(), list.end());
    }
    std::vector<VoteRecord> out;
    for (const auto& v : votes) {
        if (keep[v.clip_id].contains({v.rater_id, v.run_id})) {
            out.push_back(v);
        }
    }
    return out;
}

namespace {

std::pair<std::vector<double>, std::vector<double>> paired_mos(const stats::ScoreTable& a, const stats::ScoreTable& b) {
    std::vector<double> x;
    std::vector<double> y;
    for (const auto& row : a.rows) {
        if (const auto* other = b.find(row.entity, row.item)) {
            x.push_back(row.mos);
            y.push_back(other->mos);
        }
    }
    return {x, y};
}

Eigen::MatrixXd run_matrix(const std::vector<stats::ScoreTable>& tables, double& mean_pcc) {
    const auto n = static_cast<Eigen::Index>(tables.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
    double sum = 0.0;
    int count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const auto [x, y] = paired_mos(tables[i], tables[j]);
            m(i, j) = stats::pcc(x, y);
            m(j, i) = stats::srcc(x, y);
            sum += m(i, j);
            ++count;
        }
    }
    mean_pcc = sum / count;
    return m;
}

}  // namespace

StudyConfig effective_study(const StudyConfig& study_in, const SimConfig& sim) {
    StudyConfig study = study_in;
    if (sim.raters_per_clip > 0) {
        study.target_votes_per_clip = sim.raters_per_clip;
        study.min_accepted_votes = std::min(study.min_accepted_votes, study.target_votes_per_clip);
    }
    return study;
}

ReproducibilityResult reproducibility_experiment(const StudyConfig& study_in, const SimConfig& sim, int n_runs) {
    if (n_runs < 2) {
        throw Error(ErrorCode::InvalidConfig, "reproducibility needs at least 2 runs");
    }
    validate(sim);
    const StudyConfig study = effective_study(study_in, sim);
    SessionManifest manifest{study, sim.seed, build_sessions(study, sim.seed)};
    const GroundTruth truth = make_ground_truth(study, sim.ground_truth, sim.seed);

    ReproducibilityResult r;
    std::vector<stats::ScoreTable> clip_tables;
    std::vector<stats::ScoreTable> cond_tables;
    for (int k = 0; k < n_runs; ++k) {
        auto run = simulate_run(study, manifest.sessions, sim, truth, k);
        auto cleansed = cleanse(std::move(run.submissions), manifest);
        const auto votes = subsample_votes(cleansed.votes, sim.accepted_votes_per_clip, sim.seed + k);
        RunSummary summary;
        summary.run_id = "run" + std::to_string(k + 1);
        summary.clip_scores = stats::aggregate(votes, stats::Level::clip, study.scale_points);
        summary.condition_scores = stats::aggregate(votes, stats::Level::condition, study.scale_points);
        summary.report = std::move(cleansed.report);
        clip_tables.push_back(summary.clip_scores);
        cond_tables.push_back(summary.condition_scores);
        r.runs.push_back(std::move(summary));
    }
    r.clip_matrix = run_matrix(clip_tables, r.mean_clip_pcc);
    r.condition_matrix = run_matrix(cond_tables, r.mean_condition_pcc);
    return r;
}

Json reproducibility_json(const ReproducibilityResult& r, const Provenance& prov) {
    const auto matrix = [](const Eigen::MatrixXd& m) {
        Json rows = Json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            std::vector<double> row(m.cols());
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                row[j] = m(i, j);
            }
            rows.push_back(row);
        }
        return rows;
    };
    Json runs = Json::array();
    for (const auto& run : r.runs) {
        runs.push_back({{"run_id", run.run_id},
                        {"submissions", run.report.total},
                        {"accepted", run.report.accepted.size()},
                        {"rejected", run.report.rejected.size()},
                        {"acceptance_rate", run.report.acceptance_rate}});
    }
    return Json{{"provenance", prov.to_json()},
                {"runs", runs},
                {"clip_matrix", matrix(r.clip_matrix)},
                {"condition_matrix", matrix(r.condition_matrix)},
                {"mean_clip_pcc", r.mean_clip_pcc},
                {"mean_condition_pcc", r.mean_condition_pcc}};
}

}  // namespace avqoe::sim
