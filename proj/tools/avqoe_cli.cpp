// avqoe: offline operator tool. Every subcommand is deterministic given its
// inputs and seed; every output file starts with a provenance header.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "avqoe/cleansing.hpp"
#include "avqoe/error.hpp"
#include "avqoe/http_server.hpp"
#include "avqoe/objective_report.hpp"
#include "avqoe/provenance.hpp"
#include "avqoe/session_builder.hpp"
#include "avqoe/simulator.hpp"
#include "avqoe/stats.hpp"
#include "avqoe/study.hpp"

namespace fs = std::filesystem;
using namespace avqoe;

namespace {

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    std::cerr << "wrote " << path.string() << '\n';
}

std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot read " + path.string());
    }
    return in;
}

std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

int exit_code(const Error& e) {
    switch (category(e.code())) {
        case ErrorCategory::config: return 2;
        case ErrorCategory::data: return 3;
        case ErrorCategory::internal: return 4;
    }
    return 4;
}

// --- build ----------------------------------------------------------------

struct BuildArgs {
    std::string config;
    std::uint64_t seed = 1;
    std::string out = "build-out";
};

void run_build(const BuildArgs& a) {
    const StudyConfig config = load_study_config(a.config);
    const SessionManifest manifest{config, a.seed, build_sessions(config, a.seed)};
    write_file(fs::path(a.out) / "manifest.json", json_text(to_json(manifest)));
    write_file(fs::path(a.out) / "assignments.csv", assignment_csv(manifest));
    std::cout << manifest.sessions.size() << " sessions, config " << config_hash(config) << '\n';
}

// --- parse-results --------------------------------------------------------

struct ParseArgs {
    std::string submissions;
    std::string manifest;
    std::string out = "results";
};

void run_parse(const ParseArgs& a) {
    const SessionManifest manifest = load_manifest(a.manifest);
    auto in = open_input(a.submissions);
    auto subs = read_submissions_jsonl(in);
    const Provenance prov{config_hash(manifest.config), manifest.seed};
    const auto result = cleanse(std::move(subs), manifest);
    write_file(fs::path(a.out) / "votes.csv", votes_csv(result.votes, prov));
    write_file(fs::path(a.out) / "report.json", json_text(report_json(result.report, prov)));
    std::cout << result.report.accepted.size() << " accepted, " << result.report.rejected.size() << " rejected, "
              << result.report.unmatched.size() << " unmatched, " << result.votes.size() << " votes\n";
}

// --- stats ----------------------------------------------------------------

struct StatsArgs {
    std::string votes;
    std::string manifest;
    std::string level = "condition";
    int scale = 5;
    std::string filter;
    bool correlations = false;
    bool pca = false;
    bool standardize = false;
    std::vector<std::string> regress;
    std::string out = "stats";
};

void run_stats(const StatsArgs& a) {
    auto in = open_input(a.votes);
    const VotesFile vf = read_votes_csv(in);
    int scale = a.scale;
    std::vector<std::string> items;
    Provenance prov = vf.provenance.value_or(Provenance{"unknown", 0});
    if (!a.manifest.empty()) {
        const auto manifest = load_manifest(a.manifest);
        scale = manifest.config.scale_points;
        items = manifest.config.items;
        prov = Provenance{config_hash(manifest.config), manifest.seed};
    }
    const auto level = a.level == "clip" ? stats::Level::clip : stats::Level::condition;
    const auto table = stats::aggregate(vf.votes, level, scale);
    if (items.empty()) {
        items = table.items();
    }
    const fs::path out(a.out);
    write_file(out / ("scores_" + a.level + ".csv"), stats::score_table_csv(table, prov));

    std::optional<stats::RealismFilter> filter;
    if (!a.filter.empty()) {
        filter = stats::parse_realism_filter(a.filter);
    }
    if (a.correlations || filter) {
        const auto m = stats::correlation_matrix(table, items, filter);
        write_file(out / "correlations.csv", stats::correlation_matrix_csv(m, prov));
        std::cout << "correlation matrix over " << m.entities.size() << " entities\n";
    }
    if (a.pca) {
        const auto m = stats::mos_matrix(table, items, filter);
        const auto r = stats::pca(m.values, m.items, a.standardize);
        write_file(out / "pca.json", json_text(stats::pca_json(r, prov)));
        if (r.explained_variance_ratio.size() >= 2) {
            std::cout << "top-2 explained variance "
                      << r.explained_variance_ratio[0] + r.explained_variance_ratio[1] << '\n';
        }
    }
    if (!a.regress.empty()) {
        const auto m = stats::mos_matrix(table, {a.regress[0], a.regress[1]}, filter);
        std::vector<double> x(m.values.rows());
        std::vector<double> y(m.values.rows());
        for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
            x[i] = m.values(i, 0);
            y[i] = m.values(i, 1);
        }
        const auto r = stats::linreg(x, y);
        write_file(out / "regression.json", json_text(stats::regression_json(r, a.regress[0], a.regress[1], prov)));
        std::cout << "slope " << r.slope << " r2 " << r.r_squared << '\n';
    }
}

// --- metrics --------------------------------------------------------------

struct MetricsArgs {
    std::string ref_dir;
    std::string deg_dir;
    std::string landmarks;
    std::string masks;
    std::string embeddings;
    std::string lpips;
    std::string region = "head_torso";
    std::string pooling = "db_mean";
    std::string votes;
    std::string manifest;
    std::string out = "metrics";
};

std::optional<fs::path> opt_path(const std::string& s) {
    return s.empty() ? std::nullopt : std::optional<fs::path>(s);
}

void run_metrics(const MetricsArgs& a) {
    MetricDirs dirs{a.ref_dir, a.deg_dir, opt_path(a.landmarks), opt_path(a.masks), opt_path(a.embeddings),
                    opt_path(a.lpips)};
    MetricOptions opt;
    opt.region = parse_region(a.region);
    opt.pooling = a.pooling == "pooled_mse" ? PsnrPooling::pooled_mse : PsnrPooling::db_mean;
    const auto rows = compute_directory_metrics(dirs, opt);

    Provenance prov{sha256_hex(a.region + "|" + a.pooling), 0};
    std::optional<SessionManifest> manifest;
    if (!a.manifest.empty()) {
        manifest = load_manifest(a.manifest);
        prov = Provenance{config_hash(manifest->config), manifest->seed};
    }
    const fs::path out(a.out);
    write_file(out / "clip_metrics.csv", clip_metrics_csv(rows, prov));

    if (!a.votes.empty()) {
        if (!manifest) {
            throw Error(ErrorCode::InvalidConfig, "--votes needs --manifest to map clips to models");
        }
        std::map<std::string, std::string> model_of;
        for (const auto& c : manifest->config.clips) {
            model_of[c.clip_id] = c.model_id;
        }
        auto in = open_input(a.votes);
        const auto vf = read_votes_csv(in);
        const auto mos = stats::aggregate(vf.votes, stats::Level::condition, manifest->config.scale_points);
        const auto entries =
            subjective_objective_report(model_metrics(rows, model_of), mos, manifest->config.items, opt.region);
        write_file(out / "subjective_objective.csv", subjective_objective_csv(entries, manifest->config.items, prov));
    }
    std::cout << rows.size() << " clips\n";
}

// --- simulate -------------------------------------------------------------

struct SimulateArgs {
    std::string config;
    std::string sim;
    int runs = 0;
    std::string out = "sim";
};

void run_simulate(const SimulateArgs& a) {
    sim::SimConfig sc = sim::load_sim_config(a.sim);
    if (a.runs > 0) {
        sc.runs = a.runs;
    }
    sim::validate(sc);
    const StudyConfig study = sim::effective_study(load_study_config(a.config), sc);
    const SessionManifest manifest{study, sc.seed, build_sessions(study, sc.seed)};
    const sim::GroundTruth truth = sim::make_ground_truth(study, sc.ground_truth, sc.seed);
    const Provenance prov{config_hash(study), sc.seed};
    const fs::path out(a.out);

    write_file(out / "manifest.json", json_text(to_json(manifest)));
    std::vector<Submission> all;
    std::ostringstream raters;
    raters << prov.header_line() << "\nrater_id,run_id,archetype\n";
    for (int k = 0; k < sc.runs; ++k) {
        auto run = sim::simulate_run(study, manifest.sessions, sc, truth, k);
        for (std::size_t i = 0; i < run.submissions.size(); ++i) {
            raters << run.submissions[i].rater_id << ',' << run.submissions[i].run_id << ','
                   << Json(run.archetypes[i]).get<std::string>() << '\n';
        }
        all.insert(all.end(), std::make_move_iterator(run.submissions.begin()),
                   std::make_move_iterator(run.submissions.end()));
    }
    write_file(out / "submissions.jsonl", write_submissions_jsonl(all, prov));
    write_file(out / "raters.csv", raters.str());
    write_file(out / "truth.json", json_text(Json{{"provenance", prov.to_json()},
                                                  {"clip_scores", truth.clip_scores},
                                                  {"condition_scores", truth.condition_scores()},
                                                  {"model_latent", truth.model_latent}}));
    if (sc.runs >= 2) {
        const auto r = sim::reproducibility_experiment(study, sc, sc.runs);
        write_file(out / "reproducibility.json", json_text(sim::reproducibility_json(r, prov)));
        std::cout << "mean inter-run PCC: clip " << r.mean_clip_pcc << ", condition " << r.mean_condition_pcc << '\n';
    }
    std::cout << all.size() << " submissions over " << sc.runs << " run(s)\n";
}

// --- serve ----------------------------------------------------------------

struct ServeArgs {
    std::string config;
    std::optional<int> port;
    std::string data_dir;
};

void run_serve(const ServeArgs& a) {
    ServiceConfig cfg = load_service_config(a.config.empty() ? std::nullopt : std::optional<fs::path>(a.config));
    if (a.port) {
        cfg.port = *a.port;
    }
    if (!a.data_dir.empty()) {
        cfg.data_dir = a.data_dir;
    }
    serve(cfg, [&cfg](int port) {
        std::cout << "listening on " << cfg.bind << ':' << port << std::endl;
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"avqoe: crowdsourced avatar video quality study toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(AVQOE_VERSION));

    BuildArgs build;
    auto* b = app.add_subcommand("build", "Build session and assignment manifests from a study config");
    b->add_option("config", build.config, "Study config JSON")->required()->check(CLI::ExistingFile);
    b->add_option("--seed", build.seed, "Randomization seed");
    b->add_option("--out", build.out, "Output directory");

    ParseArgs parse;
    auto* p = app.add_subcommand("parse-results", "Cleanse submissions into votes and reports");
    p->add_option("submissions", parse.submissions, "Submissions JSONL")->required()->check(CLI::ExistingFile);
    p->add_option("--manifest", parse.manifest, "Session manifest from build")->required()->check(CLI::ExistingFile);
    p->add_option("--out", parse.out, "Output directory");

    StatsArgs st;
    auto* s = app.add_subcommand("stats", "MOS tables, correlation matrices, PCA and regression");
    s->add_option("votes", st.votes, "Votes CSV from parse-results")->required()->check(CLI::ExistingFile);
    s->add_option("--manifest", st.manifest, "Session manifest (scale and item order)")->check(CLI::ExistingFile);
    s->add_option("--level", st.level, "clip or condition")->check(CLI::IsMember({"clip", "condition"}));
    s->add_option("--scale", st.scale, "Scale points when no manifest is given")->check(CLI::IsMember({5, 9}));
    s->add_option("--filter-realism", st.filter, "Entity filter on realism MOS, e.g. '>2' or '<=2'");
    s->add_flag("--correlations", st.correlations, "Write the item correlation matrix");
    s->add_flag("--pca", st.pca, "Principal components of the item MOS matrix");
    s->add_flag("--standardize", st.standardize, "PCA on the correlation matrix");
    s->add_option("--regress", st.regress, "Regress item Y on item X")->expected(2);
    s->add_option("--out", st.out, "Output directory");

    MetricsArgs me;
    auto* m = app.add_subcommand("metrics", "Objective metrics between reference and avatar frames");
    m->add_option("--ref-dir", me.ref_dir, "Reference frames")->required()->check(CLI::ExistingDirectory);
    m->add_option("--deg-dir", me.deg_dir, "Avatar frames")->required()->check(CLI::ExistingDirectory);
    m->add_option("--landmarks", me.landmarks, "Directory of <clip>.csv landmark files")->check(CLI::ExistingDirectory);
    m->add_option("--masks", me.masks, "Directory of region masks")->check(CLI::ExistingDirectory);
    m->add_option("--embeddings", me.embeddings, "Directory of FID/FVD embedding sidecars")->check(CLI::ExistingDirectory);
    m->add_option("--lpips", me.lpips, "Directory of per-clip LPIPS CSVs")->check(CLI::ExistingDirectory);
    m->add_option("--region", me.region, "head_torso or face")->check(CLI::IsMember({"head_torso", "face"}));
    m->add_option("--pooling", me.pooling, "PSNR pooling")->check(CLI::IsMember({"db_mean", "pooled_mse"}));
    m->add_option("--votes", me.votes, "Votes CSV for the subjective/objective report")->check(CLI::ExistingFile);
    m->add_option("--manifest", me.manifest, "Session manifest")->check(CLI::ExistingFile);
    m->add_option("--out", me.out, "Output directory");

    SimulateArgs simulate;
    auto* si = app.add_subcommand("simulate", "Simulate a rater crowd answering a study");
    si->add_option("config", simulate.config, "Study config JSON")->required()->check(CLI::ExistingFile);
    si->add_option("--sim", simulate.sim, "Simulator config JSON")->required()->check(CLI::ExistingFile);
    si->add_option("--runs", simulate.runs, "Number of runs (overrides the sim config)");
    si->add_option("--out", simulate.out, "Output directory");

    ServeArgs serve_args;
    auto* sv = app.add_subcommand("serve", "Run the study HTTP service");
    sv->add_option("--config", serve_args.config, "Service config JSON")->check(CLI::ExistingFile);
    sv->add_option("--port", serve_args.port, "Port (0 picks a free one)");
    sv->add_option("--data-dir", serve_args.data_dir, "Directory for the database");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*b) run_build(build);
        if (*p) run_parse(parse);
        if (*s) run_stats(st);
        if (*m) run_metrics(me);
        if (*si) run_simulate(simulate);
        if (*sv) run_serve(serve_args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
