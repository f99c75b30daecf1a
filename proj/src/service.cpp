#include "avqoe/service.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>

#include "avqoe/cleansing.hpp"
#include "avqoe/error.hpp"
#include "avqoe/provenance.hpp"
#include "avqoe/qualification.hpp"
#include "avqoe/rng.hpp"
#include "avqoe/stats.hpp"

namespace avqoe {

namespace q = qualification;

namespace {

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS studies(
  study_id TEXT PRIMARY KEY,
  idem_key TEXT UNIQUE,
  config_hash TEXT NOT NULL,
  seed INTEGER NOT NULL,
  manifest TEXT NOT NULL,
  closed INTEGER NOT NULL DEFAULT 0,
  created_at INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS assignments(
  study_id TEXT NOT NULL,
  assignment_id TEXT NOT NULL,
  session_id TEXT NOT NULL,
  status TEXT NOT NULL,
  rater_id TEXT,
  lease_expires INTEGER,
  attempt INTEGER NOT NULL DEFAULT 1,
  PRIMARY KEY(study_id, assignment_id));
CREATE TABLE IF NOT EXISTS submissions(
  study_id TEXT NOT NULL,
  assignment_id TEXT NOT NULL,
  attempt INTEGER NOT NULL,
  rater_id TEXT NOT NULL,
  payload TEXT NOT NULL,
  verdict TEXT NOT NULL,
  accepted INTEGER NOT NULL,
  received_at INTEGER NOT NULL,
  PRIMARY KEY(study_id, assignment_id, attempt));
CREATE TABLE IF NOT EXISTS votes(
  study_id TEXT NOT NULL,
  assignment_id TEXT NOT NULL,
  attempt INTEGER NOT NULL,
  clip_id TEXT NOT NULL,
  model_id TEXT NOT NULL,
  item_id TEXT NOT NULL,
  score INTEGER NOT NULL,
  rater_id TEXT NOT NULL,
  run_id TEXT NOT NULL);
CREATE INDEX IF NOT EXISTS votes_by_study ON votes(study_id);
CREATE TABLE IF NOT EXISTS raters(
  study_id TEXT NOT NULL,
  rater_id TEXT NOT NULL,
  qualification TEXT NOT NULL DEFAULT 'pending',
  qualified_at INTEGER,
  last_setup_at INTEGER,
  last_training_at INTEGER,
  landolt TEXT,
  setup TEXT,
  brightness TEXT,
  sessions INTEGER NOT NULL DEFAULT 0,
  PRIMARY KEY(study_id, rater_id));
)sql";

// Signals a non-2xx response from inside a transaction (triggers rollback).
struct ApiError {
    int status;
    std::string code;
    std::string message;
};

[[noreturn]] void api_error(int status, const std::string& code, const std::string& message) {
    throw ApiError{status, code, message};
}

int status_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::Io:
            return 500;
        case ErrorCode::InvalidConfig:
        case ErrorCode::InsufficientClips:
        case ErrorCode::MissingGoldSpec:
        case ErrorCode::MissingTrappingSpec:
        case ErrorCode::ClipTooShort:
            return 400;
        default:
            return 422;
    }
}

// Maps exceptions thrown by handler bodies to responses.
template <class F>
ApiResponse guarded(F&& f) {
    try {
        return f();
    } catch (const ApiError& e) {
        return ApiResponse::error(e.status, e.code, e.message);
    } catch (const Error& e) {
        return ApiResponse::error(status_for(e), std::string(to_string(e.code())), e.what());
    } catch (const Json::exception& e) {
        return ApiResponse::error(400, "ParseError", e.what());
    } catch (const std::exception& e) {
        return ApiResponse::error(500, "Internal", e.what());
    }
}

Json parse_body(const std::string& body) {
    try {
        return body.empty() ? Json::object() : Json::parse(body);
    } catch (const Json::parse_error& e) {
        api_error(400, "ParseError", e.what());
    }
}

std::uint64_t stable_hash(const std::string& s) { return std::stoull(sha256_hex(s).substr(0, 16), nullptr, 16); }

std::string random_id() {
    std::random_device rd;
    std::uniform_int_distribution<std::uint64_t> d;
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(d(rd)));
    return buf;
}

std::string require_string(const Json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
        api_error(400, "MalformedRequest", std::string("missing string field '") + key + "'");
    }
    return j[key].get<std::string>();
}

struct RaterRow {
    std::string qualification = "pending";
    std::optional<std::int64_t> qualified_at;
    std::optional<std::int64_t> last_setup_at;
    std::optional<std::int64_t> last_training_at;
    std::string landolt;
    std::string setup;
    std::string brightness;
    std::int64_t sessions = 0;
};

RaterRow load_rater(Db& db, const std::string& study, const std::string& rater) {
    db.prepare("INSERT OR IGNORE INTO raters(study_id, rater_id) VALUES(?, ?)").bind(1, study).bind(2, rater).run();
    auto st = db.prepare(
        "SELECT qualification, qualified_at, last_setup_at, last_training_at, landolt, setup, brightness, sessions "
        "FROM raters WHERE study_id = ? AND rater_id = ?");
    st.bind(1, study).bind(2, rater);
    st.step();
    RaterRow r;
    r.qualification = st.text(0);
    r.qualified_at = st.opt_int64(1);
    r.last_setup_at = st.opt_int64(2);
    r.last_training_at = st.opt_int64(3);
    r.landolt = st.text(4);
    r.setup = st.text(5);
    r.brightness = st.text(6);
    r.sessions = st.int64(7);
    return r;
}

struct AssignmentRow {
    std::string assignment_id;
    std::string session_id;
    std::string status;
    std::string rater_id;
    std::optional<std::int64_t> lease_expires;
    std::int64_t attempt = 1;
};

std::vector<AssignmentRow> load_assignments(Db& db, const std::string& study) {
    auto st = db.prepare(
        "SELECT assignment_id, session_id, status, rater_id, lease_expires, attempt FROM assignments "
        "WHERE study_id = ? ORDER BY assignment_id");
    st.bind(1, study);
    std::vector<AssignmentRow> out;
    while (st.step()) {
        out.push_back({st.text(0), st.text(1), st.text(2), st.text(3), st.opt_int64(4), st.int64(5)});
    }
    return out;
}

std::vector<VoteRecord> load_votes(Db& db, const std::string& study) {
    auto st = db.prepare(
        "SELECT clip_id, model_id, item_id, score, rater_id, run_id FROM votes WHERE study_id = ?");
    st.bind(1, study);
    std::vector<VoteRecord> out;
    while (st.step()) {
        out.push_back({st.text(0), st.text(1), st.text(2), static_cast<int>(st.int64(3)), st.text(4), st.text(5)});
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Submission> load_submissions(Db& db, const std::string& study) {
    auto st = db.prepare("SELECT payload FROM submissions WHERE study_id = ? ORDER BY assignment_id, attempt");
    st.bind(1, study);
    std::vector<Submission> out;
    while (st.step()) {
        out.push_back(Json::parse(st.text(0)).get<Submission>());
    }
    return out;
}

Json setup_task_json(const StudyConfig& config, std::mt19937_64& rng, int attempt, Json& stored) {
    const auto task = q::make_brightness_task(rng, attempt, config.qualification.brightness_band);
    stored["brightness"] = task;
    Json pub{{"brightness", q::render_spec(task)}};
    const auto& assets = config.qualification.blur_assets;
    if (assets.size() >= 3) {
        std::vector<std::size_t> idx(assets.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        q::BlurPairTask pairs;
        Json shown = Json::array();
        for (int k = 0; k < 3; ++k) {
            const auto& a = assets[idx[k]];
            const bool left_blurred = std::bernoulli_distribution(0.5)(rng);
            pairs.pairs.push_back({a.id, a.id, left_blurred ? q::Side::left : q::Side::right});
            shown.push_back({{"left_url", left_blurred ? a.blurred_url : a.sharp_url},
                             {"right_url", left_blurred ? a.sharp_url : a.blurred_url}});
        }
        stored["blur"] = pairs;
        pub["blur_pairs"] = shown;
    }
    return pub;
}

}  // namespace

ApiResponse ApiResponse::error(int status, const std::string& code, const std::string& message) {
    return json(status, Json{{"error", code}, {"message", message}});
}

ServiceConfig load_service_config(const std::optional<std::filesystem::path>& path) {
    ServiceConfig c;
    if (path) {
        std::ifstream in(*path);
        if (!in) {
            throw Error(ErrorCode::InvalidConfig, "cannot open service config " + path->string());
        }
        Json j;
        try {
            j = Json::parse(in);
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::InvalidConfig, std::string("service config: ") + e.what());
        }
        c.bind = j.value("bind", c.bind);
        c.port = j.value("port", c.port);
        c.data_dir = j.value("data_dir", c.data_dir.string());
        c.lease_minutes = j.value("lease_minutes", c.lease_minutes);
        c.threads = j.value("threads", c.threads);
    }
    const auto env_int = [](const char* name, int& out) {
        if (const char* v = std::getenv(name)) {
            try {
                out = std::stoi(v);
            } catch (const std::exception&) {
                throw Error(ErrorCode::InvalidConfig, std::string(name) + " is not an integer");
            }
        }
    };
    if (const char* v = std::getenv("AVQOE_BIND")) {
        c.bind = v;
    }
    if (const char* v = std::getenv("AVQOE_DATA_DIR")) {
        c.data_dir = v;
    }
    env_int("AVQOE_PORT", c.port);
    env_int("AVQOE_LEASE_MINUTES", c.lease_minutes);
    if (c.port < 0 || c.port > 65535 || c.lease_minutes <= 0 || c.threads <= 0) {
        throw Error(ErrorCode::InvalidConfig, "service config: port, lease_minutes or threads out of range");
    }
    return c;
}

StudyService::StudyService(ServiceConfig config, Clock clock) : config_(std::move(config)), clock_(std::move(clock)) {
    if (!clock_) {
        clock_ = [] {
            return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
                .count();
        };
    }
    std::filesystem::create_directories(config_.data_dir);
    db_ = std::make_unique<Db>(config_.data_dir / "avqoe.sqlite");
    db_->exec(kSchema);
}

std::shared_ptr<const StudyService::Study> StudyService::load_study(const std::string& study_id) {
    {
        std::lock_guard lock(cache_mu_);
        if (const auto it = cache_.find(study_id); it != cache_.end()) {
            return it->second;
        }
    }
    const auto text = db_->transaction([&]() -> std::optional<std::string> {
        auto st = db_->prepare("SELECT manifest FROM studies WHERE study_id = ?");
        st.bind(1, study_id);
        if (!st.step()) {
            return std::nullopt;
        }
        return st.text(0);
    });
    if (!text) {
        api_error(404, "NotFound", "unknown study " + study_id);
    }
    auto study = std::make_shared<Study>();
    study->study_id = study_id;
    study->manifest = manifest_from_json(Json::parse(*text));
    study->config_hash = config_hash(study->manifest.config);
    for (std::size_t i = 0; i < study->manifest.sessions.size(); ++i) {
        study->session_index[study->manifest.sessions[i].assignment_id] = i;
    }
    std::lock_guard lock(cache_mu_);
    return cache_.emplace(study_id, std::move(study)).first->second;
}

ApiResponse StudyService::create_study(const std::string& body, const std::optional<std::string>& key) {
    return guarded([&] {
        const Json j = parse_body(body);
        const Json& cfg_json = j.contains("config") ? j["config"] : j;
        const std::uint64_t seed = j.contains("config") ? j.value("seed", std::uint64_t{1}) : 1;
        StudyConfig config;
        try {
            config = cfg_json.get<StudyConfig>();
        } catch (const Json::exception& e) {
            api_error(400, "InvalidConfig", e.what());
        }
        SessionManifest manifest{config, seed, build_sessions(config, seed)};
        const std::string hash = config_hash(config);
        const std::string manifest_text = to_json(manifest).dump();

        return db_->transaction([&] {
            if (key) {
                auto st = db_->prepare("SELECT study_id, config_hash, seed FROM studies WHERE idem_key = ?");
                st.bind(1, *key);
                if (st.step()) {
                    if (st.text(1) != hash || static_cast<std::uint64_t>(st.int64(2)) != seed) {
                        api_error(409, "DuplicateKey", "idempotency key already used for a different study");
                    }
                    return ApiResponse::json(200, Json{{"study_id", st.text(0)},
                                                       {"config_hash", hash},
                                                       {"seed", seed},
                                                       {"assignments", manifest.sessions.size()},
                                                       {"created", false}});
                }
            }
            const std::string study_id = "st_" + sha256_hex(hash + ":" + std::to_string(seed) + ":" +
                                                            (key ? "key:" + *key : "rnd:" + random_id()))
                                                     .substr(0, 16);
            db_->prepare(
                   "INSERT INTO studies(study_id, idem_key, config_hash, seed, manifest, created_at) "
                   "VALUES(?, ?, ?, ?, ?, ?)")
                .bind(1, study_id)
                .bind(2, key)
                .bind(3, hash)
                .bind(4, static_cast<std::int64_t>(seed))
                .bind(5, manifest_text)
                .bind(6, now())
                .run();
            auto ins = db_->prepare(
                "INSERT INTO assignments(study_id, assignment_id, session_id, status) VALUES(?, ?, ?, 'open')");
            for (const auto& s : manifest.sessions) {
                ins.bind(1, study_id).bind(2, s.assignment_id).bind(3, s.session_id).run();
            }
            return ApiResponse::json(201, Json{{"study_id", study_id},
                                               {"config_hash", hash},
                                               {"seed", seed},
                                               {"assignments", manifest.sessions.size()},
                                               {"created", true}});
        });
    });
}


namespace {

Json status_counts(const std::vector<AssignmentRow>& rows) {
    Json counts{{"open", 0}, {"issued", 0}, {"submitted", 0}, {"accepted", 0}, {"rejected", 0}, {"extended", 0}};
    for (const auto& r : rows) {
        counts[r.status] = counts[r.status].get<int>() + 1;
    }
    return counts;
}

bool study_closed(Db& db, const std::string& study_id) {
    auto st = db.prepare("SELECT closed FROM studies WHERE study_id = ?");
    st.bind(1, study_id);
    return st.step() && st.int64(0) != 0;
}

// Accepted vote groups per clip, counted on the first configured item.
std::map<std::string, int> accepted_groups(Db& db, const std::string& study_id, const StudyConfig& config) {
    std::map<std::string, int> out;
    if (config.items.empty()) {
        return out;
    }
    auto st = db.prepare("SELECT clip_id, COUNT(*) FROM votes WHERE study_id = ? AND item_id = ? GROUP BY clip_id");
    st.bind(1, study_id).bind(2, config.items.front());
    while (st.step()) {
        out[st.text(0)] = static_cast<int>(st.int64(1));
    }
    return out;
}

Json landolt_public(const std::vector<q::LandoltRow>& rows) {
    Json out = Json::array();
    for (const auto& r : rows) {
        Json dirs = Json::array();
        for (const auto& t : r.trials) {
            dirs.push_back(t.presented);
        }
        out.push_back({{"acuity", r.acuity},
                       {"gap_px", r.gap_px},
                       {"ring_diameter_px", r.ring_diameter_px},
                       {"distance_mm", r.distance_mm},
                       {"directions", dirs}});
    }
    return out;
}

}  // namespace

ApiResponse StudyService::get_study(const std::string& study_id) {
    return guarded([&] {
        const auto study = load_study(study_id);
        return db_->transaction([&] {
            const auto rows = load_assignments(*db_, study_id);
            return ApiResponse::json(200, Json{{"study_id", study_id},
                                               {"config_hash", study->config_hash},
                                               {"seed", study->manifest.seed},
                                               {"closed", study_closed(*db_, study_id)},
                                               {"assignments", rows.size()},
                                               {"status_counts", status_counts(rows)},
                                               {"config", study->manifest.config}});
        });
    });
}

ApiResponse StudyService::next_task(const std::string& study_id, const std::string& body) {
    return guarded([&] {
        const Json j = parse_body(body);
        const std::string rater_id = require_string(j, "rater_id");
        const auto study = load_study(study_id);
        const auto& config = study->manifest.config;
        const std::int64_t t = now();

        return db_->transaction([&] {
            if (study_closed(*db_, study_id)) {
                api_error(410, "StudyClosed", "study " + study_id + " is closed");
            }
            RaterRow rater = load_rater(*db_, study_id, rater_id);
            const bool needs_qualification = config.qualification.required && rater.qualification != "qualified";
            if (needs_qualification) {
                if (rater.qualification == "failed") {
                    return ApiResponse::json(200, Json{{"type", "not_eligible"}});
                }
                const auto& qc = config.qualification;
                Json plates = Json::array();
                for (const auto& [plate, url] : qc.ishihara_urls) {
                    plates.push_back({{"plate_id", plate}, {"url", url}});
                }
                return ApiResponse::json(
                    200, Json{{"type", "qualification"},
                              {"sections", std::vector<Section>{Section::qualification, Section::calibration}},
                              {"device_requirements", qc.device},
                              {"ishihara_plates", plates},
                              {"landolt", {{"rows", qc.landolt.row_acuities.size()},
                                           {"trials_per_row", q::kTrialsPerRow},
                                           {"endpoint", "/v1/studies/" + study_id + "/raters/" + rater_id + "/landolt"}}},
                              {"card_mm", {q::kCardWidthMm, q::kCardHeightMm}}});
            }

            RaterHistory history{true, rater.qualified_at, rater.last_setup_at, rater.last_training_at};
            auto sections = schedule_sections(history, t, config.section_recurrence_min);
            if (std::find(sections.begin(), sections.end(), Section::setup) != sections.end()) {
                auto rng = substream(study->manifest.seed, stable_hash(rater_id + ":setup:" + std::to_string(t)));
                Json stored;
                Json pub = setup_task_json(config, rng, 1, stored);
                db_->prepare("UPDATE raters SET setup = ? WHERE study_id = ? AND rater_id = ?")
                    .bind(1, stored.dump())
                    .bind(2, study_id)
                    .bind(3, rater_id)
                    .run();
                pub["type"] = "setup";
                pub["sections"] = sections;
                pub["endpoint"] = "/v1/studies/" + study_id + "/raters/" + rater_id + "/setup";
                return ApiResponse::json(200, pub);
            }

            // Leases that ran out go back to the pool.
            db_->prepare(
                   "UPDATE assignments SET status = 'open', rater_id = NULL, lease_expires = NULL "
                   "WHERE study_id = ? AND status = 'issued' AND lease_expires <= ?")
                .bind(1, study_id)
                .bind(2, t)
                .run();
            const auto rows = load_assignments(*db_, study_id);

            const AssignmentRow* chosen = nullptr;
            for (const auto& r : rows) {
                if (r.status == "issued" && r.rater_id == rater_id) {
                    chosen = &r;  // re-deliver the live lease
                }
            }
            if (chosen == nullptr) {
                if (config.max_sessions_per_rater > 0 && rater.sessions >= config.max_sessions_per_rater) {
                    return ApiResponse::json(200, Json{{"type", "none_available"}});
                }
                auto served = accepted_groups(*db_, study_id, config);
                for (const auto& r : rows) {
                    if (r.status == "issued") {
                        for (const auto& slot : study->manifest.sessions[study->session_index.at(r.assignment_id)].playlist) {
                            if (slot.kind == SlotKind::test) {
                                ++served[slot.clip.clip_id];
                            }
                        }
                    }
                }
                long best = 0;
                for (const auto& r : rows) {
                    if (r.status != "open" && r.status != "extended") {
                        continue;
                    }
                    long load = 0;
                    for (const auto& slot : study->manifest.sessions[study->session_index.at(r.assignment_id)].playlist) {
                        if (slot.kind == SlotKind::test) {
                            load += served[slot.clip.clip_id];
                        }
                    }
                    if (chosen == nullptr || load < best) {
                        chosen = &r;
                        best = load;
                    }
                }
                if (chosen == nullptr) {
                    return ApiResponse::json(200, Json{{"type", "none_available"}});
                }
                db_->prepare(
                       "UPDATE assignments SET status = 'issued', rater_id = ?, lease_expires = ? "
                       "WHERE study_id = ? AND assignment_id = ?")
                    .bind(1, rater_id)
                    .bind(2, t + static_cast<std::int64_t>(config_.lease_minutes) * 60)
                    .bind(3, study_id)
                    .bind(4, chosen->assignment_id)
                    .run();
                db_->prepare("UPDATE raters SET sessions = sessions + 1 WHERE study_id = ? AND rater_id = ?")
                    .bind(1, study_id)
                    .bind(2, rater_id)
                    .run();
            }
            const bool training_due = std::find(sections.begin(), sections.end(), Section::training) != sections.end();
            Json training = Json::array();
            if (training_due) {
                for (const auto& id : config.training_clips) {
                    if (const auto* clip = config.find_clip(id)) {
                        training.push_back({{"url", clip->url}, {"duration_s", clip->duration_s}});
                    }
                }
                db_->prepare("UPDATE raters SET last_training_at = ? WHERE study_id = ? AND rater_id = ?")
                    .bind(1, t)
                    .bind(2, study_id)
                    .bind(3, rater_id)
                    .run();
            }
            const auto& session = study->manifest.sessions[study->session_index.at(chosen->assignment_id)];
            return ApiResponse::json(
                200, Json{{"type", "session"},
                          {"sections", sections},
                          {"assignment_id", chosen->assignment_id},
                          {"attempt", chosen->attempt},
                          {"lease_expires_at", t + static_cast<std::int64_t>(config_.lease_minutes) * 60},
                          {"training", training},
                          {"session", public_payload(session, config)}});
        });
    });
}

ApiResponse StudyService::landolt_task(const std::string& study_id, const std::string& rater_id, const std::string& body) {
    return guarded([&] {
        const Json j = parse_body(body);
        const auto study = load_study(study_id);
        const auto& config = study->manifest.config;
        const int card_px = j.value("card_width_px", 0);
        const double distance = j.value("viewing_distance_mm", 0.0);
        const auto calib = q::estimate_pixel_pitch(card_px);
        auto rng = substream(study->manifest.seed, stable_hash(rater_id + ":landolt"));
        std::vector<q::LandoltRow> rows;
        for (double acuity : config.qualification.landolt.row_acuities) {
            rows.push_back(q::make_landolt_row(acuity, distance, calib, rng));
        }
        return db_->transaction([&] {
            load_rater(*db_, study_id, rater_id);
            db_->prepare("UPDATE raters SET landolt = ? WHERE study_id = ? AND rater_id = ?")
                .bind(1, Json(rows).dump())
                .bind(2, study_id)
                .bind(3, rater_id)
                .run();
            return ApiResponse::json(200, Json{{"pitch_mm_per_px", calib.pitch_mm_per_px}, {"rows", landolt_public(rows)}});
        });
    });
}

ApiResponse StudyService::submit_qualification(const std::string& study_id, const std::string& rater_id,
                                               const std::string& body) {
    return guarded([&] {
        const Json j = parse_body(body);
        const auto study = load_study(study_id);
        const auto& qc = study->manifest.config.qualification;
        const std::int64_t t = now();
        return db_->transaction([&] {
            const RaterRow rater = load_rater(*db_, study_id, rater_id);
            if (rater.qualification != "pending") {
                return ApiResponse::json(200, Json{{"qualified", rater.qualification == "qualified"}, {"repeat", true}});
            }
            if (rater.landolt.empty()) {
                api_error(409, "LandoltNotIssued", "request the Landolt rows before submitting qualification");
            }
            auto rows = Json::parse(rater.landolt).get<std::vector<q::LandoltRow>>();
            const auto answers = j.value("landolt", std::vector<std::vector<q::Direction>>{});
            if (answers.size() != rows.size()) {
                api_error(422, "MalformedRow", "expected answers for " + std::to_string(rows.size()) + " Landolt rows");
            }
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (answers[r].size() != rows[r].trials.size()) {
                    api_error(422, "MalformedRow", "row " + std::to_string(r) + " needs " +
                                                       std::to_string(rows[r].trials.size()) + " answers");
                }
                for (std::size_t k = 0; k < answers[r].size(); ++k) {
                    rows[r].trials[k].answered = answers[r][k];
                }
            }
            const auto landolt = q::evaluate_landolt_protocol(rows, qc.landolt);

            const Json ish = j.value("ishihara", Json::object());
            std::vector<q::IshiharaResponse> responses;
            for (const auto& [plate, key] : qc.ishihara_keys) {
                if (ish.contains(plate) && ish[plate].is_string()) {
                    responses.push_back({std::stoi(plate), ish[plate].get<std::string>(), key});
                }
            }
            const auto ishihara = q::evaluate_ishihara(responses);
            const auto device = q::check_device(j.value("device", q::DeviceReport{}), qc.device);

            const bool ok = landolt == q::Outcome::pass && ishihara == q::Outcome::pass && device.passed;
            db_->prepare("UPDATE raters SET qualification = ?, qualified_at = ? WHERE study_id = ? AND rater_id = ?")
                .bind(1, ok ? "qualified" : "failed")
                .bind(2, t)
                .bind(3, study_id)
                .bind(4, rater_id)
                .run();
            return ApiResponse::json(200, Json{{"qualified", ok},
                                               {"landolt", landolt},
                                               {"ishihara", ishihara},
                                               {"device", {{"passed", device.passed}, {"reason", device.reason}}}});
        });
    });
}

ApiResponse StudyService::submit_setup(const std::string& study_id, const std::string& rater_id, const std::string& body) {
    return guarded([&] {
        const Json j = parse_body(body);
        const auto study = load_study(study_id);
        const auto& config = study->manifest.config;
        const std::int64_t t = now();
        return db_->transaction([&] {
            const RaterRow rater = load_rater(*db_, study_id, rater_id);
            if (rater.setup.empty()) {
                api_error(409, "SetupNotIssued", "no setup task is pending for this rater");
            }
            const Json stored = Json::parse(rater.setup);
            const auto task = stored.at("brightness").get<q::BrightnessTask>();
            if (!j.contains("brightness_count") || !j["brightness_count"].is_number_integer()) {
                api_error(422, "MalformedTask", "brightness_count must be an integer");
            }
            const auto brightness = q::evaluate_brightness(task, j["brightness_count"].get<int>());

            std::string blur = "skipped";
            if (stored.contains("blur")) {
                auto pairs = stored["blur"].get<q::BlurPairTask>();
                pairs.selections = j.value("blur_selections", std::vector<q::Side>{});
                blur = q::evaluate_blur_pairs(pairs, config.qualification.blur_pass_threshold) == q::Outcome::pass
                           ? "pass"
                           : "fail";
            }
            Json out{{"brightness", brightness}, {"blur", blur}};
            if (brightness == q::BrightnessOutcome::retry) {
                auto rng = substream(study->manifest.seed, stable_hash(rater_id + ":retry:" + std::to_string(t)));
                Json next_stored = stored;
                Json pub = setup_task_json(config, rng, task.attempt + 1, next_stored);
                next_stored["blur"] = stored.contains("blur") ? stored["blur"] : Json();
                if (next_stored["blur"].is_null()) {
                    next_stored.erase("blur");
                }
                db_->prepare("UPDATE raters SET setup = ? WHERE study_id = ? AND rater_id = ?")
                    .bind(1, next_stored.dump())
                    .bind(2, study_id)
                    .bind(3, rater_id)
                    .run();
                out["setup_passed"] = false;
                out["retry"] = pub["brightness"];
                return ApiResponse::json(200, out);
            }
            const bool blur_ok = blur != "fail" || !config.qualification.blur_gates;
            // A second brightness failure ends the setup; later submissions carry it and get rejected.
            const bool done = blur_ok;
            if (done) {
                db_->prepare(
                       "UPDATE raters SET setup = NULL, last_setup_at = ?, brightness = ? "
                       "WHERE study_id = ? AND rater_id = ?")
                    .bind(1, t)
                    .bind(2, brightness == q::BrightnessOutcome::hard_fail ? "hard_fail" : "pass")
                    .bind(3, study_id)
                    .bind(4, rater_id)
                    .run();
            }
            out["setup_passed"] = done && brightness == q::BrightnessOutcome::pass;
            return ApiResponse::json(200, out);
        });
    });
}

ApiResponse StudyService::submit(const std::string& study_id, const std::string& assignment_id, const std::string& body) {
    return guarded([&] {
        const Json j = parse_body(body);
        Submission sub;
        try {
            sub = parse_submission(j);
        } catch (const Error& e) {
            api_error(422, "MalformedSubmission", e.what());
        }
        sub.assignment_id = assignment_id;
        const auto study = load_study(study_id);
        const auto idx = study->session_index.find(assignment_id);
        if (idx == study->session_index.end()) {
            api_error(404, "NotFound", "unknown assignment " + assignment_id);
        }
        const Session& session = study->manifest.sessions[idx->second];
        const auto& config = study->manifest.config;
        const std::int64_t t = now();

        return db_->transaction([&] {
            auto st = db_->prepare(
                "SELECT status, rater_id, attempt FROM assignments WHERE study_id = ? AND assignment_id = ?");
            st.bind(1, study_id).bind(2, assignment_id);
            st.step();
            const std::string status = st.text(0);
            const std::string holder = st.text(1);
            const std::int64_t attempt = st.int64(2);

            auto prev = db_->prepare(
                "SELECT verdict FROM submissions WHERE study_id = ? AND assignment_id = ? AND attempt = ?");
            prev.bind(1, study_id).bind(2, assignment_id).bind(3, attempt);
            if (prev.step()) {
                return ApiResponse::json(200, Json::parse(prev.text(0)));
            }
            if (status != "issued" || holder != sub.rater_id) {
                api_error(409, "NotIssued", "assignment " + assignment_id + " is " + status +
                                                (holder.empty() ? "" : " (held by another rater)"));
            }
            if (sub.session_id != session.session_id) {
                api_error(422, "MalformedSubmission", "submission names session " + sub.session_id);
            }
            const RaterRow rater = load_rater(*db_, study_id, sub.rater_id);
            if (rater.brightness == "hard_fail") {
                sub.brightness_outcome = BrightnessStatus::hard_fail;
            }
            CleansingVerdict verdict;
            try {
                verdict = validate_submission(sub, session, config);
            } catch (const Error& e) {
                api_error(422, std::string(to_string(e.code())), e.what());
            }
            Json v = verdict_json(verdict);
            v["assignment_id"] = assignment_id;
            v["attempt"] = attempt;
            db_->prepare(
                   "INSERT INTO submissions(study_id, assignment_id, attempt, rater_id, payload, verdict, accepted, "
                   "received_at) VALUES(?, ?, ?, ?, ?, ?, ?, ?)")
                .bind(1, study_id)
                .bind(2, assignment_id)
                .bind(3, attempt)
                .bind(4, sub.rater_id)
                .bind(5, Json(sub).dump())
                .bind(6, v.dump())
                .bind(7, verdict.accepted() ? 1 : 0)
                .bind(8, t)
                .run();
            if (verdict.accepted()) {
                auto ins = db_->prepare(
                    "INSERT INTO votes(study_id, assignment_id, attempt, clip_id, model_id, item_id, score, rater_id, "
                    "run_id) VALUES(?, ?, ?, ?, ?, ?, ?, ?, ?)");
                for (const auto& vote : extract_votes(sub, session, config)) {
                    ins.bind(1, study_id)
                        .bind(2, assignment_id)
                        .bind(3, attempt)
                        .bind(4, vote.clip_id)
                        .bind(5, vote.model_id)
                        .bind(6, vote.item_id)
                        .bind(7, vote.score)
                        .bind(8, vote.rater_id)
                        .bind(9, vote.run_id)
                        .run();
                }
            }
            db_->prepare(
                   "UPDATE assignments SET status = ?, lease_expires = NULL WHERE study_id = ? AND assignment_id = ?")
                .bind(1, verdict.accepted() ? "accepted" : "rejected")
                .bind(2, study_id)
                .bind(3, assignment_id)
                .run();
            return ApiResponse::json(200, v);
        });
    });
}

ApiResponse StudyService::report(const std::string& study_id, const std::string& kind,
                                 const std::map<std::string, std::string>& query) {
    return guarded([&] {
        const auto study = load_study(study_id);
        const auto& manifest = study->manifest;
        const auto& config = manifest.config;
        const Provenance prov{study->config_hash, manifest.seed};
        const auto param = [&](const std::string& k, const std::string& fallback) {
            const auto it = query.find(k);
            return it == query.end() ? fallback : it->second;
        };
        const bool csv = param("format", "json") == "csv";
        const auto text = [](int status, std::string body) { return ApiResponse{status, std::move(body), "text/csv"}; };

        // One read transaction gives a consistent snapshot.
        struct Snapshot {
            std::vector<VoteRecord> votes;
            std::vector<Submission> submissions;
            std::vector<AssignmentRow> assignments;
        };
        const Snapshot snap = db_->transaction([&] {
            return Snapshot{load_votes(*db_, study_id), kind == "cleansing" ? load_submissions(*db_, study_id)
                                                                            : std::vector<Submission>{},
                            load_assignments(*db_, study_id)};
        });

        if (kind == "scores" || kind == "correlations") {
            const auto level = param("level", kind == "scores" ? "clip" : "condition") == "clip"
                                   ? stats::Level::clip
                                   : stats::Level::condition;
            stats::ScoreTable table{level, config.scale_points, {}};
            if (!snap.votes.empty()) {
                table = stats::aggregate(snap.votes, level, config.scale_points);
            }
            if (kind == "scores") {
                if (csv) {
                    return text(200, stats::score_table_csv(table, prov));
                }
                const auto counts = votes_per_clip(snap.votes, config);
                return ApiResponse::json(200, Json{{"provenance", prov.to_json()},
                                                   {"table", stats::score_table_json(table)},
                                                   {"accepted_votes_per_clip", counts},
                                                   {"extend", extend_list(config, counts)}});
            }
            std::optional<stats::RealismFilter> filter;
            if (const auto f = param("filter", ""); !f.empty()) {
                filter = stats::parse_realism_filter(f);
            }
            const auto m = stats::correlation_matrix(table, config.items, filter);
            if (csv) {
                return text(200, stats::correlation_matrix_csv(m, prov));
            }
            Json pccm = Json::array();
            Json srccm = Json::array();
            for (Eigen::Index i = 0; i < m.pcc.rows(); ++i) {
                std::vector<double> a(m.pcc.cols());
                std::vector<double> b(m.pcc.cols());
                for (Eigen::Index k = 0; k < m.pcc.cols(); ++k) {
                    a[k] = m.pcc(i, k);
                    b[k] = m.srcc(i, k);
                }
                pccm.push_back(a);
                srccm.push_back(b);
            }
            return ApiResponse::json(200, Json{{"provenance", prov.to_json()},
                                               {"items", m.items},
                                               {"entities", m.entities},
                                               {"pcc", pccm},
                                               {"srcc", srccm}});
        }
        if (kind == "cleansing") {
            const auto result = cleanse(snap.submissions, manifest);
            return ApiResponse{200, report_json(result.report, prov).dump(2) + "\n", "application/json"};
        }
        if (kind == "votes") {
            return text(200, votes_csv(snap.votes, prov));
        }
        if (kind == "assignments") {
            if (csv) {
                return text(200, assignment_csv(manifest));
            }
            Json list = Json::array();
            for (const auto& r : snap.assignments) {
                list.push_back({{"assignment_id", r.assignment_id},
                                {"session_id", r.session_id},
                                {"status", r.status},
                                {"attempt", r.attempt},
                                {"rater_id", r.rater_id.empty() ? Json(nullptr) : Json(r.rater_id)}});
            }
            return ApiResponse::json(200, Json{{"provenance", prov.to_json()},
                                               {"total", snap.assignments.size()},
                                               {"counts", status_counts(snap.assignments)},
                                               {"assignments", list}});
        }
        api_error(404, "NotFound", "unknown report kind '" + kind + "'");
    });
}

ApiResponse StudyService::extend(const std::string& study_id) {
    return guarded([&] {
        const auto study = load_study(study_id);
        const auto& config = study->manifest.config;
        return db_->transaction([&] {
            std::vector<std::string> reopened;
            for (const auto& r : load_assignments(*db_, study_id)) {
                if (r.status == "rejected") {
                    reopened.push_back(r.assignment_id);
                }
            }
            db_->prepare(
                   "UPDATE assignments SET status = 'extended', rater_id = NULL, lease_expires = NULL, "
                   "attempt = attempt + 1 WHERE study_id = ? AND status = 'rejected'")
                .bind(1, study_id)
                .run();
            const auto counts = accepted_groups(*db_, study_id, config);
            return ApiResponse::json(200, Json{{"extended", reopened}, {"extend", extend_list(config, counts)}});
        });
    });
}

ApiResponse StudyService::close(const std::string& study_id) {
    return guarded([&] {
        load_study(study_id);
        db_->transaction([&] { db_->prepare("UPDATE studies SET closed = 1 WHERE study_id = ?").bind(1, study_id).run(); });
        return ApiResponse::json(200, Json{{"study_id", study_id}, {"closed", true}});
    });
}

}  // namespace avqoe
