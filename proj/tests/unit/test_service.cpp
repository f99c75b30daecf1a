#include <doctest.h>

#include <atomic>

#include "../support/fixtures.hpp"
#include "../support/harness.hpp"
#include "avqoe/session_builder.hpp"

using namespace avqoe;
using namespace avqoe::testing;

namespace {

struct Env {
    TempDir dir{"svc"};
    std::atomic<std::int64_t> clock{1'700'000'000};
    TestServer server{dir.path(), [this] { return clock.load(); }, 4};
    ApiClient api{server.port()};

    std::string create(const StudyConfig& config, std::uint64_t seed = 1) {
        const auto r = api.post("/v1/studies", Json{{"config", config}, {"seed", seed}});
        REQUIRE(r.status == 201);
        return r.json()["study_id"];
    }
};

const Session& session_of(const SessionManifest& m, const std::string& assignment_id) {
    for (const auto& s : m.sessions) {
        if (s.assignment_id == assignment_id) {
            return s;
        }
    }
    throw std::runtime_error("no session " + assignment_id);
}

std::string path(const std::string& study, const std::string& rest = "") { return "/v1/studies/" + study + rest; }

}  // namespace

TEST_CASE("create study and read it back") {
    Env env;
    const auto config = make_study();
    const auto id = env.create(config, 4);
    const auto got = env.api.get(path(id));
    REQUIRE(got.status == 200);
    CHECK(got.json()["config_hash"] == config_hash(config));
    CHECK(got.json()["assignments"] == 120);
    CHECK(got.json()["status_counts"]["open"] == 120);
}

TEST_CASE("invalid config is a 400") {
    Env env;
    auto config = make_study();
    config.scale_points = 7;
    const auto r = env.api.post("/v1/studies", Json{{"config", config}});
    CHECK(r.status == 400);
    CHECK(r.json()["error"] == "InvalidConfig");
    CHECK(env.api.post("/v1/studies", Json::parse("{}")).status == 400);
    CHECK(env.api.get(path("st_missing")).status == 404);
}

TEST_CASE("idempotency key returns the same study without duplicating sessions") {
    Env env;
    const auto config = make_study();
    const httplib::Headers key{{"Idempotency-Key", "abc-1"}};
    const auto a = env.api.post("/v1/studies", Json{{"config", config}, {"seed", 2}}, key);
    const auto b = env.api.post("/v1/studies", Json{{"config", config}, {"seed", 2}}, key);
    REQUIRE(a.status == 201);
    REQUIRE(b.status == 200);
    CHECK(a.json()["study_id"] == b.json()["study_id"]);
    CHECK(b.json()["created"] == false);
    CHECK(env.api.get(path(a.json()["study_id"])).json()["assignments"] == 120);
    const auto c = env.api.post("/v1/studies", Json{{"config", config}, {"seed", 3}}, key);
    CHECK(c.status == 409);
    CHECK(c.json()["error"] == "DuplicateKey");
}

TEST_CASE("unqualified rater gets the qualification task first") {
    Env env;
    const auto config = make_study({.qualification = true});
    const auto id = env.create(config);
    const auto t = env.api.post(path(id, "/next-task"), Json{{"rater_id", "w1"}});
    REQUIRE(t.status == 200);
    CHECK(t.json()["type"] == "qualification");
    CHECK(t.json()["ishihara_plates"].size() == 2);
    CHECK(t.json().dump().find("\"29\"") == std::string::npos);  // key stays server side

    const auto rows = env.api.post(path(id, "/raters/w1/landolt"), Json{{"card_width_px", 856}, {"viewing_distance_mm", 600}});
    REQUIRE(rows.status == 200);
    Json answers = Json::array();
    const Json landolt = rows.json();
    for (const auto& row : landolt["rows"]) {
        answers.push_back(row["directions"]);
    }
    const Json device{{"width_px", 1920}, {"height_px", 1080}, {"refresh_hz", 60}, {"viewer_class", "pc"}};
    const auto q = env.api.post(path(id, "/raters/w1/qualification"),
                                Json{{"device", device}, {"landolt", answers}, {"ishihara", {{"3", "6"}, {"4", "29"}}}});
    INFO(q.body);
    REQUIRE(q.status == 200);
    CHECK(q.json()["qualified"] == true);
    const auto next = env.api.post(path(id, "/next-task"), Json{{"rater_id", "w1"}});
    CHECK(next.json()["type"] == "setup");

    // Colour-blind answer fails for good.
    env.api.post(path(id, "/raters/w2/landolt"), Json{{"card_width_px", 856}, {"viewing_distance_mm", 600}});
    const auto bad = env.api.post(path(id, "/raters/w2/qualification"),
                                  Json{{"device", device}, {"landolt", answers}, {"ishihara", {{"3", "5"}, {"4", "29"}}}});
    CHECK(bad.json()["qualified"] == false);
    CHECK(env.api.post(path(id, "/next-task"), Json{{"rater_id", "w2"}}).json()["type"] == "not_eligible");
}

TEST_CASE("session flow: issue, submit, verdicts, idempotent resubmission") {
    Env env;
    const auto config = make_study();
    const auto id = env.create(config, 5);
    const SessionManifest manifest{config, 5, build_sessions(config, 5)};

    const Json task = obtain_session(env.api, id, "r1");
    REQUIRE(task["type"] == "session");
    CHECK(task["session"]["playlist"].size() == kSlotsPerSession);
    CHECK(task["training"].size() == 1);
    const std::string text = task.dump();
    for (const char* secret : {"expected", "overlay", "gold", "trap", "repeat", "kind"}) {
        CHECK_MESSAGE(text.find(secret) == std::string::npos, secret);
    }

    const std::string aid = task["assignment_id"];
    const auto& session = session_of(manifest, aid);
    const auto sub = perfect_submission(session, config, 9, "r1");
    const auto v = env.api.post(path(id, "/assignments/" + aid + "/submission"), Json(sub));
    REQUIRE(v.status == 200);
    CHECK(v.json()["accepted"] == true);
    CHECK(v.json()["reasons"].empty());

    const auto again = env.api.post(path(id, "/assignments/" + aid + "/submission"), Json(sub));
    CHECK(again.status == 200);
    CHECK(again.body == v.body);
    const auto votes = env.api.get(path(id, "/reports/votes"));
    const auto lines = std::count(votes.body.begin(), votes.body.end(), '\n');
    CHECK(lines == 2 + kTestSlotsPerSession * static_cast<long>(config.items.size()));

    // Trap miss on the next session.
    const Json t2 = obtain_session(env.api, id, "r2");
    const std::string aid2 = t2["assignment_id"];
    const auto& s2 = session_of(manifest, aid2);
    auto bad = perfect_submission(s2, config, 10, "r2");
    for (std::size_t k = 0; k < s2.playlist.size(); ++k) {
        if (s2.playlist[k].kind == SlotKind::test) {
            auto& a = bad.answers[k][*s2.playlist[k].items.trap_index];
            a = a == 1 ? 2 : 1;
            break;
        }
    }
    const auto rv = env.api.post(path(id, "/assignments/" + aid2 + "/submission"), Json(bad));
    CHECK(rv.json()["accepted"] == false);
    CHECK(rv.json()["reasons"] == Json::array({"trap_item_failed"}));

    const auto counts = env.api.get(path(id, "/reports/assignments")).json();
    CHECK(counts["counts"]["accepted"] == 1);
    CHECK(counts["counts"]["rejected"] == 1);
    int sum = 0;
    for (const auto& n : counts["counts"]) {
        sum += n.get<int>();
    }
    CHECK(sum == counts["total"].get<int>());
}

TEST_CASE("submission errors: not issued, wrong rater, malformed") {
    Env env;
    const auto config = make_study();
    const auto id = env.create(config, 5);
    const SessionManifest manifest{config, 5, build_sessions(config, 5)};
    const auto sub = perfect_submission(manifest.sessions[7], config, 1, "x");
    const auto r = env.api.post(path(id, "/assignments/" + manifest.sessions[7].assignment_id + "/submission"), Json(sub));
    CHECK(r.status == 409);
    CHECK(r.json()["error"] == "NotIssued");

    const Json task = obtain_session(env.api, id, "owner");
    const std::string aid = task["assignment_id"];
    auto other = perfect_submission(session_of(manifest, aid), config, 1, "intruder");
    CHECK(env.api.post(path(id, "/assignments/" + aid + "/submission"), Json(other)).status == 409);
    auto shape = perfect_submission(session_of(manifest, aid), config, 1, "owner");
    shape.answers.pop_back();
    CHECK(env.api.post(path(id, "/assignments/" + aid + "/submission"), Json(shape)).status == 422);
    CHECK(env.api.post(path(id, "/assignments/" + aid + "/submission"), Json{{"answers", 3}}).status == 422);
    CHECK(env.api.post(path(id, "/assignments/A99999/submission"), Json(shape)).status == 404);
}

TEST_CASE("leases expire and the assignment goes back to the pool") {
    Env env;
    const auto config = make_study({.models = 5, .clips_per_model = 2, .votes_per_clip = 1, .min_accepted = 1});
    const auto id = env.create(config, 1);
    const Json first = obtain_session(env.api, id, "a");
    REQUIRE(first["type"] == "session");
    CHECK(obtain_session(env.api, id, "b")["type"] == "none_available");
    // The holder sees the same assignment again.
    CHECK(obtain_session(env.api, id, "a")["assignment_id"] == first["assignment_id"]);

    env.clock += 2 * 3600 + 1;
    const Json reissued = obtain_session(env.api, id, "b");
    REQUIRE(reissued["type"] == "session");
    CHECK(reissued["assignment_id"] == first["assignment_id"]);

    const SessionManifest manifest{config, 1, build_sessions(config, 1)};
    const auto late = perfect_submission(manifest.sessions[0], config, 1, "a");
    CHECK(env.api.post(path(id, "/assignments/" + manifest.sessions[0].assignment_id + "/submission"), Json(late)).status ==
          409);
}

TEST_CASE("reports on a fresh study") {
    Env env;
    const auto config = make_study();
    const auto id = env.create(config);
    const auto scores = env.api.get(path(id, "/reports/scores")).json();
    CHECK(scores["table"]["rows"].empty());
    CHECK(scores["extend"].size() == config.clips.size());
    const auto cleansing = env.api.get(path(id, "/reports/cleansing")).json();
    CHECK(cleansing["total"] == 0);
    CHECK(env.api.get(path(id, "/reports/unknown")).status == 404);
    const auto csv = env.api.get(path(id, "/reports/scores?format=csv&level=clip"));
    CHECK(csv.body.find("level,entity,item,n,mos,sd,ci95") != std::string::npos);
}

TEST_CASE("extend reissues rejected assignments with a new attempt") {
    Env env;
    const auto config = make_study({.models = 5, .clips_per_model = 2, .votes_per_clip = 1, .min_accepted = 1});
    const auto id = env.create(config, 1);
    const SessionManifest manifest{config, 1, build_sessions(config, 1)};
    const Json t = obtain_session(env.api, id, "a");
    auto sub = perfect_submission(manifest.sessions[0], config, 1, "a");
    sub.verification_code = "wrong";
    CHECK(env.api.post(path(id, "/assignments/A00001/submission"), Json(sub)).json()["accepted"] == false);
    CHECK(obtain_session(env.api, id, "b")["type"] == "none_available");

    const auto ext = env.api.post(path(id, "/extend"), Json::object()).json();
    CHECK(ext["extended"] == Json::array({"A00001"}));
    const Json again = obtain_session(env.api, id, "b");
    REQUIRE(again["type"] == "session");
    CHECK(again["attempt"] == 2);
    const auto good = perfect_submission(manifest.sessions[0], config, 2, "b");
    CHECK(env.api.post(path(id, "/assignments/A00001/submission"), Json(good)).json()["accepted"] == true);
    const auto report = env.api.get(path(id, "/reports/cleansing")).json();
    CHECK(report["accepted"].size() == 1);
    CHECK(report["rejected"].size() == 1);
}

TEST_CASE("per-rater session cap") {
    Env env;
    auto config = make_study();
    config.max_sessions_per_rater = 1;
    const auto id = env.create(config);
    const SessionManifest manifest{config, 1, build_sessions(config, 1)};
    const Json t = obtain_session(env.api, id, "solo");
    const std::string aid = t["assignment_id"];
    env.api.post(path(id, "/assignments/" + aid + "/submission"),
                 Json(perfect_submission(session_of(manifest, aid), config, 1, "solo")));
    CHECK(obtain_session(env.api, id, "solo")["type"] == "none_available");
}

TEST_CASE("second brightness failure rejects later submissions") {
    Env env;
    const auto config = make_study();
    const auto id = env.create(config);
    const SessionManifest manifest{config, 1, build_sessions(config, 1)};
    auto t = env.api.post(path(id, "/next-task"), Json{{"rater_id", "dim"}}).json();
    REQUIRE(t["type"] == "setup");
    auto wrong = answer_setup(t);
    wrong["brightness_count"] = wrong["brightness_count"].get<int>() + 1;
    const auto first = env.api.post(path(id, "/raters/dim/setup"), wrong).json();
    CHECK(first["brightness"] == "retry");
    REQUIRE(first.contains("retry"));
    Json retry_task{{"brightness", first["retry"]}};
    auto wrong2 = answer_setup(retry_task);
    wrong2["brightness_count"] = wrong2["brightness_count"].get<int>() + 1;
    CHECK(env.api.post(path(id, "/raters/dim/setup"), wrong2).json()["brightness"] == "hard_fail");

    const Json s = obtain_session(env.api, id, "dim");
    REQUIRE(s["type"] == "session");
    const std::string aid = s["assignment_id"];
    const auto v = env.api.post(path(id, "/assignments/" + aid + "/submission"),
                                Json(perfect_submission(session_of(manifest, aid), config, 1, "dim")));
    CHECK(v.json()["reasons"] == Json::array({"brightness_second_failure"}));
}

TEST_CASE("closed study answers 410") {
    Env env;
    const auto id = env.create(make_study());
    CHECK(env.api.post(path(id, "/close"), Json::object()).status == 200);
    const auto r = env.api.post(path(id, "/next-task"), Json{{"rater_id", "late"}});
    CHECK(r.status == 410);
    CHECK(r.json()["error"] == "StudyClosed");
}
