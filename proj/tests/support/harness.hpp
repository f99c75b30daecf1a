#pragma once

// In-process HTTP service on an ephemeral port, plus a scripted rater that
// walks the qualification / setup / session flow the way the UI would.

#include <httplib.h>

#include <atomic>
#include <stdexcept>
#include <thread>

#include "avqoe/http_server.hpp"
#include "avqoe/json_support.hpp"
#include "avqoe/qualification.hpp"
#include "avqoe/service.hpp"

namespace avqoe::testing {

class TestServer {
public:
    TestServer(const std::filesystem::path& data_dir, Clock clock = {}, int threads = 16) {
        ServiceConfig cfg;
        cfg.data_dir = data_dir;
        cfg.threads = threads;
        service_ = std::make_unique<StudyService>(cfg, std::move(clock));
        server_.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<size_t>(threads)); };
        mount_routes(server_, *service_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~TestServer() {
        server_.stop();
        thread_.join();
    }

    int port() const { return port_; }
    StudyService& service() { return *service_; }

private:
    std::unique_ptr<StudyService> service_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

struct HttpResult {
    int status = 0;
    std::string body;
    Json json() const { return Json::parse(body); }
};

class ApiClient {
public:
    explicit ApiClient(int port, const std::string& host = "127.0.0.1") : cli_(host, port) {
        cli_.set_connection_timeout(10);
        cli_.set_read_timeout(60);
    }

    HttpResult post(const std::string& path, const Json& body, const httplib::Headers& headers = {}) {
        auto res = cli_.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            return {0, httplib::to_string(res.error())};
        }
        return {res->status, res->body};
    }
    HttpResult get(const std::string& path) {
        auto res = cli_.Get(path);
        if (!res) {
            return {0, httplib::to_string(res.error())};
        }
        return {res->status, res->body};
    }

private:
    httplib::Client cli_;
};

/// Answers a setup task as an attentive rater would: counts the target shape
/// in the grid and picks the sharp image of each pair.
inline Json answer_setup(const Json& task) {
    int count = 0;
    const auto& grid = task.at("brightness");
    for (const auto& cell : grid.at("cells")) {
        count += cell.at("shape") == grid.at("target_shape");
    }
    Json selections = Json::array();
    if (task.contains("blur_pairs")) {
        for (const auto& pair : task["blur_pairs"]) {
            const bool left_blurred = pair.at("left_url").get<std::string>().find("_blur") != std::string::npos;
            selections.push_back(left_blurred ? "right" : "left");
        }
    }
    return Json{{"brightness_count", count}, {"blur_selections", selections}};
}

/// Drives next-task until a session is issued (or something else comes back
/// that is not a setup task). Throws on transport or HTTP errors.
inline Json obtain_session(ApiClient& api, const std::string& study, const std::string& rater) {
    for (int round = 0; round < 4; ++round) {
        const auto r = api.post("/v1/studies/" + study + "/next-task", Json{{"rater_id", rater}});
        if (r.status != 200) {
            throw std::runtime_error("next-task " + std::to_string(r.status) + ": " + r.body);
        }
        const Json task = r.json();
        if (task.at("type") != "setup") {
            return task;
        }
        const auto s = api.post("/v1/studies/" + study + "/raters/" + rater + "/setup", answer_setup(task));
        if (s.status != 200) {
            throw std::runtime_error("setup " + std::to_string(s.status) + ": " + s.body);
        }
    }
    throw std::runtime_error("rater " + rater + " never reached a session");
}

}  // namespace avqoe::testing
