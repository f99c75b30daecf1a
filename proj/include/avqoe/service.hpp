#pragma once

// Study service: persistent studies, assignment leases, rater qualification
// state, synchronous cleansing on submit and on-demand reports. The HTTP
// layer in http_server.hpp is a thin router over these calls.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "avqoe/db.hpp"
#include "avqoe/json_support.hpp"
#include "avqoe/session_builder.hpp"

namespace avqoe {

struct ServiceConfig {
    std::string bind = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data_dir = "avqoe-data";
    int lease_minutes = 120;
    int threads = 8;
};

/// Reads an optional JSON config file, then applies AVQOE_BIND, AVQOE_PORT,
/// AVQOE_DATA_DIR and AVQOE_LEASE_MINUTES from the environment.
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& path);

/// Outcome of one API call: HTTP status plus body.
struct ApiResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";

    static ApiResponse json(int status, const Json& j) { return {status, j.dump(), "application/json"}; }
    static ApiResponse error(int status, const std::string& code, const std::string& message);
};

using Clock = std::function<std::int64_t()>;  // Unix seconds

class StudyService {
public:
    explicit StudyService(ServiceConfig config, Clock clock = {});

    ApiResponse create_study(const std::string& body, const std::optional<std::string>& idempotency_key);
    ApiResponse get_study(const std::string& study_id);
    ApiResponse next_task(const std::string& study_id, const std::string& body);
    ApiResponse landolt_task(const std::string& study_id, const std::string& rater_id, const std::string& body);
    ApiResponse submit_qualification(const std::string& study_id, const std::string& rater_id, const std::string& body);
    ApiResponse submit_setup(const std::string& study_id, const std::string& rater_id, const std::string& body);
    ApiResponse submit(const std::string& study_id, const std::string& assignment_id, const std::string& body);
    /// kind: scores | correlations | cleansing | assignments | votes; format json or csv.
    ApiResponse report(const std::string& study_id, const std::string& kind, const std::map<std::string, std::string>& query);
    ApiResponse extend(const std::string& study_id);
    ApiResponse close(const std::string& study_id);

    const ServiceConfig& config() const { return config_; }

private:
    struct Study {
        std::string study_id;
        SessionManifest manifest;
        std::string config_hash;
        std::map<std::string, std::size_t> session_index;  // assignment_id -> position
    };

    std::shared_ptr<const Study> load_study(const std::string& study_id);
    std::int64_t now() const { return clock_(); }

    ServiceConfig config_;
    Clock clock_;
    std::unique_ptr<Db> db_;
    std::mutex cache_mu_;
    std::map<std::string, std::shared_ptr<const Study>> cache_;
};

}  // namespace avqoe
