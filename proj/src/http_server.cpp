#include "avqoe/http_server.hpp"

#include <httplib.h>

#include <csignal>
#include <map>

#include "avqoe/error.hpp"

namespace avqoe {

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server != nullptr) {
        g_server->stop();
    }
}

void reply(httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_content(api.body, api.content_type);
}

std::map<std::string, std::string> query_of(const httplib::Request& req) {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : req.params) {
        out[k] = v;
    }
    return out;
}

}  // namespace

void mount_routes(httplib::Server& server, StudyService& service) {
    using Req = httplib::Request;
    using Res = httplib::Response;

    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type, Idempotency-Key"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/v1/.*)", [](const Req&, Res& res) { res.status = 204; });

    server.Get("/v1/health", [](const Req&, Res& res) { res.set_content(R"({"ok":true})", "application/json"); });

    server.Post("/v1/studies", [&service](const Req& req, Res& res) {
        std::optional<std::string> key;
        if (req.has_header("Idempotency-Key")) {
            key = req.get_header_value("Idempotency-Key");
        }
        reply(res, service.create_study(req.body, key));
    });
    server.Get("/v1/studies/:study", [&service](const Req& req, Res& res) {
        reply(res, service.get_study(req.path_params.at("study")));
    });
    server.Post("/v1/studies/:study/next-task", [&service](const Req& req, Res& res) {
        reply(res, service.next_task(req.path_params.at("study"), req.body));
    });
    server.Post("/v1/studies/:study/raters/:rater/landolt", [&service](const Req& req, Res& res) {
        reply(res, service.landolt_task(req.path_params.at("study"), req.path_params.at("rater"), req.body));
    });
    server.Post("/v1/studies/:study/raters/:rater/qualification", [&service](const Req& req, Res& res) {
        reply(res, service.submit_qualification(req.path_params.at("study"), req.path_params.at("rater"), req.body));
    });
    server.Post("/v1/studies/:study/raters/:rater/setup", [&service](const Req& req, Res& res) {
        reply(res, service.submit_setup(req.path_params.at("study"), req.path_params.at("rater"), req.body));
    });
    server.Post("/v1/studies/:study/assignments/:assignment/submission", [&service](const Req& req, Res& res) {
        reply(res, service.submit(req.path_params.at("study"), req.path_params.at("assignment"), req.body));
    });
    server.Get("/v1/studies/:study/reports/:kind", [&service](const Req& req, Res& res) {
        reply(res, service.report(req.path_params.at("study"), req.path_params.at("kind"), query_of(req)));
    });
    server.Post("/v1/studies/:study/extend", [&service](const Req& req, Res& res) {
        reply(res, service.extend(req.path_params.at("study")));
    });
    server.Post("/v1/studies/:study/close", [&service](const Req& req, Res& res) {
        reply(res, service.close(req.path_params.at("study")));
    });

    server.set_error_handler([](const Req&, Res& res) {
        if (res.body.empty()) {
            const auto api = ApiResponse::error(res.status, res.status == 404 ? "NotFound" : "HttpError",
                                                httplib::status_message(res.status));
            res.set_content(api.body, api.content_type);
        }
    });
    server.set_exception_handler([](const Req&, Res& res, std::exception_ptr ep) {
        std::string what = "unknown";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        const auto api = ApiResponse::error(500, "Internal", what);
        res.status = 500;
        res.set_content(api.body, api.content_type);
    });
}

int serve(const ServiceConfig& config, const std::function<void(int)>& on_listen) {
    StudyService service(config);
    httplib::Server server;
    const int threads = config.threads > 0 ? config.threads : 8;
    server.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<size_t>(threads)); };
    mount_routes(server, service);

    int port = config.port;
    if (port == 0) {
        port = server.bind_to_any_port(config.bind);
    } else if (!server.bind_to_port(config.bind, port)) {
        port = -1;
    }
    if (port < 0) {
        throw Error(ErrorCode::Io, "cannot bind " + config.bind + ":" + std::to_string(config.port));
    }
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    if (on_listen) {
        on_listen(port);
    }
    server.listen_after_bind();
    g_server = nullptr;
    return 0;
}

}  // namespace avqoe
