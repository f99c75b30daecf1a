#pragma once

#include <functional>

#include "avqoe/service.hpp"

namespace httplib {
class Server;
}

namespace avqoe {

/// Registers the /v1 routes of `service` on `server`.
void mount_routes(httplib::Server& server, StudyService& service);

/// Blocks serving HTTP until SIGINT/SIGTERM. Port 0 picks a free port.
/// `on_listen` receives the bound port before the accept loop starts.
int serve(const ServiceConfig& config, const std::function<void(int port)>& on_listen = {});

}  // namespace avqoe
