#pragma once

#include <string>

namespace httplib {
class Server;
}

namespace xpcg::service {

class Service;

/// Routes the REST endpoints onto `service`. Errors become
/// {code, message, detail} bodies with 400/404/409/412/500 statuses.
void register_routes(httplib::Server& server, Service& service);

/// Serves until the process is stopped. Returns nonzero when the port cannot
/// be bound.
int serve(Service& service, const std::string& host, int port);

}  // namespace xpcg::service
