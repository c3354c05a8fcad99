#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtnsim/runtime.hpp"
#include "dtnsim/store.hpp"

namespace dtnsim {

struct ApiOptions {
  std::string listen = "127.0.0.1";
  unsigned short port = 8080;  // 0 = ephemeral
  double telemetry_hz = 1.0;
  std::size_t client_buffer = 16;  // ticks queued per client before it is dropped
  double io_timeout_s = 30.0;
};

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

// REST + /telemetry WebSocket over one port. Handlers only talk to the
// runtime through its message-passing entry points.
class ApiServer {
 public:
  // Registers the telemetry listener, so construct before runtime.start().
  // NetworkError when the address cannot be bound.
  ApiServer(Runtime& runtime, Store* store, ApiOptions options);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  void start();
  void stop();
  unsigned short port() const { return port_; }

  // Request routing without the socket layer.
  HttpResponse handle(const std::string& method, const std::string& target, const std::string& body);

  void broadcast(const TelemetryTick& tick);
  std::size_t clients() const;
  std::size_t dropped() const { return dropped_.load(); }

 private:
  struct Client;
  struct Conn {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };

  void accept_loop();
  void serve(int fd);
  void stream_telemetry(int fd, void* socket, const void* request);
  void reap();

  Runtime& rt_;
  Store* store_;
  ApiOptions opts_;
  int listener_ = -1;
  unsigned short port_ = 0;
  std::atomic<bool> stop_{false};
  std::atomic<std::size_t> dropped_{0};
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::vector<Conn> conns_;
  std::set<int> open_fds_;
  std::set<std::shared_ptr<Client>> clients_;
};

// Summary document for a bundle as returned by the bundle endpoints.
nlohmann::json bundle_summary(const DTNBundle& bundle, const std::vector<std::string>& route = {}, bool flood = false);

}  // namespace dtnsim
