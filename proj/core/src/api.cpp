#include "dtnsim/api.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>

#include "dtnsim/error.hpp"

namespace dtnsim {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using json = nlohmann::json;

namespace {

struct Target {
  std::string path;
  std::map<std::string, std::string> query;
};

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out.push_back(' ');
    } else if (s[i] == '%' && i + 2 < s.size() && hex_value(s[i + 1]) >= 0 && hex_value(s[i + 2]) >= 0) {
      out.push_back(static_cast<char>(hex_value(s[i + 1]) * 16 + hex_value(s[i + 2])));
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

Target parse_target(std::string_view target) {
  Target t;
  const auto q = target.find('?');
  t.path = url_decode(target.substr(0, q));
  if (t.path.size() > 1 && t.path.back() == '/') t.path.pop_back();
  if (q == std::string_view::npos) return t;
  std::string_view rest = target.substr(q + 1);
  while (!rest.empty()) {
    const auto amp = rest.find('&');
    const std::string_view pair = rest.substr(0, amp);
    const auto eq = pair.find('=');
    if (!pair.empty()) {
      t.query[url_decode(pair.substr(0, eq))] = eq == std::string_view::npos ? "" : url_decode(pair.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    rest.remove_prefix(amp + 1);
  }
  return t;
}

HttpResponse error_response(int status, const std::string& message) {
  return HttpResponse{status, json{{"error", message}}};
}

json parse_json_body(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DomainError("request body must be a JSON object");
  return j;
}

std::string required_string(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) throw DomainError(std::string(key) + " must be a string");
  return j[key].get<std::string>();
}

BundleOptions bundle_options(const json& j) {
  BundleOptions o;
  if (j.contains("priority")) {
    if (!j["priority"].is_string()) throw DomainError("priority must be a string");
    std::string p = j["priority"].get<std::string>();
    for (auto& c : p) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    try {
      o.priority = parse_priority(p);
    } catch (const Error&) {
      throw DomainError("unknown priority " + j["priority"].get<std::string>());
    }
  }
  if (j.contains("custody")) {
    if (!j["custody"].is_boolean()) throw DomainError("custody must be a boolean");
    o.custody = j["custody"].get<bool>();
  }
  if (j.contains("ttl_s") && !j["ttl_s"].is_null()) {
    if (!j["ttl_s"].is_number() || !(j["ttl_s"].get<double>() > 0)) throw DomainError("ttl_s must be positive");
    o.ttl_s = j["ttl_s"].get<double>();
  }
  return o;
}

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    const int n = c < 0x80 ? 0 : (c >> 5) == 0x6 ? 1 : (c >> 4) == 0xe ? 2 : (c >> 3) == 0x1e ? 3 : -1;
    if (n < 0 || i + n >= s.size() + (n == 0 ? 1 : 0)) return false;
    for (int k = 1; k <= n; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
    }
    i += n + 1;
  }
  return true;
}

void set_io_timeout(int fd, double seconds) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(seconds);
  tv.tv_usec = static_cast<suseconds_t>((seconds - static_cast<double>(tv.tv_sec)) * 1e6);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

bool wait_readable(int fd, double seconds, const std::atomic<bool>& stop) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
  while (!stop.load()) {
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, 100) > 0) return true;
    if (std::chrono::steady_clock::now() > deadline) return false;
  }
  return false;
}

}  // namespace

json bundle_summary(const DTNBundle& b, const std::vector<std::string>& route, bool flood) {
  return json{{"bundle_id", b.bundle_id},
              {"source", b.source.node_id},
              {"destination", b.destination.node_id},
              {"status", std::string(to_string(b.status))},
              {"priority", std::string(to_string(b.priority))},
              {"custody", b.custody},
              {"created_at", to_iso8601(b.created_at)},
              {"ttl_s", b.ttl_s},
              {"payload_hash", b.payload_hash},
              {"encrypted_bytes", b.encrypted_payload.size()},
              {"encrypted_preview", b.encrypted_payload.substr(0, 64)},
              {"hop_list", b.hop_list},
              {"route", route},
              {"flood", flood}};
}

struct ApiServer::Client {
  int fd = -1;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::shared_ptr<const std::string>> queue;
  bool dropped = false;
};

ApiServer::ApiServer(Runtime& runtime, Store* store, ApiOptions options)
    : rt_(runtime), store_(store), opts_(std::move(options)) {
  if (!(opts_.telemetry_hz > 0)) throw ConfigError("telemetry_hz must be positive");
  if (opts_.client_buffer == 0) throw ConfigError("client_buffer must be positive");
  listener_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener_ < 0) throw NetworkError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listener_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(opts_.port);
  if (::inet_pton(AF_INET, opts_.listen.c_str(), &addr.sin_addr) != 1) {
    ::close(listener_);
    throw ConfigError("listen address must be IPv4: " + opts_.listen);
  }
  if (::bind(listener_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listener_, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listener_);
    throw NetworkError("cannot listen on " + opts_.listen + ":" + std::to_string(opts_.port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listener_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  rt_.on_telemetry(opts_.telemetry_hz, [this](const TelemetryTick& t) { broadcast(t); });
}

ApiServer::~ApiServer() { stop(); }

void ApiServer::start() {
  if (acceptor_.joinable()) return;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void ApiServer::stop() {
  if (stop_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<Conn> conns;
  {
    std::lock_guard lock(mu_);
    for (const int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
    for (const auto& c : clients_) {
      std::lock_guard cl(c->mu);
      c->cv.notify_all();
    }
    conns.swap(conns_);
  }
  for (auto& c : conns) c.thread.join();
  if (listener_ >= 0) ::close(listener_);
  listener_ = -1;
}

void ApiServer::reap() {
  std::vector<Conn> finished;
  {
    std::lock_guard lock(mu_);
    auto it = std::partition(conns_.begin(), conns_.end(), [](const Conn& c) { return !c.done->load(); });
    std::move(it, conns_.end(), std::back_inserter(finished));
    conns_.erase(it, conns_.end());
  }
  for (auto& c : finished) c.thread.join();
}

void ApiServer::accept_loop() {
  while (!stop_.load()) {
    pollfd p{listener_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0 || !(p.revents & POLLIN)) continue;
    const int fd = ::accept(listener_, nullptr, nullptr);
    if (fd < 0) continue;
    reap();
    std::lock_guard lock(mu_);
    if (stop_.load()) {
      ::close(fd);
      break;
    }
    open_fds_.insert(fd);
    auto done = std::make_shared<std::atomic<bool>>(false);
    conns_.push_back(Conn{std::thread([this, fd, done] {
                            serve(fd);
                            done->store(true);
                          }),
                          done});
  }
}

void ApiServer::serve(int fd) {
  set_io_timeout(fd, opts_.io_timeout_s);
  asio::io_context ioc;
  tcp::socket sock(ioc);
  sock.assign(tcp::v4(), fd);
  beast::flat_buffer buf;
  bool upgraded = false;
  for (;;) {
    if (buf.size() == 0 && !wait_readable(fd, opts_.io_timeout_s, stop_)) break;
    http::request<http::string_body> req;
    beast::error_code ec;
    http::read(sock, buf, req, ec);
    if (ec) break;
    if (websocket::is_upgrade(req) && parse_target(std::string(req.target())).path == "/telemetry") {
      upgraded = true;
      stream_telemetry(fd, &sock, &req);
      break;
    }
    HttpResponse r = handle(std::string(req.method_string()), std::string(req.target()), req.body());
    http::response<http::string_body> res{static_cast<http::status>(r.status), req.version()};
    res.set(http::field::server, "dtnsim");
    res.set(http::field::content_type, "application/json");
    res.set(http::field::access_control_allow_origin, "*");
    res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res.set(http::field::access_control_allow_headers, "Content-Type");
    res.keep_alive(req.keep_alive());
    if (!r.body.is_null()) res.body() = r.body.dump();
    res.prepare_payload();
    http::write(sock, res, ec);
    if (ec || !res.keep_alive()) break;
  }
  {
    std::lock_guard lock(mu_);
    open_fds_.erase(fd);
  }
  beast::error_code ignored;
  if (!upgraded) sock.shutdown(tcp::socket::shutdown_both, ignored);
}

void ApiServer::stream_telemetry(int fd, void* socket, const void* request) {
  auto& sock = *static_cast<tcp::socket*>(socket);
  // Bounded kernel buffering, so a stalled client backs up into its own queue.
  const int sndbuf = 32 * 1024;
  ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &sndbuf, sizeof sndbuf);
  const auto& req = *static_cast<const http::request<http::string_body>*>(request);
  websocket::stream<tcp::socket> ws(std::move(sock));
  beast::error_code ec;
  ws.accept(req, ec);
  if (ec) return;
  ws.text(true);

  auto client = std::make_shared<Client>();
  client->fd = fd;
  {
    std::lock_guard lock(mu_);
    clients_.insert(client);
  }
  for (;;) {
    std::shared_ptr<const std::string> msg;
    {
      std::unique_lock lock(client->mu);
      client->cv.wait(lock, [&] { return client->dropped || stop_.load() || !client->queue.empty(); });
      if (client->dropped || stop_.load()) break;
      msg = client->queue.front();
      client->queue.pop_front();
    }
    ws.write(asio::buffer(*msg), ec);
    if (ec) break;
  }
  {
    std::lock_guard lock(mu_);
    clients_.erase(client);
  }
  if (!client->dropped && !ec) ws.close(websocket::close_code::going_away, ec);
}

void ApiServer::broadcast(const TelemetryTick& tick) {
  auto text = std::make_shared<const std::string>(tick.to_json().dump());
  std::lock_guard lock(mu_);
  for (const auto& c : clients_) {
    std::lock_guard cl(c->mu);
    if (c->dropped) continue;
    if (c->queue.size() >= opts_.client_buffer) {
      // A client this far behind is cut off; the engine never waits for it.
      c->dropped = true;
      c->queue.clear();
      ::shutdown(c->fd, SHUT_RDWR);
      dropped_.fetch_add(1);
    } else {
      c->queue.push_back(text);
    }
    c->cv.notify_all();
  }
}

std::size_t ApiServer::clients() const {
  std::lock_guard lock(mu_);
  return clients_.size();
}

HttpResponse ApiServer::handle(const std::string& method, const std::string& target, const std::string& body) {
  const Target t = parse_target(target);
  try {
    if (method == "OPTIONS") return HttpResponse{204, nullptr};

    if (t.path == "/health" && method == "GET") {
      return {200, json{{"status", "ok"}, {"mode", rt_.mode()}, {"now", to_iso8601(rt_.now())}}};
    }

    if (t.path == "/bundles" && method == "POST") {
      const json req = parse_json_body(body);
      const std::string message = required_string(req, "message");
      if (message.empty()) throw DomainError("message must not be empty");
      const std::string source = required_string(req, "source");
      std::string destination = required_string(req, "destination");
      if (destination == "broadcast") destination = std::string(kBroadcast);
      const auto ids = rt_.network().station_ids();
      auto known = [&](const std::string& s) { return std::find(ids.begin(), ids.end(), s) != ids.end(); };
      if (!known(source)) throw DomainError("unknown source station " + source);
      if (!known(destination) && destination != kIssNode && destination != kBroadcast) {
        throw DomainError("unknown destination " + destination);
      }
      if (destination == source) throw DomainError("source and destination are the same");
      const BundleOptions opts = bundle_options(req);
      const Submission s = rt_.submit(Bytes(message.begin(), message.end()), source, destination, opts);
      return {201, bundle_summary(s.bundle, s.route.hops, s.route.flood)};
    }

    if (t.path == "/bundles" && method == "GET") {
      std::optional<BundleStatus> status;
      if (auto it = t.query.find("status"); it != t.query.end() && !it->second.empty()) {
        try {
          status = parse_status(it->second);
        } catch (const Error&) {
          throw DomainError("unknown status " + it->second);
        }
      }
      std::optional<std::string> endpoint;
      if (auto it = t.query.find("endpoint"); it != t.query.end() && !it->second.empty()) endpoint = it->second;
      json out = json::array();
      if (store_) {
        StoreFilter f;
        f.status = status;
        f.endpoint = endpoint;
        for (const auto& r : store_->history_query(f)) {
          json j = bundle_summary(r.bundle, r.route);
          j["delivered_at"] = r.delivered_at ? json(to_iso8601(*r.delivered_at)) : json(nullptr);
          out.push_back(std::move(j));
        }
      } else {
        for (const auto& tr : rt_.tracker().traces()) {
          if (status && tr.status != *status) continue;
          if (endpoint && tr.source != *endpoint && tr.destination != *endpoint) continue;
          DTNBundle b = tr.bundle;
          b.status = tr.status;
          json j = bundle_summary(b, tr.hop_list);
          j["delivered_at"] = tr.delivered_at ? json(to_iso8601(*tr.delivered_at)) : json(nullptr);
          out.push_back(std::move(j));
        }
      }
      return {200, out};
    }

    if (t.path.rfind("/bundles/", 0) == 0 && method == "GET") {
      const std::string id = t.path.substr(9);
      if (auto tr = rt_.tracker().find(id)) {
        DTNBundle b = tr->bundle;
        b.status = tr->status;
        json j = bundle_summary(b, tr->hop_list);
        j["delivered_at"] = tr->delivered_at ? json(to_iso8601(*tr->delivered_at)) : json(nullptr);
        j["transmissions"] = tr->transmissions;
        j["retransmissions"] = tr->retransmissions;
        j["fragments"] = tr->fragments;
        return {200, j};
      }
      if (store_) {
        if (auto r = store_->find_bundle(id)) return {200, bundle_summary(r->bundle, r->route)};
      }
      throw NotFoundError("unknown bundle " + id);
    }

    if (t.path == "/stations" && method == "GET") {
      const json tick = rt_.snapshot().to_json();
      return {200, tick["stations"]};
    }

    if (t.path == "/iss/state" && method == "GET") {
      const TelemetryTick tick = rt_.snapshot();
      json j = position_json(tick.iss);
      json visible = json::array();
      for (const auto& s : tick.stations) {
        if (s.visible) visible.push_back(s.station.id);
      }
      j["visible_stations"] = std::move(visible);
      return {200, j};
    }

    if (t.path == "/iss/inbox" && method == "GET") {
      json out = json::array();
      for (const auto& e : rt_.inbox(std::string(kIssNode))) out.push_back(e.to_json());
      return {200, out};
    }

    if (t.path == "/passes" && method == "GET") {
      auto it = t.query.find("station");
      if (it == t.query.end() || it->second.empty()) throw DomainError("station is required");
      double hours = 24;
      if (auto h = t.query.find("hours"); h != t.query.end()) {
        try {
          hours = std::stod(h->second);
        } catch (const std::logic_error&) {
          throw DomainError("hours must be a number");
        }
        if (!(hours > 0) || hours > 24 * 14) throw DomainError("hours must lie in (0, 336]");
      }
      json windows = json::array();
      for (const auto& w : rt_.windows(it->second, rt_.now(), hours * 3600.0)) windows.push_back(window_json(w));
      return {200, json{{"station", it->second}, {"windows", std::move(windows)}}};
    }

    if (t.path == "/iss/relay" && method == "POST") {
      const json req = parse_json_body(body);
      const std::string message = required_string(req, "message");
      if (message.empty()) throw DomainError("message must not be empty");
      const std::string destination = required_string(req, "destination");
      const auto ids = rt_.network().station_ids();
      if (std::find(ids.begin(), ids.end(), destination) == ids.end()) {
        throw DomainError("relay destination must be a ground station, got " + destination);
      }
      const Submission s =
          rt_.submit(Bytes(message.begin(), message.end()), std::string(kIssNode), destination, bundle_options(req));
      return {201, bundle_summary(s.bundle, s.route.hops, s.route.flood)};
    }

    if (t.path == "/iss/decrypt" && method == "POST") {
      const json req = parse_json_body(body);
      const std::string id = required_string(req, "bundle_id");
      const Bytes plain = rt_.open(std::string(kIssNode), id);
      const std::string text(plain.begin(), plain.end());
      json j{{"bundle_id", id}, {"plaintext_b64", base64_encode(plain)}, {"bytes", plain.size()}};
      j["plaintext"] = valid_utf8(text) ? json(text) : json(nullptr);
      return {200, j};
    }

    if (t.path == "/metrics" && method == "GET") {
      json m = rt_.tracker().metrics("service").to_json();
      m.erase("bundles");
      return {200, m};
    }

    static const std::set<std::string> known_paths{"/health",   "/bundles",    "/stations",    "/iss/state",
                                                   "/iss/inbox", "/passes",    "/iss/relay",   "/iss/decrypt",
                                                   "/metrics",  "/telemetry"};
    if (known_paths.contains(t.path)) return error_response(405, "method not allowed");
    return error_response(404, "no such endpoint " + t.path);
  } catch (const NotFoundError& e) {
    return error_response(404, e.what());
  } catch (const ConflictError& e) {
    return error_response(409, e.what());
  } catch (const NoRouteError& e) {
    return error_response(409, e.what());
  } catch (const IntegrityError& e) {
    return error_response(422, e.what());
  } catch (const CryptoError& e) {
    return error_response(422, e.what());
  } catch (const DomainError& e) {
    return error_response(400, e.what());
  } catch (const ConfigError& e) {
    return error_response(400, e.what());
  } catch (const ParseError& e) {
    return error_response(400, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

}  // namespace dtnsim
