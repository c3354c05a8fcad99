#include "dtnsim/netemu.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <set>

#include "dtnsim/error.hpp"

namespace dtnsim {

using json = nlohmann::json;
using steady = std::chrono::steady_clock;

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

double elapsed_ms(steady::time_point since) {
  return std::chrono::duration<double, std::milli>(steady::now() - since).count();
}

void sleep_s(double s) {
  if (s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(s));
}

UtcTime wall_now() {
  return std::chrono::time_point_cast<std::chrono::microseconds>(std::chrono::system_clock::now());
}

std::size_t read_some(const Socket& s, char* buf, std::size_t n) {
  for (;;) {
    const ssize_t r = ::recv(s.fd(), buf, n, 0);
    if (r >= 0) return static_cast<std::size_t>(r);
    if (errno == EINTR) continue;
    if (errno == EAGAIN || errno == EWOULDBLOCK) throw NetworkError("timeout waiting for data");
    throw NetworkError(errno_text("recv"));
  }
}

// false on EOF before n bytes
bool read_exact(const Socket& s, char* buf, std::size_t n, std::size_t& got) {
  got = 0;
  while (got < n) {
    const std::size_t r = read_some(s, buf + got, n - got);
    if (r == 0) return false;
    got += r;
  }
  return true;
}

}  // namespace

// ---- wire format -----------------------------------------------------------

std::string encode_frame(const json& body) {
  const std::string text = body.dump();
  if (text.size() > kMaxFrameBytes) throw ProtocolError("frame body too large");
  const auto n = static_cast<std::uint32_t>(text.size());
  std::string out;
  out.reserve(4 + text.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out += text;
  return out;
}

namespace {

std::uint32_t frame_length(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

json parse_body(std::string_view text) {
  json body = json::parse(text, nullptr, false);
  if (body.is_discarded() || !body.is_object()) throw ProtocolError("frame body is not a JSON object");
  if (!body.contains("type") || !body["type"].is_string()) throw ProtocolError("frame has no type");
  return body;
}

}  // namespace

json decode_frame(std::string_view bytes) {
  if (bytes.size() < 4) throw ProtocolError("frame shorter than its length prefix");
  const std::uint32_t n = frame_length(reinterpret_cast<const unsigned char*>(bytes.data()));
  if (n == 0 || n > kMaxFrameBytes) throw ProtocolError("bad frame length " + std::to_string(n));
  if (bytes.size() - 4 != n) throw ProtocolError("frame length disagrees with buffer");
  return parse_body(bytes.substr(4));
}

json bundle_frame(const DTNBundle& bundle, const std::string& from) {
  return json{{"type", "bundle"},
              {"from", from},
              {"bundle", to_document(bundle)},
              {"checksum", sha256_hex(bundle.encrypted_payload)}};
}

json raw_frame(const std::string& from, const Bytes& payload) {
  std::string b64 = base64_encode(payload);
  std::string sum = sha256_hex(b64);
  return json{{"type", "raw"}, {"from", from}, {"payload", std::move(b64)}, {"checksum", std::move(sum)}};
}

json ack_frame(const AckMessage& ack) {
  json j{{"type", std::string(to_string(ack.kind))},
         {"bundle_id", ack.bundle_id},
         {"from", ack.from},
         {"at", to_iso8601(ack.at)}};
  if (!ack.reason.empty()) j["reason"] = ack.reason;
  return j;
}

AckMessage ack_from_frame(const json& frame) {
  try {
    AckMessage a;
    a.kind = parse_ack_kind(frame.at("type").get<std::string>());
    a.bundle_id = frame.at("bundle_id").get<std::string>();
    a.from = frame.at("from").get<std::string>();
    a.at = parse_iso8601(frame.at("at").get<std::string>());
    if (frame.contains("reason")) a.reason = frame.at("reason").get<std::string>();
    return a;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed ack frame: ") + e.what());
  } catch (const ParseError& e) {
    throw ProtocolError(std::string("malformed ack frame: ") + e.what());
  }
}

bool frame_checksum_ok(const json& frame) noexcept {
  try {
    const auto& sum = frame.at("checksum").get_ref<const std::string&>();
    const std::string type = frame.at("type").get<std::string>();
    if (type == "bundle") {
      return constant_time_equal(sum, sha256_hex(frame.at("bundle").at("encrypted_payload").get<std::string>()));
    }
    if (type == "raw") return constant_time_equal(sum, sha256_hex(frame.at("payload").get<std::string>()));
    return false;
  } catch (...) {
    return false;
  }
}

// ---- sockets ---------------------------------------------------------------

Socket::~Socket() { close(); }

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.release();
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void set_timeouts(const Socket& s, double timeout_s) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout_s);
  tv.tv_usec = static_cast<suseconds_t>((timeout_s - static_cast<double>(tv.tv_sec)) * 1e6);
  ::setsockopt(s.fd(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(s.fd(), SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

Socket connect_loopback(unsigned short port, double timeout_s) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw NetworkError(errno_text("socket"));
  set_timeouts(s, timeout_s);
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    if (errno == ECONNREFUSED) throw NetworkError("connection refused on port " + std::to_string(port));
    if (errno == EAGAIN || errno == EINPROGRESS) throw NetworkError("timeout connecting");
    throw NetworkError(errno_text("connect"));
  }
  return s;
}

void write_all(const Socket& s, std::string_view bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t r = ::send(s.fd(), bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw NetworkError("timeout writing");
      throw NetworkError(errno_text("send"));
    }
    sent += static_cast<std::size_t>(r);
  }
}

std::optional<json> read_frame(const Socket& s) {
  unsigned char head[4];
  std::size_t got = 0;
  if (!read_exact(s, reinterpret_cast<char*>(head), 4, got)) {
    if (got == 0) return std::nullopt;
    throw ProtocolError("truncated length prefix");
  }
  const std::uint32_t n = frame_length(head);
  if (n == 0 || n > kMaxFrameBytes) throw ProtocolError("bad frame length " + std::to_string(n));
  std::string body(n, '\0');
  if (!read_exact(s, body.data(), n, got)) throw ProtocolError("truncated frame body");
  return parse_body(body);
}

// ---- shaping ---------------------------------------------------------------

void ShapedLinkConfig::validate() const {
  if (!(bandwidth_bps > 0) || !(down_bandwidth_bps > 0)) throw ConfigError("link bandwidth must be positive");
  if (one_way_delay_ms < 0) throw ConfigError("one_way_delay_ms must be non-negative");
  if (!(loss_prob >= 0) || loss_prob > 1) throw ConfigError("loss_prob must lie in [0, 1]");
}

LinkTable::Entry& LinkTable::entry(const std::string& from, const std::string& to) {
  auto it = links_.find({from, to});
  if (it == links_.end()) throw NotFoundError("no emulated link " + from + " -> " + to);
  return it->second;
}

void LinkTable::set(const std::string& from, const std::string& to, ShapedLinkConfig cfg) {
  cfg.validate();
  std::lock_guard lock(mu_);
  auto it = links_.find({from, to});
  if (it != links_.end()) {
    it->second.cfg = cfg;
    return;
  }
  std::seed_seq seq{seed_, std::hash<std::string>{}(from + ">" + to)};
  links_.emplace(std::make_pair(from, to), Entry{cfg, std::mt19937_64(seq)});
}

ShapedLinkConfig LinkTable::get(const std::string& from, const std::string& to) const {
  std::lock_guard lock(mu_);
  auto it = links_.find({from, to});
  if (it == links_.end()) throw NotFoundError("no emulated link " + from + " -> " + to);
  return it->second.cfg;
}

bool LinkTable::contains(const std::string& from, const std::string& to) const {
  std::lock_guard lock(mu_);
  return links_.contains({from, to});
}

void LinkTable::apply_link_state(const std::string& a, const std::string& b, bool visible, double loss_prob) {
  if (!(loss_prob >= 0) || loss_prob > 1) throw ConfigError("loss_prob must lie in [0, 1]");
  std::lock_guard lock(mu_);
  for (auto* e : {&entry(a, b), &entry(b, a)}) {
    e->cfg.up = visible;
    e->cfg.loss_prob = loss_prob;
  }
}

bool LinkTable::draw_loss(const std::string& from, const std::string& to) {
  std::lock_guard lock(mu_);
  auto& e = entry(from, to);
  if (e.cfg.loss_prob <= 0) return false;
  return std::uniform_real_distribution<double>(0.0, 1.0)(e.rng) < e.cfg.loss_prob;
}

json SendReport::to_json() const {
  json j{{"ok", ok},       {"attempts", attempts}, {"socket_rtt_ms", socket_rtt_ms},
         {"from", from},   {"to", to},             {"bundle_id", bundle_id},
         {"bytes", bytes}, {"at", to_iso8601(at)}};
  j["error"] = error ? json(*error) : json(nullptr);
  if (ack) j["ack"] = std::string(to_string(ack->kind));
  return j;
}

namespace {

inline constexpr std::size_t kChunkBytes = 256;

// Releases `bytes` chunk by chunk at the link's current rate. Returns false
// when the next chunk would need longer than the socket timeout; that wait is
// spent before giving up, as a blocked socket would.
bool paced_write(LinkTable& links, const std::string& from, const std::string& to, const Socket& s,
                 std::string_view bytes, double timeout_s) {
  auto release = steady::now();
  for (std::size_t off = 0; off < bytes.size(); off += kChunkBytes) {
    const std::size_t n = std::min(kChunkBytes, bytes.size() - off);
    const double rate = links.get(from, to).rate_bps();
    const auto now = steady::now();
    if (release < now) release = now;
    release += std::chrono::duration_cast<steady::duration>(std::chrono::duration<double>(n * 8.0 / rate));
    if (std::chrono::duration<double>(release - now).count() > timeout_s) {
      sleep_s(timeout_s);
      return false;
    }
    std::this_thread::sleep_until(release);
    write_all(s, bytes.substr(off, n));
  }
  return true;
}

}  // namespace

SendReport shaped_send(LinkTable& links, const std::string& from, const std::string& to, unsigned short port,
                       const json& frame, double socket_timeout_s) {
  SendReport r;
  r.from = from;
  r.to = to;
  r.at = wall_now();
  if (frame.contains("bundle")) r.bundle_id = frame["bundle"].value("bundle_id", "");
  const std::string bytes = encode_frame(frame);
  r.bytes = bytes.size();
  const auto t0 = steady::now();
  try {
    const ShapedLinkConfig cfg = links.get(from, to);
    const bool lost = links.draw_loss(from, to);
    Socket s = connect_loopback(port, socket_timeout_s);
    sleep_s(cfg.one_way_delay_ms / 1000.0);
    // A lost frame never arrives whole: the receiver sees it cut off.
    const std::string_view wire = lost ? std::string_view(bytes).substr(0, bytes.size() / 2) : bytes;
    if (!paced_write(links, from, to, s, wire, socket_timeout_s)) {
      r.error = "timeout: link stalled";
      r.socket_rtt_ms = elapsed_ms(t0);
      return r;
    }
    ::shutdown(s.fd(), SHUT_WR);
    auto reply = read_frame(s);
    sleep_s(links.get(from, to).one_way_delay_ms / 1000.0);
    r.socket_rtt_ms = elapsed_ms(t0);
    if (!reply) {
      r.error = lost ? "no reply: frame lost in transit" : "no reply: connection closed";
      return r;
    }
    r.ack = ack_from_frame(*reply);
    if (r.ack->kind == AckKind::CustodyNak) {
      r.error = "nak: " + r.ack->reason;
    } else {
      r.ok = true;
    }
  } catch (const Error& e) {
    r.socket_rtt_ms = elapsed_ms(t0);
    r.error = e.what();
  }
  return r;
}

SendReport raw_transfer(LinkTable& links, const std::string& from, const std::string& to, unsigned short port,
                        const Bytes& payload, double socket_timeout_s) {
  return shaped_send(links, from, to, port, raw_frame(from, payload), socket_timeout_s);
}

// ---- node servers ----------------------------------------------------------

NodeServer::NodeServer(std::string node_id, unsigned short port, Handler handler, double socket_timeout_s)
    : id_(std::move(node_id)), handler_(std::move(handler)), timeout_s_(socket_timeout_s) {
  listener_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
  if (!listener_.valid()) throw NetworkError(errno_text("socket"));
  int one = 1;
  ::setsockopt(listener_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    throw NetworkError(errno_text(("bind " + id_ + " port " + std::to_string(port)).c_str()));
  }
  if (::listen(listener_.fd(), 64) != 0) throw NetworkError(errno_text("listen"));
  socklen_t len = sizeof addr;
  ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

NodeServer::~NodeServer() { stop(); }

void NodeServer::stop() {
  if (stop_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> conns;
  {
    std::lock_guard lock(conn_mu_);
    for (const int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
    conns.swap(conns_);
  }
  for (auto& t : conns) t.join();
  listener_.close();
}

void NodeServer::accept_loop() {
  while (!stop_.load()) {
    pollfd p{listener_.fd(), POLLIN, 0};
    const int ready = ::poll(&p, 1, 100);
    if (ready <= 0 || !(p.revents & POLLIN)) continue;
    const int fd = ::accept(listener_.fd(), nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard lock(conn_mu_);
    if (stop_.load()) {
      ::close(fd);
      break;
    }
    open_fds_.insert(fd);
    conns_.emplace_back([this, fd] { serve(Socket(fd)); });
  }
}

void NodeServer::serve(Socket conn) {
  set_timeouts(conn, timeout_s_);
  try {
    while (!stop_.load()) {
      auto frame = read_frame(conn);
      if (!frame) break;
      json reply = handler_(*frame);
      handled_.fetch_add(1);
      if (reply.is_null()) break;
      write_all(conn, encode_frame(reply));
    }
  } catch (const std::exception&) {
    // malformed input, timeouts and resets all end the connection
  }
  std::lock_guard lock(conn_mu_);
  open_fds_.erase(conn.fd());
}

// ---- emulation -------------------------------------------------------------

void EmulationSpec::validate() const {
  network.validate();
  emu.validate();
  if (!(budget_s > 0)) throw ConfigError("emulation budget must be positive");
  const auto ids = network.station_ids();
  auto known = [&](const std::string& n) {
    return n == kIssNode || std::find(ids.begin(), ids.end(), n) != ids.end();
  };
  for (const auto& inj : injections) {
    if (!known(inj.source) || !(known(inj.destination) || inj.destination == kBroadcast)) {
      throw ConfigError("injection names an unknown node");
    }
    if (inj.at_s < 0 || inj.at_s > budget_s) throw ConfigError("injection time outside the budget");
  }
  for (const auto& raw : raw_attempts) {
    if (!known(raw.source) || !known(raw.destination) || raw.source == raw.destination) {
      throw ConfigError("raw attempt names an unknown node pair");
    }
  }
}

std::size_t EmulationResult::sends_ok() const {
  return static_cast<std::size_t>(std::count_if(sends.begin(), sends.end(), [](const auto& s) { return s.ok; }));
}

std::size_t EmulationResult::raw_ok() const {
  return static_cast<std::size_t>(std::count_if(raw.begin(), raw.end(), [](const auto& s) { return s.ok; }));
}

json EmulationResult::to_json() const {
  json j = metrics.to_json();
  double rtt = 0;
  std::size_t n = 0;
  for (const auto& s : sends) {
    if (!s.ok) continue;
    rtt += s.socket_rtt_ms;
    ++n;
  }
  j["socket_sends"] = sends.size();
  j["socket_sends_ok"] = sends_ok();
  j["mean_socket_rtt_ms"] = n ? json(rtt / static_cast<double>(n)) : json(nullptr);
  j["raw_attempts"] = raw.size();
  j["raw_ok"] = raw_ok();
  json raws = json::array();
  for (const auto& r : raw) raws.push_back(r.to_json());
  j["raw"] = std::move(raws);
  j["verified_payloads"] = verified;
  j["drained"] = drained;
  j["wall_s"] = wall_s;
  return j;
}

double ActiveSend::progress(UtcTime now, double rate_bps) const {
  if (bytes == 0 || rate_bps <= 0) return 1.0;
  const double sent = std::max(0.0, seconds_between(started, now)) * rate_bps / 8.0;
  return std::clamp(sent / static_cast<double>(bytes), 0.0, 1.0);
}

namespace {

class EmuNode {
 public:
  EmuNode(std::string id, std::shared_ptr<const NodeContext> ctx, Tracker* tracker, std::uint64_t seed)
      : agent_(std::move(id), std::move(ctx), tracker), rng_(seed) {}

  BundleAgent& agent() { return agent_; }
  std::mt19937_64& rng() { return rng_; }

  bool post(std::function<void()> fn) {
    {
      std::lock_guard lock(mu_);
      if (stopped_) return false;
      tasks_.push_back(std::move(fn));
    }
    cv_.notify_one();
    return true;
  }

  template <typename F>
  auto call(F fn, double timeout_s) -> std::optional<decltype(fn())> {
    using R = decltype(fn());
    auto prom = std::make_shared<std::promise<R>>();
    auto fut = prom->get_future();
    if (!post([prom, fn]() mutable {
          try {
            prom->set_value(fn());
          } catch (...) {
            prom->set_exception(std::current_exception());
          }
        })) {
      return std::nullopt;
    }
    if (fut.wait_for(std::chrono::duration<double>(timeout_s)) != std::future_status::ready) return std::nullopt;
    return fut.get();
  }

  void start(std::function<void(EmuNode&)> on_tick) {
    worker_ = std::thread([this, on_tick = std::move(on_tick)] {
      for (;;) {
        std::deque<std::function<void()>> work;
        bool stopping = false;
        {
          std::unique_lock lock(mu_);
          cv_.wait_for(lock, std::chrono::milliseconds(50), [&] { return stop_ || !tasks_.empty(); });
          work.swap(tasks_);
          stopping = stop_;
          if (stopping) stopped_ = true;
        }
        for (auto& fn : work) fn();
        if (stopping) {
          std::lock_guard lock(mu_);
          for (auto& fn : tasks_) fn();
          tasks_.clear();
          return;
        }
        on_tick(*this);
      }
    });
  }

  void stop() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_one();
    if (worker_.joinable()) worker_.join();
  }

  // worker thread only
  std::set<std::string> busy;

 private:
  BundleAgent agent_;
  std::mt19937_64 rng_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> tasks_;
  bool stop_ = false;
  bool stopped_ = false;
  std::thread worker_;
};

TransmissionRecord record_of(const SendReport& r, int attempt) {
  TransmissionRecord tx;
  tx.bundle_id = r.bundle_id;
  tx.from = r.from;
  tx.to = r.to;
  tx.started_at = r.at;
  tx.completed_at = add_seconds(r.at, r.socket_rtt_ms / 1000.0);
  tx.attempt_number = attempt;
  if (r.ok) {
    tx.outcome = TxOutcome::Ok;
  } else if (r.ack) {
    tx.outcome = TxOutcome::Nak;
  } else if (r.error && r.error->find("timeout") != std::string::npos) {
    tx.outcome = TxOutcome::Timeout;
  } else {
    tx.outcome = TxOutcome::Failed;
  }
  tx.detail = r.error.value_or("");
  return tx;
}

}  // namespace

struct Emulation::Impl {
  EmulationSpec spec;
  steady::time_point t0 = steady::now();
  UtcTime start = wall_now();
  std::vector<std::string> stations;
  std::shared_ptr<SyntheticSchedule> oracle;
  std::shared_ptr<NodeContext> ctx;
  LinkTable links;
  Tracker tracker;
  std::map<std::string, std::unique_ptr<EmuNode>> nodes;
  std::map<std::string, std::unique_ptr<NodeServer>> servers;
  std::map<std::string, unsigned short> ports;

  mutable std::mutex mu;  // reports, active sends, observer
  std::vector<SendReport> sends;
  std::vector<SendReport> raw;
  std::map<std::string, ActiveSend> active;  // key from>to
  std::function<void(const TransmissionRecord&)> tx_observer;
  std::atomic<std::size_t> raw_pending{0};

  std::mutex sender_mu;
  std::vector<std::thread> senders;
  bool started = false;
  bool stopped = false;

  explicit Impl(EmulationSpec s) : spec(std::move(s)), links(spec.seed) {}

  void spawn(std::function<void()> fn) {
    std::lock_guard lock(sender_mu);
    senders.emplace_back(std::move(fn));
  }

  EmuNode& node(const std::string& id) {
    auto it = nodes.find(id);
    if (it == nodes.end()) throw NotFoundError("unknown node " + id);
    return *it->second;
  }

  void on_tick(const std::string& id, EmuNode& n) {
    const UtcTime now = wall_now();
    n.agent().tick(now);
    auto ds = n.agent().poll(now, [&n](const std::string& p) { return !n.busy.contains(p); });
    for (auto& d : ds) {
      n.busy.insert(d.next_hop);
      const unsigned short port = ports.at(d.next_hop);
      spawn([this, id, port, np = &n, d = std::move(d)] {
        const json frame = bundle_frame(d.bundle, id);
        const std::string key = id + ">" + d.next_hop;
        {
          std::lock_guard lock(mu);
          active[key] = ActiveSend{id, d.next_hop, d.bundle.bundle_id, wall_now(), encode_frame(frame).size()};
        }
        SendReport r = shaped_send(links, id, d.next_hop, port, frame, spec.emu.socket_timeout_s);
        std::function<void(const TransmissionRecord&)> obs;
        {
          std::lock_guard lock(mu);
          active.erase(key);
          sends.push_back(r);
          obs = tx_observer;
        }
        if (obs) obs(record_of(r, d.attempt));
        np->post([np, r, d] {
          np->busy.erase(d.next_hop);
          const UtcTime at = wall_now();
          if (r.ack) {
            np->agent().handle_ack(*r.ack, at);
          } else {
            np->agent().send_failed(d.bundle.bundle_id, d.next_hop, r.error.value_or("send failed"), at);
          }
        });
      });
    }
  }
};

Emulation::Emulation(EmulationSpec spec) : impl_(std::make_unique<Impl>(std::move(spec))) {
  auto& m = *impl_;
  m.spec.validate();
  const auto& emu = m.spec.emu;
  m.stations = m.spec.network.station_ids();

  // Every station shares one up/down cycle; phase_s says where the run begins.
  std::map<std::string, double> offsets;
  for (const auto& s : m.stations) offsets[s] = 0.0;
  m.oracle = std::make_shared<SyntheticSchedule>(add_seconds(m.start, -emu.phase_s), emu.up_s + emu.down_s, emu.up_s,
                                                 offsets);
  m.ctx = make_context(m.spec.network, m.start);
  m.ctx->oracle = m.oracle;

  const ShapedLinkConfig ground{m.spec.network.rates.ground_bps, emu.one_way_delay_ms, 0.0, emu.down_bps, true};
  for (const auto& [a, b] : m.spec.network.edges) {
    m.links.set(a, b, ground);
    m.links.set(b, a, ground);
  }
  const ShapedLinkConfig iss{m.spec.network.rates.iss_bps, emu.one_way_delay_ms, emu.loss, emu.down_bps, true};
  for (const auto& s : m.stations) {
    m.links.set(s, std::string(kIssNode), iss);
    m.links.set(std::string(kIssNode), s, iss);
  }
  refresh_links();

  std::vector<std::string> ids{std::string(kIssNode)};
  ids.insert(ids.end(), m.stations.begin(), m.stations.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    m.nodes.emplace(ids[i], std::make_unique<EmuNode>(ids[i], m.ctx, &m.tracker, m.spec.seed * 1000003u + i));
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string id = ids[i];
    EmuNode* node = m.nodes.at(id).get();
    const double timeout = emu.socket_timeout_s;
    auto handler = [id, node, timeout](const json& frame) -> json {
      const std::string type = frame.at("type").get<std::string>();
      const std::string from = frame.value("from", "");
      if (type == "raw") {
        if (!frame_checksum_ok(frame)) {
          return ack_frame({AckKind::CustodyNak, "", id, wall_now(), "checksum mismatch"});
        }
        return ack_frame({AckKind::DeliveryAck, "", id, wall_now(), ""});
      }
      if (type != "bundle") return nullptr;
      const std::string bid = frame.contains("bundle") ? frame["bundle"].value("bundle_id", "") : "";
      if (!frame_checksum_ok(frame)) {
        return ack_frame({AckKind::CustodyNak, bid, id, wall_now(), "checksum mismatch"});
      }
      DTNBundle b;
      try {
        b = bundle_from_document(frame.at("bundle"));
      } catch (const Error& e) {
        return ack_frame({AckKind::CustodyNak, bid, id, wall_now(), std::string("malformed bundle: ") + e.what()});
      }
      auto ack = node->call([node, b, from]() mutable { return node->agent().receive(std::move(b), from, wall_now()); },
                            timeout);
      if (!ack) return nullptr;
      return ack_frame(*ack);
    };
    const unsigned short want = emu.base_port == 0 ? 0 : static_cast<unsigned short>(emu.base_port + i);
    m.servers.emplace(id, std::make_unique<NodeServer>(id, want, handler, emu.socket_timeout_s));
    m.ports[id] = m.servers.at(id)->port();
  }
}

Emulation::~Emulation() { stop(); }

void Emulation::start() {
  auto& m = *impl_;
  if (m.started) return;
  m.started = true;
  for (auto& [id, node] : m.nodes) {
    node->start([this, id = id](EmuNode& n) { impl_->on_tick(id, n); });
  }
}

void Emulation::stop() {
  auto& m = *impl_;
  if (m.stopped) return;
  m.stopped = true;
  for (auto& [id, node] : m.nodes) node->stop();
  for (auto& [id, server] : m.servers) server->stop();
  std::vector<std::thread> joining;
  {
    std::lock_guard lock(m.sender_mu);
    joining.swap(m.senders);
  }
  for (auto& th : joining) th.join();
}

const EmulationSpec& Emulation::spec() const { return impl_->spec; }
UtcTime Emulation::started_at() const { return impl_->start; }
double Emulation::elapsed_s() const { return std::chrono::duration<double>(steady::now() - impl_->t0).count(); }
Tracker& Emulation::tracker() { return impl_->tracker; }
const NodeContext& Emulation::context() const { return *impl_->ctx; }
LinkTable& Emulation::links() { return impl_->links; }

unsigned short Emulation::port(const std::string& node) const {
  auto it = impl_->ports.find(node);
  if (it == impl_->ports.end()) throw NotFoundError("unknown node " + node);
  return it->second;
}

void Emulation::refresh_links() {
  auto& m = *impl_;
  const UtcTime now = wall_now();
  for (const auto& s : m.stations) {
    m.links.apply_link_state(s, std::string(kIssNode), m.oracle->visible(s, now), m.spec.emu.loss);
  }
}

DTNBundle Emulation::submit(const Bytes& payload, const std::string& source, const std::string& destination,
                            const BundleOptions& options) {
  auto& m = *impl_;
  EmuNode& n = m.node(source);
  if (destination != kBroadcast) m.node(destination);
  const auto ctx = m.ctx;
  auto b = n.call(
      [&n, ctx, &payload, &source, &destination, &options] {
        const UtcTime now = wall_now();
        DTNBundle b = create_bundle(payload, Endpoint(source), Endpoint(destination), options, ctx->key, now, n.rng());
        n.agent().originate(b, payload.size(), now, n.rng());
        b.status = BundleStatus::Queued;
        return b;
      },
      m.spec.emu.socket_timeout_s);
  if (!b) throw NetworkError("node " + source + " did not accept the bundle");
  return *b;
}

void Emulation::raw_attempt(const RawAttemptSpec& a, Bytes payload) {
  auto& m = *impl_;
  m.node(a.source);
  const unsigned short p = port(a.destination);
  m.raw_pending.fetch_add(1);
  m.spawn([&m, a, p, payload = std::move(payload)] {
    SendReport r = raw_transfer(m.links, a.source, a.destination, p, payload, m.spec.emu.socket_timeout_s);
    {
      std::lock_guard lock(m.mu);
      m.raw.push_back(r);
    }
    m.raw_pending.fetch_sub(1);
  });
}

void Emulation::with_agent(const std::string& node, const std::function<void(BundleAgent&)>& fn) {
  auto& m = *impl_;
  EmuNode& n = m.node(node);
  if (!m.started || m.stopped) {
    fn(n.agent());
    return;
  }
  auto done = n.call(
      [&n, &fn] {
        fn(n.agent());
        return true;
      },
      m.spec.emu.socket_timeout_s);
  if (!done) throw NetworkError("node " + node + " did not answer");
}

bool Emulation::idle() {
  for (auto& [id, node] : impl_->nodes) {
    EmuNode* n = node.get();
    auto idle = n->call([n] { return n->agent().idle() && n->busy.empty(); }, 1.0);
    if (!idle || !*idle) return false;
  }
  return true;
}

std::map<std::string, std::size_t> Emulation::backlog() {
  std::map<std::string, std::size_t> out;
  for (auto& [id, node] : impl_->nodes) {
    with_agent(id, [&out, id = id](BundleAgent& a) { out[id] = a.backlog(); });
  }
  return out;
}

std::vector<ActiveSend> Emulation::active() const {
  std::lock_guard lock(impl_->mu);
  std::vector<ActiveSend> out;
  for (const auto& [k, a] : impl_->active) out.push_back(a);
  return out;
}

std::vector<SendReport> Emulation::sends() const {
  std::lock_guard lock(impl_->mu);
  return impl_->sends;
}

std::vector<SendReport> Emulation::raw_reports() const {
  std::lock_guard lock(impl_->mu);
  return impl_->raw;
}

std::size_t Emulation::raw_pending() const { return impl_->raw_pending.load(); }

void Emulation::set_transmission_observer(std::function<void(const TransmissionRecord&)> obs) {
  std::lock_guard lock(impl_->mu);
  impl_->tx_observer = std::move(obs);
}

EmulationResult run_emulation_scenario(const EmulationSpec& spec) {
  Emulation em(spec);
  em.start();

  std::vector<Bytes> payloads;
  for (std::size_t i = 0; i < spec.injections.size(); ++i) {
    payloads.push_back(scenario_payload(spec.seed, i, spec.injections[i].payload_bytes));
  }
  auto raws = spec.raw_attempts;
  std::stable_sort(raws.begin(), raws.end(), [](const auto& a, const auto& b) { return a.at_s < b.at_s; });
  std::vector<std::size_t> order(spec.injections.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return spec.injections[a].at_s < spec.injections[b].at_s; });

  EmulationResult result;
  std::map<std::string, std::size_t> payload_of;  // bundle id -> payload index
  std::size_t next_inj = 0;
  std::size_t next_raw = 0;
  for (;;) {
    const double t = em.elapsed_s();
    em.refresh_links();
    while (next_inj < order.size() && spec.injections[order[next_inj]].at_s <= t) {
      const std::size_t k = order[next_inj++];
      const auto& inj = spec.injections[k];
      const DTNBundle b =
          em.submit(payloads[k], inj.source, inj.destination, BundleOptions{inj.priority, inj.custody, inj.ttl_s});
      payload_of[b.bundle_id] = k;
    }
    while (next_raw < raws.size() && raws[next_raw].at_s <= t) {
      const auto& a = raws[next_raw++];
      em.raw_attempt(a, scenario_payload(spec.seed + 7, next_raw, a.payload_bytes));
    }
    const bool injected = next_inj == order.size() && next_raw == raws.size();
    if (injected && em.raw_pending() == 0 && em.tracker().unresolved() == 0 && em.idle()) {
      result.drained = true;
      break;
    }
    if (t >= spec.budget_s) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  em.stop();

  result.wall_s = em.elapsed_s();
  result.sends = em.sends();
  result.raw = em.raw_reports();
  result.metrics = em.tracker().metrics(spec.name);
  result.trace.push_back(Tracker::event_log_header());
  for (auto& line : em.tracker().event_log()) result.trace.push_back(std::move(line));
  for (const auto& tr : result.metrics.bundles) {
    if (tr.status != BundleStatus::Delivered || tr.destination == kBroadcast) continue;
    auto it = payload_of.find(tr.bundle_id);
    if (it == payload_of.end()) continue;
    em.with_agent(tr.destination, [&](BundleAgent& a) {
      try {
        if (a.open(tr.bundle_id) == payloads[it->second]) ++result.verified;
      } catch (const Error&) {
      }
    });
  }
  return result;
}

namespace {

EmulationSpec emulation_base(std::string name, double loss) {
  EmulationSpec s;
  s.name = std::move(name);
  s.emu.loss = loss;
  return s;
}

void add_uplinks(EmulationSpec& s, std::size_t count, double start_s, double spacing_s) {
  const auto ids = s.network.station_ids();
  for (std::size_t i = 0; i < count; ++i) {
    InjectionSpec inj;
    inj.at_s = start_s + spacing_s * static_cast<double>(i);
    inj.source = ids[(i + 7) % ids.size()];
    inj.destination = std::string(kIssNode);
    inj.payload_bytes = 500;
    s.injections.push_back(inj);
  }
}

}  // namespace

EmulationSpec e3_profile(double loss) {
  EmulationSpec s = emulation_base("E3-loss-" + std::to_string(static_cast<int>(loss * 100 + 0.5)), loss);
  add_uplinks(s, 10, 0.5, 0.5);
  return s;
}

EmulationSpec e8_profile() {
  EmulationSpec s = emulation_base("E8", 0.10);
  add_uplinks(s, 20, 0.5, 0.5);
  return s;
}

EmulationSpec e7_profile() {
  EmulationSpec s = emulation_base("E7", 0.0);
  s.emu.phase_s = 270.0;  // 30 s before the next up window
  const auto ids = s.network.station_ids();
  for (std::size_t i = 0; i < 5; ++i) {
    s.raw_attempts.push_back(RawAttemptSpec{0.5 + static_cast<double>(i), ids[(i + 7) % ids.size()],
                                            std::string(kIssNode), 500});
  }
  add_uplinks(s, 1, 0.5, 0.0);
  return s;
}

}  // namespace dtnsim
