#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtnsim/agent.hpp"
#include "dtnsim/config.hpp"
#include "dtnsim/engine.hpp"
#include "dtnsim/records.hpp"
#include "dtnsim/scenario.hpp"
#include "dtnsim/tracker.hpp"

namespace dtnsim {

// ---- wire format -----------------------------------------------------------
//
// Frame = 4-byte big-endian body length + JSON body. Bodies carry a "type":
// bundle, custody_ack, custody_nak, delivery_ack, or raw (the no-custody
// baseline transfer).

inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;

std::string encode_frame(const nlohmann::json& body);
// Decodes one complete frame; ProtocolError when the length disagrees with the
// buffer or the body is not a JSON object.
nlohmann::json decode_frame(std::string_view bytes);

nlohmann::json bundle_frame(const DTNBundle& bundle, const std::string& from);
nlohmann::json raw_frame(const std::string& from, const Bytes& payload);
nlohmann::json ack_frame(const AckMessage& ack);
AckMessage ack_from_frame(const nlohmann::json& frame);  // ProtocolError
// Checksum field against SHA-256 of the carried ciphertext (or raw payload).
bool frame_checksum_ok(const nlohmann::json& frame) noexcept;

// ---- sockets ---------------------------------------------------------------

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() {
    const int f = fd_;
    fd_ = -1;
    return f;
  }
  void close();

 private:
  int fd_ = -1;
};

Socket connect_loopback(unsigned short port, double timeout_s);  // NetworkError
void set_timeouts(const Socket& s, double timeout_s);
void write_all(const Socket& s, std::string_view bytes);  // NetworkError
// nullopt on clean EOF before any byte. NetworkError on timeout or reset,
// ProtocolError on a bad length prefix or body.
std::optional<nlohmann::json> read_frame(const Socket& s);

// ---- shaping ---------------------------------------------------------------

struct ShapedLinkConfig {
  double bandwidth_bps = 56000.0;
  double one_way_delay_ms = 3.0;
  double loss_prob = 0.0;
  double down_bandwidth_bps = 100.0;
  bool up = true;

  double rate_bps() const { return up ? bandwidth_bps : down_bandwidth_bps; }
  void validate() const;  // ConfigError
};

// Shaping state of every directed link; safe to use from any thread.
class LinkTable {
 public:
  explicit LinkTable(std::uint64_t seed = 1) : seed_(seed) {}

  void set(const std::string& from, const std::string& to, ShapedLinkConfig cfg);
  ShapedLinkConfig get(const std::string& from, const std::string& to) const;  // NotFoundError
  bool contains(const std::string& from, const std::string& to) const;
  // Both directions of a pair: up at the configured bandwidth or starved.
  void apply_link_state(const std::string& a, const std::string& b, bool visible, double loss_prob);
  // Per-link seeded loss draw.
  bool draw_loss(const std::string& from, const std::string& to);

 private:
  struct Entry {
    ShapedLinkConfig cfg;
    std::mt19937_64 rng;
  };
  Entry& entry(const std::string& from, const std::string& to);

  std::uint64_t seed_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, Entry> links_;
};

struct SendReport {
  bool ok = false;
  int attempts = 1;
  double socket_rtt_ms = 0;
  std::optional<std::string> error;
  std::optional<AckMessage> ack;  // reply, NAKs included
  std::string from;
  std::string to;
  std::string bundle_id;
  std::size_t bytes = 0;
  UtcTime at{};

  nlohmann::json to_json() const;
};

// One attempt: connect, release the frame through a token bucket at the
// link's current rate, wait for the reply frame. A lost frame is cut short on
// the wire; a starved link stalls into the socket timeout.
SendReport shaped_send(LinkTable& links, const std::string& from, const std::string& to, unsigned short port,
                       const nlohmann::json& frame, double socket_timeout_s);

// Baseline transfer: one attempt, no custody, no retry.
SendReport raw_transfer(LinkTable& links, const std::string& from, const std::string& to, unsigned short port,
                        const Bytes& payload, double socket_timeout_s);

// ---- node servers ----------------------------------------------------------

class NodeServer {
 public:
  // Reply frame for a request frame, or null to close the connection.
  using Handler = std::function<nlohmann::json(const nlohmann::json&)>;

  // Port 0 binds an ephemeral port. NetworkError when the bind fails.
  NodeServer(std::string node_id, unsigned short port, Handler handler, double socket_timeout_s = 5.0);
  ~NodeServer();
  NodeServer(const NodeServer&) = delete;
  NodeServer& operator=(const NodeServer&) = delete;

  unsigned short port() const { return port_; }
  const std::string& node_id() const { return id_; }
  void stop();
  std::size_t frames_handled() const { return handled_.load(); }

 private:
  void accept_loop();
  void serve(Socket conn);

  std::string id_;
  Handler handler_;
  double timeout_s_;
  Socket listener_;
  unsigned short port_ = 0;
  std::atomic<bool> stop_{false};
  std::atomic<std::size_t> handled_{0};
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::vector<std::thread> conns_;
  std::set<int> open_fds_;
};

// ---- emulation -------------------------------------------------------------

struct RawAttemptSpec {
  double at_s = 0;
  std::string source;
  std::string destination = std::string(kIssNode);
  std::size_t payload_bytes = 500;
};

struct EmulationSpec {
  std::string name = "emulation";
  std::uint64_t seed = 42;
  NetworkConfig network;
  EmulationConfig emu;
  std::vector<InjectionSpec> injections;  // at_s: wall seconds after start
  std::vector<RawAttemptSpec> raw_attempts;
  double budget_s = 600.0;

  void validate() const;
};

struct EmulationResult {
  MetricsRecord metrics;
  std::vector<SendReport> sends;  // every DTN hop attempt
  std::vector<SendReport> raw;    // baseline attempts
  std::vector<std::string> trace;
  std::size_t verified = 0;
  bool drained = false;
  double wall_s = 0;

  std::size_t sends_ok() const;
  std::size_t raw_ok() const;
  nlohmann::json to_json() const;
};

// A send in progress on one emulated link.
struct ActiveSend {
  std::string from;
  std::string to;
  std::string bundle_id;
  UtcTime started{};
  std::size_t bytes = 0;

  double progress(UtcTime now, double rate_bps) const;
};

// Every node as a loopback server with its own DTN worker thread; the ISS
// links follow a global up/down wall-clock schedule.
class Emulation {
 public:
  explicit Emulation(EmulationSpec spec);  // ConfigError, NetworkError when a port is taken
  ~Emulation();
  Emulation(const Emulation&) = delete;
  Emulation& operator=(const Emulation&) = delete;

  void start();
  void stop();  // joins every thread; idempotent

  const EmulationSpec& spec() const;
  UtcTime started_at() const;
  double elapsed_s() const;
  Tracker& tracker();
  const NodeContext& context() const;
  LinkTable& links();
  unsigned short port(const std::string& node) const;  // NotFoundError
  // Re-applies the schedule to the ISS links; run_emulation_scenario and the
  // service call this periodically.
  void refresh_links();

  // Created and queued on the source node's worker. NotFoundError for
  // unknown nodes, NetworkError if the worker does not answer in time.
  DTNBundle submit(const Bytes& payload, const std::string& source, const std::string& destination,
                   const BundleOptions& options);
  void raw_attempt(const RawAttemptSpec& attempt, Bytes payload);  // runs in the background

  // Runs `fn` on the node's worker and waits for it.
  void with_agent(const std::string& node, const std::function<void(BundleAgent&)>& fn);

  bool idle();
  std::map<std::string, std::size_t> backlog();
  std::vector<ActiveSend> active() const;
  std::vector<SendReport> sends() const;
  std::vector<SendReport> raw_reports() const;
  std::size_t raw_pending() const;
  // Called from sender threads for every finished hop attempt.
  void set_transmission_observer(std::function<void(const TransmissionRecord&)> obs);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

EmulationResult run_emulation_scenario(const EmulationSpec& spec);

inline constexpr double kLossLevels[] = {0.0, 0.05, 0.10, 0.20, 0.30};
EmulationSpec e3_profile(double loss);  // 10 x 500 B at a given ISS-link loss
EmulationSpec e8_profile();             // 20 x 500 B at 10 % loss
EmulationSpec e7_profile();             // 5 raw attempts in a down window plus 1 custody bundle

}  // namespace dtnsim
