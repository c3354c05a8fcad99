#pragma once

#include <atomic>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtnsim/config.hpp"
#include "dtnsim/engine.hpp"
#include "dtnsim/linkbudget.hpp"
#include "dtnsim/netemu.hpp"
#include "dtnsim/orbital.hpp"

namespace dtnsim {

class Store;

struct StationView {
  GroundStation station;
  bool visible = false;
  LookAngles angles;
  LinkState link;
  std::size_t queue_depth = 0;
};

struct TransmissionView {
  std::string from;
  std::string to;
  std::string bundle_id;
  double progress = 0;  // [0, 1]
  std::size_t bytes = 0;
};

struct TelemetryTick {
  std::uint64_t seq = 0;
  UtcTime timestamp{};
  GeodeticPosition iss;
  std::vector<StationView> stations;
  std::vector<TransmissionView> active;
  std::map<std::string, std::size_t> queue_depths;

  nlohmann::json to_json() const;
};

// A user-level bundle at a node, whole or still being reassembled.
struct InboxEntry {
  std::string bundle_id;
  std::string source;
  std::string destination;
  Priority priority = Priority::Normal;
  UtcTime created_at{};
  bool complete = false;
  int received = 0;
  int total = 1;
  std::size_t encrypted_bytes = 0;

  nlohmann::json to_json() const;
};

std::vector<InboxEntry> inbox_view(const BundleAgent& agent);

struct Submission {
  DTNBundle bundle;
  Route route;  // planned at the source; empty when no route exists yet
};

nlohmann::json position_json(const GeodeticPosition& p);
nlohmann::json window_json(const ContactWindow& w);
// Windows of the oracle's own schedule; DomainError for oracles that cannot list them.
std::vector<ContactWindow> oracle_windows(const ContactOracle& oracle, const std::string& station, UtcTime t0,
                                          double horizon_s);

// A running network behind the service: the virtual-clock engine or the
// socket emulation. Every mutation goes through the runtime's own threads.
class Runtime {
 public:
  using TelemetryListener = std::function<void(const TelemetryTick&)>;

  virtual ~Runtime() = default;

  virtual std::string mode() const = 0;
  virtual void start() = 0;
  virtual void stop() = 0;
  virtual UtcTime now() const = 0;
  virtual const NetworkConfig& network() const = 0;
  virtual const NodeContext& context() const = 0;
  virtual Tracker& tracker() = 0;
  // Before start(): persist lifecycle, ACKs and transmissions.
  virtual void attach(Store& store) = 0;
  // Called from the runtime's thread at the telemetry rate. Set before start().
  virtual void on_telemetry(double hz, TelemetryListener listener) = 0;

  // NotFoundError for unknown nodes, DomainError for self-addressed bundles.
  virtual Submission submit(const Bytes& payload, const std::string& source, const std::string& destination,
                            const BundleOptions& options) = 0;
  // Decrypts a bundle delivered at `node`: NotFoundError, ConflictError, IntegrityError.
  virtual Bytes open(const std::string& node, const std::string& bundle_id) = 0;
  virtual std::vector<InboxEntry> inbox(const std::string& node) = 0;
  virtual TelemetryTick snapshot() = 0;

  GeodeticPosition iss_position(UtcTime t) const;
  std::vector<ContactWindow> windows(const std::string& station, UtcTime t0, double horizon_s) const;
};

class SimRuntime : public Runtime {
 public:
  // The virtual clock starts at `start` and runs `speedup` times wall time.
  SimRuntime(NetworkConfig net, UtcTime start, double speedup = 1.0, std::uint64_t seed = 42);
  ~SimRuntime() override;

  std::string mode() const override { return "sim"; }
  void start() override;
  void stop() override;
  UtcTime now() const override;
  const NetworkConfig& network() const override { return net_; }
  const NodeContext& context() const override { return *ctx_; }
  Tracker& tracker() override { return engine_.tracker(); }
  void attach(Store& store) override;
  void on_telemetry(double hz, TelemetryListener listener) override;

  Submission submit(const Bytes& payload, const std::string& source, const std::string& destination,
                    const BundleOptions& options) override;
  Bytes open(const std::string& node, const std::string& bundle_id) override;
  std::vector<InboxEntry> inbox(const std::string& node) override;
  TelemetryTick snapshot() override;

  // Runs fn on the engine thread (inline when stopped) and waits.
  void with_engine(const std::function<void(Engine&)>& fn);

 private:
  void loop();
  void drain();
  TelemetryTick make_tick();

  NetworkConfig net_;
  std::shared_ptr<NodeContext> ctx_;
  Engine engine_;
  double speedup_;
  double hz_ = 1.0;
  TelemetryListener listener_;
  std::uint64_t seq_ = 0;
  std::atomic<std::int64_t> now_us_{0};
  std::mutex work_mu_;
  std::deque<std::function<void()>> work_;
  std::atomic<bool> stop_{false};
  bool running_ = false;
  std::thread thread_;
};

class EmuRuntime : public Runtime {
 public:
  EmuRuntime(NetworkConfig net, EmulationConfig emu, std::uint64_t seed = 42);
  ~EmuRuntime() override;

  std::string mode() const override { return "emu"; }
  void start() override;
  void stop() override;
  UtcTime now() const override;
  const NetworkConfig& network() const override { return net_; }
  const NodeContext& context() const override { return em_.context(); }
  Tracker& tracker() override { return em_.tracker(); }
  void attach(Store& store) override;
  void on_telemetry(double hz, TelemetryListener listener) override;

  Submission submit(const Bytes& payload, const std::string& source, const std::string& destination,
                    const BundleOptions& options) override;
  Bytes open(const std::string& node, const std::string& bundle_id) override;
  std::vector<InboxEntry> inbox(const std::string& node) override;
  TelemetryTick snapshot() override;

  Emulation& emulation() { return em_; }

 private:
  void loop();

  NetworkConfig net_;
  Emulation em_;
  double hz_ = 1.0;
  TelemetryListener listener_;
  std::atomic<std::uint64_t> seq_{0};
  std::atomic<bool> stop_{false};
  bool running_ = false;
  std::thread thread_;
};

// "sim" or "emu".
std::unique_ptr<Runtime> make_runtime(const AppConfig& cfg, UtcTime start);

}  // namespace dtnsim
