#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtnsim/agent.hpp"

namespace dtnsim {

struct LatencyStats {
  double mean = 0;
  double median = 0;
  double p95 = 0;  // nearest rank
  double max = 0;
  std::size_t count = 0;
};

// nullopt when empty.
std::optional<LatencyStats> latency_stats(std::vector<double> latencies_s);

// Life of one user-level bundle across the network.
struct BundleTrace {
  std::string bundle_id;
  std::string source;
  std::string destination;
  Priority priority = Priority::Normal;
  bool custody = true;
  UtcTime created_at{};
  std::optional<UtcTime> delivered_at;
  BundleStatus status = BundleStatus::Queued;
  std::size_t plaintext_bytes = 0;
  std::size_t encrypted_bytes = 0;
  int fragments = 1;
  int hops = 0;
  std::vector<std::string> hop_list;
  int transmissions = 0;
  int retransmissions = 0;
  int expected_receivers = 1;
  std::set<std::string> receivers;
  DTNBundle bundle;  // as created, before fragmentation

  std::optional<double> latency_s() const;
};

struct Counters {
  long sends = 0;
  long send_failures = 0;
  long custody_acks = 0;
  long delivery_acks = 0;
  long naks = 0;
  long retransmissions = 0;
  long rejected = 0;
  long long bytes_sent = 0;
};

struct MetricsRecord {
  std::string scenario;
  std::size_t bundle_count = 0;
  std::size_t delivered = 0;
  std::size_t failed = 0;
  std::size_t expired = 0;
  std::size_t in_flight = 0;
  double delivery_ratio = 1.0;  // vacuously 1 with no bundles
  std::optional<LatencyStats> latency;
  double mean_hops = 0;
  Counters counters;
  std::vector<BundleTrace> bundles;

  nlohmann::json to_json() const;
};

// Thread-safe sink that folds agent events into per-bundle traces, counters
// and a line-per-event log.
class Tracker : public EventSink {
 public:
  using Observer = std::function<void(const AgentEvent&, const BundleTrace&)>;

  void record(const AgentEvent& event) override;
  // Called under the tracker lock after each event touching a known bundle.
  void set_observer(Observer obs);

  std::vector<BundleTrace> traces() const;  // by created_at, then id
  std::optional<BundleTrace> find(const std::string& bundle_id) const;
  Counters counters() const;
  std::vector<std::string> event_log() const;
  std::size_t unresolved() const;  // bundles not yet terminal
  std::size_t size() const;
  MetricsRecord metrics(const std::string& scenario) const;

  static std::string event_log_header();

 private:
  mutable std::mutex mu_;
  std::map<std::string, BundleTrace> traces_;
  Counters counters_;
  std::vector<std::string> log_;
  Observer observer_;
};

std::string bundles_csv(const std::vector<BundleTrace>& traces);

}  // namespace dtnsim
