#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "dtnsim/agent.hpp"
#include "dtnsim/orbital.hpp"
#include "dtnsim/records.hpp"
#include "dtnsim/tracker.hpp"

namespace dtnsim {

// Fixed repeating windows: station s is in contact when
// (t - epoch - offset_s) mod period lies in [0, window).
class SyntheticSchedule : public ContactOracle {
 public:
  SyntheticSchedule(UtcTime epoch, double period_s, double window_s,
                    std::map<std::string, double> offsets_s);
  // Station k of the list gets offset k * stagger_s (mod period).
  static SyntheticSchedule staggered(UtcTime epoch, double period_s, double window_s,
                                     const std::vector<std::string>& stations, double stagger_s);

  bool visible(const std::string& station, UtcTime t) const override;
  std::optional<UtcTime> next_aos(const std::string& station, UtcTime t, double horizon_s) const override;
  std::optional<UtcTime> contact_end(const std::string& station, UtcTime t) const override;

  std::vector<ContactWindow> windows(const std::string& station, UtcTime t0, double horizon_s) const;
  double period_s() const { return period_; }
  double window_s() const { return window_; }
  const std::map<std::string, double>& offsets() const { return offsets_; }

 private:
  std::optional<double> phase(const std::string& station, UtcTime t) const;

  UtcTime epoch_;
  double period_;
  double window_;
  std::map<std::string, double> offsets_;
};

// Contact windows from orbit propagation, cached per station.
class PassOracle : public ContactOracle {
 public:
  PassOracle(PropagatorSpec spec, std::vector<GroundStation> stations, double threshold_deg = 0.0,
             double chunk_s = 86400.0);

  bool visible(const std::string& station, UtcTime t) const override;
  std::optional<UtcTime> next_aos(const std::string& station, UtcTime t, double horizon_s) const override;
  std::optional<UtcTime> contact_end(const std::string& station, UtcTime t) const override;

  std::vector<ContactWindow> windows(const std::string& station, UtcTime t0, double horizon_s) const;
  const PropagatorSpec& spec() const { return spec_; }

 private:
  struct Cache {
    UtcTime from{};
    UtcTime to{};
    std::shared_ptr<const std::vector<ContactWindow>> windows;
  };
  std::shared_ptr<const std::vector<ContactWindow>> covering(const std::string& station, UtcTime t, double horizon_s) const;

  PropagatorSpec spec_;
  std::map<std::string, GroundStation> stations_;
  double threshold_;
  double chunk_;
  mutable std::mutex mu_;
  mutable std::map<std::string, Cache> cache_;
};

struct LinkRates {
  double iss_bps = 56000.0;   // ISS link during contact
  double ground_bps = 100e6;  // inter-station mesh, always up
  void validate() const;
};

// serialized_size * 8 / rate. DomainError for a non-positive rate.
double transmission_time(const DTNBundle& bundle, double rate_bps);

struct EngineConfig {
  UtcTime start = make_utc(2025, 1, 1);
  double tick_s = 0.1;
  LinkRates rates;
  std::uint64_t seed = 42;
};

struct ActiveTransmission {
  std::string from;
  std::string to;
  std::string bundle_id;
  std::string parent_id;
  UtcTime started{};
  UtcTime ends{};
  std::size_t bytes = 0;
  int attempt = 1;
  bool completes = true;  // false when the contact closes first
  std::string failure;

  double progress(UtcTime now) const;
};

// A bundle to originate at a given virtual time.
struct Injection {
  UtcTime at{};
  std::string source;
  std::string destination;
  Bytes payload;
  BundleOptions options;
};

// Virtual-clock network of BundleAgents. Single-threaded: post() is the only
// entry point safe to call from other threads; posted work runs at the start
// of the next step.
class Engine {
 public:
  Engine(std::shared_ptr<const NodeContext> ctx, EngineConfig cfg);

  UtcTime now() const { return now_; }
  const EngineConfig& config() const { return cfg_; }
  const NodeContext& context() const { return *ctx_; }
  Tracker& tracker() { return tracker_; }
  const Tracker& tracker() const { return tracker_; }

  BundleAgent& agent(const std::string& id);
  const std::map<std::string, std::unique_ptr<BundleAgent>>& agents() const { return agents_; }

  void schedule(Injection inj);
  std::size_t scheduled() const { return injections_.size(); }
  // Creates and originates a bundle at the current time.
  DTNBundle submit(std::span<const std::uint8_t> plaintext, const std::string& source,
                   const std::string& destination, const BundleOptions& options);

  void post(std::function<void(Engine&)> fn);

  void step();
  void run_until(UtcTime t);
  // Steps until nothing is scheduled, queued or unresolved, or `limit`.
  // Returns true when the network drained.
  bool run_until_settled(UtcTime limit);
  bool settled() const;

  std::vector<ActiveTransmission> active() const;
  const std::vector<TransmissionRecord>& transmissions() const { return history_; }
  void set_transmission_observer(std::function<void(const TransmissionRecord&)> obs);

 private:
  void drain_posted();
  void complete(const ActiveTransmission& tx, const Dispatch& d);
  void start(const std::string& from, Dispatch d);
  bool iss_link(const std::string& a, const std::string& b) const;

  std::shared_ptr<const NodeContext> ctx_;
  EngineConfig cfg_;
  UtcTime now_;
  std::mt19937_64 rng_;
  Tracker tracker_;
  std::map<std::string, std::unique_ptr<BundleAgent>> agents_;
  std::multimap<UtcTime, Injection> injections_;
  std::map<std::string, std::pair<ActiveTransmission, Dispatch>> links_;  // key "from>to"
  std::vector<TransmissionRecord> history_;
  std::function<void(const TransmissionRecord&)> tx_observer_;
  std::mutex post_mu_;
  std::vector<std::function<void(Engine&)>> posted_;
};

}  // namespace dtnsim
