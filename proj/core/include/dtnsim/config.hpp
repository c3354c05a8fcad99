#pragma once

#include <functional>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtnsim/agent.hpp"
#include "dtnsim/bsp.hpp"
#include "dtnsim/engine.hpp"
#include "dtnsim/linkbudget.hpp"
#include "dtnsim/orbital.hpp"

namespace dtnsim {

struct ScheduleSpec {
  enum class Kind { Synthetic, Orbital };
  Kind kind = Kind::Synthetic;
  // synthetic
  double period_s = 5520.0;
  double window_s = 480.0;
  std::optional<double> stagger_s;  // unset: period / station count
  std::map<std::string, double> offsets_s;  // explicit per-station overrides
  // orbital
  PropagatorSpec propagator;
  double threshold_deg = 0.0;

  void validate() const;
};

// Everything that defines one network, shared by every mode.
struct NetworkConfig {
  std::vector<GroundStation> stations = default_stations();
  std::vector<Edge> edges = MeshTopology::default_edges();
  RFConfig rf;
  CustodyConfig custody;
  FragmentPolicy fragment_policy;
  KeyConfig keys{"dtnsim-shared-secret", "dtnsim-salt", 100000};
  LinkRates rates;
  ScheduleSpec schedule;
  double planning_horizon_s = kDefaultPlanningHorizonS;

  void validate() const;
  std::vector<std::string> station_ids() const;
};

// Oracle for the configured schedule; `epoch` anchors the synthetic windows.
std::shared_ptr<ContactOracle> make_oracle(const NetworkConfig& net, UtcTime epoch);
std::shared_ptr<NodeContext> make_context(const NetworkConfig& net, UtcTime epoch);

// Missing keys keep their defaults. ConfigError on malformed documents.
// Relative file references (tle_path) resolve against `base_dir`.
NetworkConfig network_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
nlohmann::json to_json(const NetworkConfig& net);

struct ServiceConfig {
  std::string mode = "sim";  // sim | emu
  std::string listen = "127.0.0.1";
  unsigned short port = 8080;
  std::string store_path = "dtnsim.db";
  std::uint64_t seed = 42;
  double speedup = 1.0;
  double telemetry_hz = 1.0;
};

struct EmulationConfig {
  unsigned short base_port = 15000;
  double up_s = 120.0;
  double down_s = 180.0;
  double phase_s = 0.0;  // where in the up/down cycle the run starts
  double one_way_delay_ms = 3.0;
  double down_bps = 100.0;
  double socket_timeout_s = 5.0;
  double loss = 0.0;

  void validate() const;
};

struct AppConfig {
  NetworkConfig network;
  ServiceConfig service;
  EmulationConfig emulation;
};

AppConfig app_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
AppConfig load_app_config(const std::string& path);
nlohmann::json read_json_file(const std::string& path);  // ConfigError when unreadable

// Environment overrides: DTNSIM_MODE, DTNSIM_LISTEN (host or host:port),
// DTNSIM_PORT, DTNSIM_STORE, DTNSIM_TLE, DTNSIM_SEED, DTNSIM_SPEEDUP.
// `lookup` returns nullopt for unset variables; ConfigError on bad values.
using EnvLookup = std::function<std::optional<std::string>(const char*)>;
void apply_env(AppConfig& cfg, const EnvLookup& lookup);
void apply_env(AppConfig& cfg);  // the process environment

}  // namespace dtnsim
