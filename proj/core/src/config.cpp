#include "dtnsim/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>

#include "dtnsim/error.hpp"

namespace dtnsim {

using nlohmann::json;

void ScheduleSpec::validate() const {
  if (kind == Kind::Synthetic) {
    if (!(period_s > 0) || !(window_s > 0) || window_s >= period_s) {
      throw ConfigError("schedule needs 0 < window_s < period_s");
    }
    if (stagger_s && !(*stagger_s >= 0)) throw ConfigError("stagger_s must be non-negative");
    for (const auto& [s, off] : offsets_s) {
      if (!(off >= 0) || off >= period_s) throw ConfigError("offset for " + s + " outside [0, period_s)");
    }
  } else {
    if (propagator.kind == PropagatorKind::Sgp4 && !propagator.tle) {
      throw ConfigError("orbital schedule with sgp4 needs a TLE");
    }
    propagator.synthetic.validate();
    if (threshold_deg < -90 || threshold_deg > 90) throw ConfigError("threshold_deg outside [-90, 90]");
  }
}

void NetworkConfig::validate() const {
  if (stations.empty()) throw ConfigError("no stations configured");
  MeshTopology(station_ids(), edges);
  rf.validate();
  custody.validate();
  fragment_policy.validate();
  rates.validate();
  schedule.validate();
  if (keys.shared_secret.empty()) throw ConfigError("empty shared secret");
  if (keys.kdf_iterations < 1) throw ConfigError("kdf_iterations must be positive");
  if (!(planning_horizon_s > 0)) throw ConfigError("planning_horizon_s must be positive");
}

std::vector<std::string> NetworkConfig::station_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : stations) ids.push_back(s.id);
  return ids;
}

std::shared_ptr<ContactOracle> make_oracle(const NetworkConfig& net, UtcTime epoch) {
  const auto& sc = net.schedule;
  if (sc.kind == ScheduleSpec::Kind::Orbital) {
    return std::make_shared<PassOracle>(sc.propagator, net.stations, sc.threshold_deg);
  }
  const auto ids = net.station_ids();
  const double stagger = sc.stagger_s.value_or(sc.period_s / static_cast<double>(ids.size()));
  auto sched = SyntheticSchedule::staggered(epoch, sc.period_s, sc.window_s, ids, stagger);
  auto offsets = sched.offsets();
  for (const auto& [s, off] : sc.offsets_s) offsets[s] = off;
  return std::make_shared<SyntheticSchedule>(epoch, sc.period_s, sc.window_s, std::move(offsets));
}

std::shared_ptr<NodeContext> make_context(const NetworkConfig& net, UtcTime epoch) {
  net.validate();
  auto ctx = std::make_shared<NodeContext>();
  ctx->topology = MeshTopology(net.station_ids(), net.edges);
  ctx->oracle = make_oracle(net, epoch);
  ctx->key = derive_key(net.keys);
  ctx->custody = net.custody;
  ctx->fragment_policy = net.fragment_policy;
  ctx->planning_horizon_s = net.planning_horizon_s;
  return ctx;
}

namespace {

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace

NetworkConfig network_from_json(const json& j, const std::string& base_dir) {
  NetworkConfig n;
  try {
    if (!j.is_object()) throw ConfigError("network config must be an object");
    if (j.contains("stations")) {
      n.stations.clear();
      for (const auto& s : j.at("stations")) {
        GroundStation g;
        g.id = s.at("id").get<std::string>();
        g.name = s.value("name", g.id);
        g.lat = s.at("lat").get<double>();
        g.lon = s.at("lon").get<double>();
        g.alt = s.value("alt_km", 0.0);
        n.stations.push_back(std::move(g));
      }
    }
    if (j.contains("edges")) {
      n.edges.clear();
      for (const auto& e : j.at("edges")) {
        n.edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
      }
    }
    if (j.contains("rf")) {
      const auto& r = j.at("rf");
      take(r, "tx_power_dbm", n.rf.tx_power_dbm);
      take(r, "tx_gain_dbi", n.rf.tx_gain_dbi);
      take(r, "rx_gain_dbi", n.rf.rx_gain_dbi);
      take(r, "cable_loss_db", n.rf.cable_loss_db);
      take(r, "misc_loss_db", n.rf.misc_loss_db);
      take(r, "noise_temp_k", n.rf.noise_temp_k);
      take(r, "bandwidth_hz", n.rf.bandwidth_hz);
      take(r, "carrier_freq_mhz", n.rf.carrier_freq_mhz);
      take(r, "zenith_atm_loss_db", n.rf.zenith_atm_loss_db);
      take(r, "efficiency", n.rf.efficiency);
      take(r, "min_snr_db_viable", n.rf.min_snr_db_viable);
    }
    if (j.contains("custody")) {
      take(j.at("custody"), "ack_timeout_s", n.custody.ack_timeout_s);
      take(j.at("custody"), "max_retries", n.custody.max_retries);
    }
    if (j.contains("fragmentation")) {
      take(j.at("fragmentation"), "mtu", n.fragment_policy.mtu);
      take(j.at("fragmentation"), "header_reserve", n.fragment_policy.header_reserve);
    }
    if (j.contains("keys")) {
      take(j.at("keys"), "shared_secret", n.keys.shared_secret);
      take(j.at("keys"), "salt", n.keys.salt);
      take(j.at("keys"), "kdf_iterations", n.keys.kdf_iterations);
    }
    if (j.contains("links")) {
      take(j.at("links"), "iss_bps", n.rates.iss_bps);
      take(j.at("links"), "ground_bps", n.rates.ground_bps);
    }
    take(j, "planning_horizon_s", n.planning_horizon_s);
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      auto& sc = n.schedule;
      const std::string kind = s.value("kind", "synthetic");
      if (kind == "synthetic") {
        sc.kind = ScheduleSpec::Kind::Synthetic;
      } else if (kind == "orbital") {
        sc.kind = ScheduleSpec::Kind::Orbital;
      } else {
        throw ConfigError("unknown schedule kind " + kind);
      }
      take(s, "period_s", sc.period_s);
      take(s, "window_s", sc.window_s);
      if (s.contains("stagger_s") && !s.at("stagger_s").is_null()) sc.stagger_s = s.at("stagger_s").get<double>();
      take(s, "offsets_s", sc.offsets_s);
      take(s, "threshold_deg", sc.threshold_deg);
      if (s.contains("propagator")) {
        const auto& p = s.at("propagator");
        const std::string pk = p.value("kind", "synthetic");
        auto& orbit = sc.propagator.synthetic;
        take(p, "period_s", orbit.period_s);
        take(p, "inclination_deg", orbit.inclination_deg);
        take(p, "altitude_km", orbit.altitude_km);
        take(p, "phase_rad", orbit.phase_rad);
        take(p, "raan_deg", orbit.raan_deg);
        if (p.contains("epoch")) orbit.epoch = parse_iso8601(p.at("epoch").get<std::string>());
        if (pk == "sgp4") {
          sc.propagator.kind = PropagatorKind::Sgp4;
          std::filesystem::path path = p.at("tle_path").get<std::string>();
          if (path.is_relative()) path = std::filesystem::path(base_dir) / path;
          sc.propagator.tle = load_tle_file(path.string());
        } else if (pk == "synthetic") {
          sc.propagator.kind = PropagatorKind::SyntheticCircular;
        } else {
          throw ConfigError("unknown propagator kind " + pk);
        }
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad network config: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(std::string("bad network config: ") + e.what());
  }
  n.validate();
  return n;
}

json to_json(const NetworkConfig& n) {
  json j;
  j["stations"] = json::array();
  for (const auto& s : n.stations) {
    j["stations"].push_back({{"id", s.id}, {"name", s.name}, {"lat", s.lat}, {"lon", s.lon}, {"alt_km", s.alt}});
  }
  j["edges"] = json::array();
  for (const auto& [a, b] : n.edges) j["edges"].push_back({a, b});
  j["rf"] = {{"tx_power_dbm", n.rf.tx_power_dbm},       {"tx_gain_dbi", n.rf.tx_gain_dbi},
             {"rx_gain_dbi", n.rf.rx_gain_dbi},         {"cable_loss_db", n.rf.cable_loss_db},
             {"misc_loss_db", n.rf.misc_loss_db},       {"noise_temp_k", n.rf.noise_temp_k},
             {"bandwidth_hz", n.rf.bandwidth_hz},       {"carrier_freq_mhz", n.rf.carrier_freq_mhz},
             {"zenith_atm_loss_db", n.rf.zenith_atm_loss_db}, {"efficiency", n.rf.efficiency},
             {"min_snr_db_viable", n.rf.min_snr_db_viable}};
  j["custody"] = {{"ack_timeout_s", n.custody.ack_timeout_s}, {"max_retries", n.custody.max_retries}};
  j["fragmentation"] = {{"mtu", n.fragment_policy.mtu}, {"header_reserve", n.fragment_policy.header_reserve}};
  j["keys"] = {{"shared_secret", n.keys.shared_secret}, {"salt", n.keys.salt},
               {"kdf_iterations", n.keys.kdf_iterations}};
  j["links"] = {{"iss_bps", n.rates.iss_bps}, {"ground_bps", n.rates.ground_bps}};
  j["planning_horizon_s"] = n.planning_horizon_s;
  const auto& sc = n.schedule;
  json s;
  s["kind"] = sc.kind == ScheduleSpec::Kind::Synthetic ? "synthetic" : "orbital";
  s["period_s"] = sc.period_s;
  s["window_s"] = sc.window_s;
  s["stagger_s"] = sc.stagger_s ? json(*sc.stagger_s) : json(nullptr);
  s["offsets_s"] = sc.offsets_s;
  s["threshold_deg"] = sc.threshold_deg;
  const auto& o = sc.propagator.synthetic;
  s["propagator"] = {{"kind", sc.propagator.kind == PropagatorKind::Sgp4 ? "sgp4" : "synthetic"},
                     {"period_s", o.period_s},
                     {"inclination_deg", o.inclination_deg},
                     {"altitude_km", o.altitude_km},
                     {"phase_rad", o.phase_rad},
                     {"raan_deg", o.raan_deg},
                     {"epoch", to_iso8601(o.epoch)}};
  j["schedule"] = s;
  return j;
}

void EmulationConfig::validate() const {
  if (!(up_s > 0) || !(down_s >= 0)) throw ConfigError("emulation schedule needs up_s > 0 and down_s >= 0");
  if (!(loss >= 0) || loss > 1) throw ConfigError("loss must lie in [0, 1]");
  if (!(down_bps > 0)) throw ConfigError("down_bps must be positive");
  if (!(socket_timeout_s > 0)) throw ConfigError("socket_timeout_s must be positive");
  if (one_way_delay_ms < 0) throw ConfigError("one_way_delay_ms must be non-negative");
}

AppConfig app_config_from_json(const json& j, const std::string& base_dir) {
  AppConfig c;
  try {
    if (j.contains("network")) c.network = network_from_json(j.at("network"), base_dir);
    if (j.contains("service")) {
      const auto& s = j.at("service");
      take(s, "mode", c.service.mode);
      take(s, "listen", c.service.listen);
      take(s, "port", c.service.port);
      take(s, "store_path", c.service.store_path);
      take(s, "seed", c.service.seed);
      take(s, "speedup", c.service.speedup);
      take(s, "telemetry_hz", c.service.telemetry_hz);
    }
    if (j.contains("emulation")) {
      const auto& e = j.at("emulation");
      take(e, "base_port", c.emulation.base_port);
      take(e, "up_s", c.emulation.up_s);
      take(e, "down_s", c.emulation.down_s);
      take(e, "phase_s", c.emulation.phase_s);
      take(e, "one_way_delay_ms", c.emulation.one_way_delay_ms);
      take(e, "down_bps", c.emulation.down_bps);
      take(e, "socket_timeout_s", c.emulation.socket_timeout_s);
      take(e, "loss", c.emulation.loss);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  if (c.service.mode != "sim" && c.service.mode != "emu") throw ConfigError("mode must be sim or emu");
  if (!(c.service.speedup > 0)) throw ConfigError("speedup must be positive");
  if (!(c.service.telemetry_hz > 0)) throw ConfigError("telemetry_hz must be positive");
  c.emulation.validate();
  return c;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

AppConfig load_app_config(const std::string& path) {
  return app_config_from_json(read_json_file(path), std::filesystem::path(path).parent_path().string());
}

namespace {

template <typename T>
T env_number(const char* name, const std::string& text) {
  try {
    std::size_t used = 0;
    const long double v = std::stold(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    if (v < static_cast<long double>(std::numeric_limits<T>::lowest()) ||
        v > static_cast<long double>(std::numeric_limits<T>::max())) {
      throw std::out_of_range(text);
    }
    return static_cast<T>(v);
  } catch (const std::logic_error&) {
    throw ConfigError(std::string(name) + " is not a valid number: " + text);
  }
}

}  // namespace

void apply_env(AppConfig& cfg, const EnvLookup& lookup) {
  if (auto v = lookup("DTNSIM_MODE")) {
    if (*v != "sim" && *v != "emu") throw ConfigError("DTNSIM_MODE must be sim or emu, got " + *v);
    cfg.service.mode = *v;
  }
  if (auto v = lookup("DTNSIM_LISTEN")) {
    const auto colon = v->rfind(':');
    if (colon == std::string::npos) {
      cfg.service.listen = *v;
    } else {
      cfg.service.listen = v->substr(0, colon);
      cfg.service.port = env_number<unsigned short>("DTNSIM_LISTEN", v->substr(colon + 1));
    }
    if (cfg.service.listen.empty()) throw ConfigError("DTNSIM_LISTEN has no host");
  }
  if (auto v = lookup("DTNSIM_PORT")) cfg.service.port = env_number<unsigned short>("DTNSIM_PORT", *v);
  if (auto v = lookup("DTNSIM_STORE")) {
    if (v->empty()) throw ConfigError("DTNSIM_STORE is empty");
    cfg.service.store_path = *v;
  }
  if (auto v = lookup("DTNSIM_SEED")) cfg.service.seed = env_number<std::uint64_t>("DTNSIM_SEED", *v);
  if (auto v = lookup("DTNSIM_SPEEDUP")) {
    cfg.service.speedup = env_number<double>("DTNSIM_SPEEDUP", *v);
    if (!(cfg.service.speedup > 0)) throw ConfigError("DTNSIM_SPEEDUP must be positive");
  }
  if (auto v = lookup("DTNSIM_TLE")) {
    auto& p = cfg.network.schedule.propagator;
    try {
      p.tle = load_tle_file(*v);
    } catch (const Error& e) {
      throw ConfigError(std::string("DTNSIM_TLE: ") + e.what());
    }
    p.kind = PropagatorKind::Sgp4;
  }
}

void apply_env(AppConfig& cfg) {
  apply_env(cfg, [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v) return std::nullopt;
    return std::string(v);
  });
}

}  // namespace dtnsim
