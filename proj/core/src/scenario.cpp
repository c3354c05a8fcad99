#include "dtnsim/scenario.hpp"

#include <chrono>
#include <filesystem>

#include "dtnsim/error.hpp"

namespace dtnsim {

using nlohmann::json;

std::vector<InjectionSpec> expand(const InjectionPlan& plan, const std::vector<std::string>& stations) {
  if (stations.empty()) throw ConfigError("injection plan needs stations");
  if (plan.payload_sizes.empty()) throw ConfigError("injection plan needs payload sizes");
  if (plan.spacing_s < 0) throw ConfigError("negative injection spacing");
  std::vector<InjectionSpec> out;
  for (std::size_t i = 0; i < plan.count; ++i) {
    InjectionSpec s;
    s.at_s = plan.start_s + plan.spacing_s * static_cast<double>(i);
    s.source = stations[(i + plan.source_offset) % stations.size()];
    const std::size_t k = plan.per_size ? i / plan.per_size : i;
    s.payload_bytes = plan.payload_sizes[k % plan.payload_sizes.size()];
    s.destination = plan.destination;
    s.priority = plan.priority;
    s.custody = plan.custody;
    s.ttl_s = plan.ttl_s;
    out.push_back(std::move(s));
  }
  return out;
}

void ScenarioSpec::validate() const {
  if (!(duration_s > 0)) throw ConfigError("duration_s must be positive");
  if (!(tick_s > 0)) throw ConfigError("tick_s must be positive");
  network.validate();
  const auto ids = network.station_ids();
  auto known = [&](const std::string& n) {
    return n == kIssNode || std::find(ids.begin(), ids.end(), n) != ids.end();
  };
  for (const auto& inj : injections) {
    if (inj.at_s < 0 || inj.at_s > duration_s) throw ConfigError("injection time outside the run");
    if (!known(inj.source) || (inj.source == kIssNode && inj.destination == kBroadcast)) {
      throw ConfigError("bad injection source " + inj.source);
    }
    if (inj.destination != kBroadcast && !known(inj.destination)) {
      throw ConfigError("bad injection destination " + inj.destination);
    }
    if (inj.destination == inj.source) throw ConfigError("injection addressed to its own source");
    if (inj.payload_bytes == 0) throw ConfigError("empty payload");
    if (!(inj.ttl_s > 0)) throw ConfigError("ttl_s must be positive");
  }
}

namespace {

InjectionSpec injection_from_json(const json& j) {
  InjectionSpec s;
  s.at_s = j.at("at_s").get<double>();
  s.source = j.at("source").get<std::string>();
  s.destination = j.value("destination", s.destination);
  s.payload_bytes = j.value("payload_bytes", s.payload_bytes);
  s.priority = parse_priority(j.value("priority", std::string("NORMAL")));
  s.custody = j.value("custody", true);
  s.ttl_s = j.value("ttl_s", s.ttl_s);
  return s;
}

InjectionPlan plan_from_json(const json& j) {
  InjectionPlan p;
  p.count = j.value("count", p.count);
  p.start_s = j.value("start_s", p.start_s);
  if (j.contains("spacing_s")) {
    p.spacing_s = j.at("spacing_s").get<double>();
  } else if (j.contains("span_s")) {
    p.spacing_s = p.count ? j.at("span_s").get<double>() / static_cast<double>(p.count) : 0.0;
  }
  if (j.contains("payload_bytes")) {
    const auto& pb = j.at("payload_bytes");
    p.payload_sizes = pb.is_array() ? pb.get<std::vector<std::size_t>>()
                                    : std::vector<std::size_t>{pb.get<std::size_t>()};
  }
  p.per_size = j.value("per_size", p.per_size);
  p.source_offset = j.value("source_offset", p.source_offset);
  p.destination = j.value("destination", p.destination);
  p.priority = parse_priority(j.value("priority", std::string("NORMAL")));
  p.custody = j.value("custody", true);
  p.ttl_s = j.value("ttl_s", p.ttl_s);
  return p;
}

}  // namespace

ScenarioSpec scenario_from_json(const json& j, const std::string& base_dir) {
  ScenarioSpec s;
  try {
    s.name = j.value("name", s.name);
    s.seed = j.value("seed", s.seed);
    if (j.contains("start")) s.start = parse_iso8601(j.at("start").get<std::string>());
    s.duration_s = j.value("duration_s", s.duration_s);
    s.tick_s = j.value("tick_s", s.tick_s);
    if (j.contains("network")) s.network = network_from_json(j.at("network"), base_dir);
    if (j.contains("injections")) {
      const auto& inj = j.at("injections");
      if (inj.is_array()) {
        for (const auto& x : inj) s.injections.push_back(injection_from_json(x));
      } else {
        s.injections = expand(plan_from_json(inj), s.network.station_ids());
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError("bad scenario: " + std::string(e.what()));
  } catch (const ParseError& e) {
    throw ConfigError("bad scenario: " + std::string(e.what()));
  }
  s.validate();
  return s;
}

std::vector<ScenarioSpec> profiles_from_json(const json& j, const std::string& base_dir) {
  if (!j.is_object() || !j.contains("levels")) return {scenario_from_json(j, base_dir)};
  std::vector<ScenarioSpec> out;
  try {
    for (const auto& level : j.at("levels")) {
      json one = j;
      one.erase("levels");
      const auto n = level.get<std::size_t>();
      one["name"] = j.value("name", std::string("custom")) + "-" + std::to_string(n);
      if (!one.contains("injections") || !one["injections"].is_object()) {
        throw ConfigError("levels need an injection generator");
      }
      one["injections"]["count"] = n;
      out.push_back(scenario_from_json(one, base_dir));
    }
  } catch (const json::exception& e) {
    throw ConfigError("bad profile: " + std::string(e.what()));
  }
  return out;
}

std::vector<ScenarioSpec> load_profiles(const std::string& path) {
  return profiles_from_json(read_json_file(path), std::filesystem::path(path).parent_path().string());
}

json to_json(const ScenarioSpec& s) {
  json j;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["start"] = to_iso8601(s.start);
  j["duration_s"] = s.duration_s;
  j["tick_s"] = s.tick_s;
  j["network"] = to_json(s.network);
  j["injections"] = json::array();
  for (const auto& i : s.injections) {
    j["injections"].push_back({{"at_s", i.at_s},
                               {"source", i.source},
                               {"destination", i.destination},
                               {"payload_bytes", i.payload_bytes},
                               {"priority", std::string(to_string(i.priority))},
                               {"custody", i.custody},
                               {"ttl_s", i.ttl_s}});
  }
  return j;
}

namespace {

ScenarioSpec staggered_base(std::string name) {
  ScenarioSpec s;
  s.name = std::move(name);
  // 480 s windows 540 s apart: short handoff gaps and one long gap per orbit.
  s.network.schedule.stagger_s = 540.0;
  return s;
}

}  // namespace

ScenarioSpec e1_profile() {
  ScenarioSpec s = staggered_base("E1");
  InjectionPlan p;  // 20 x 500 B, every 276 s from t = 30 s
  s.injections = expand(p, s.network.station_ids());
  return s;
}

ScenarioSpec e4_profile() {
  ScenarioSpec s = staggered_base("E4");
  s.network.fragment_policy.mtu = 2048;
  InjectionPlan p;
  p.count = 30;
  p.spacing_s = 180.0;
  p.payload_sizes = {1024, 4096, 16384};
  p.per_size = 10;
  s.injections = expand(p, s.network.station_ids());
  return s;
}

ScenarioSpec e5_profile(std::size_t count) {
  ScenarioSpec s = staggered_base("E5-" + std::to_string(count));
  InjectionPlan p;
  p.count = count;
  p.spacing_s = count ? (5520.0 - 60.0) / static_cast<double>(count) : 0.0;
  s.injections = expand(p, s.network.station_ids());
  return s;
}

Bytes scenario_payload(std::uint64_t seed, std::size_t index, std::size_t size) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + index + 1);
  Bytes out(size);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

ScenarioResult run_scenario(const ScenarioSpec& spec, const RunHooks& hooks) {
  spec.validate();
  auto ctx = make_context(spec.network, spec.start);
  Engine engine(ctx, EngineConfig{spec.start, spec.tick_s, spec.network.rates, spec.seed});
  if (hooks.on_start) hooks.on_start(engine);

  std::vector<Bytes> payloads;
  for (std::size_t i = 0; i < spec.injections.size(); ++i) {
    const auto& inj = spec.injections[i];
    payloads.push_back(scenario_payload(spec.seed, i, inj.payload_bytes));
    engine.schedule(Injection{add_seconds(spec.start, inj.at_s), inj.source, inj.destination, payloads.back(),
                              BundleOptions{inj.priority, inj.custody, inj.ttl_s}});
  }
  ScenarioResult r;
  r.drained = engine.run_until_settled(add_seconds(spec.start, spec.duration_s));
  r.virtual_s = seconds_between(spec.start, engine.now());
  r.metrics = engine.tracker().metrics(spec.name);
  r.trace.push_back(Tracker::event_log_header());
  for (auto& line : engine.tracker().event_log()) r.trace.push_back(std::move(line));
  r.transmissions = engine.transmissions();

  // Bundles are created in injection order, so traces sorted by creation
  // line up with payloads.
  for (std::size_t i = 0; i < r.metrics.bundles.size() && i < payloads.size(); ++i) {
    const auto& t = r.metrics.bundles[i];
    if (t.status != BundleStatus::Delivered || t.destination == kBroadcast) continue;
    try {
      if (engine.agent(t.destination).open(t.bundle_id) == payloads[i]) {
        ++r.verified;
      } else {
        ++r.mismatched;
      }
    } catch (const Error&) {
      ++r.mismatched;
    }
  }
  return r;
}

json ScenarioResult::to_json() const {
  json j = metrics.to_json();
  j["verified_payloads"] = verified;
  j["mismatched_payloads"] = mismatched;
  j["drained"] = drained;
  j["virtual_s"] = virtual_s;
  j["transmissions"] = transmissions.size();
  return j;
}

std::vector<SecurityRow> security_benchmark(const std::vector<std::size_t>& sizes, int iterations,
                                            const SymmetricKey& key) {
  if (iterations < 1) throw DomainError("iterations must be positive");
  using clock = std::chrono::steady_clock;
  std::vector<SecurityRow> rows;
  std::mt19937_64 rng(1);
  for (const std::size_t n : sizes) {
    Bytes plain(n);
    for (auto& b : plain) b = static_cast<std::uint8_t>(rng());
    SecurityRow row;
    row.plaintext_bytes = n;
    row.encrypted_bytes = encrypted_size(n);
    row.overhead_pct = 100.0 * (static_cast<double>(row.encrypted_bytes) - static_cast<double>(n)) /
                       static_cast<double>(n);
    double enc = 0, dec = 0;
    for (int i = 0; i < iterations; ++i) {
      const auto t0 = clock::now();
      const PCB pcb = pcb_encrypt(plain, key);
      const PIB pib = pib_create(sha256_hex(pcb.ciphertext), key);
      const auto t1 = clock::now();
      if (!pib_verify(pib, sha256_hex(pcb.ciphertext), key) || pcb_decrypt(pcb, key) != plain) {
        throw IntegrityError("security roundtrip failed");
      }
      const auto t2 = clock::now();
      enc += std::chrono::duration<double, std::milli>(t1 - t0).count();
      dec += std::chrono::duration<double, std::milli>(t2 - t1).count();
    }
    row.encrypt_sign_ms = enc / iterations;
    row.verify_decrypt_ms = dec / iterations;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace dtnsim
