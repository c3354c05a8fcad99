#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtnsim/config.hpp"
#include "dtnsim/engine.hpp"
#include "dtnsim/tracker.hpp"

namespace dtnsim {

struct InjectionSpec {
  double at_s = 0;  // from scenario start
  std::string source;
  std::string destination = std::string(kIssNode);
  std::size_t payload_bytes = 500;
  Priority priority = Priority::Normal;
  bool custody = true;
  double ttl_s = kDefaultTtlSeconds;

  bool operator==(const InjectionSpec&) const = default;
};

// Evenly spaced injections. Bundle i leaves stations[(i + source_offset) % N]
// with payload size sizes[i / per_size] (or sizes[i % n] when per_size is 0).
struct InjectionPlan {
  std::size_t count = 20;
  double start_s = 30.0;
  double spacing_s = 276.0;
  std::vector<std::size_t> payload_sizes{500};
  std::size_t per_size = 0;
  std::size_t source_offset = 7;
  std::string destination = std::string(kIssNode);
  Priority priority = Priority::Normal;
  bool custody = true;
  double ttl_s = kDefaultTtlSeconds;
};

std::vector<InjectionSpec> expand(const InjectionPlan& plan, const std::vector<std::string>& stations);

struct ScenarioSpec {
  std::string name = "custom";
  std::uint64_t seed = 42;
  UtcTime start = make_utc(2025, 1, 1);
  double duration_s = 4 * 5520.0;
  double tick_s = 0.1;
  NetworkConfig network;
  std::vector<InjectionSpec> injections;

  void validate() const;  // ConfigError
};

// Document form: {"name", "seed", "start", "duration_s", "tick_s",
// "network": {...}, "injections": [..] or {generator}}.
ScenarioSpec scenario_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
nlohmann::json to_json(const ScenarioSpec& spec);

// A profile document may carry "levels": one scenario per bundle count, named
// "{name}-{count}", with the generator's count replaced.
std::vector<ScenarioSpec> profiles_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
std::vector<ScenarioSpec> load_profiles(const std::string& path);

// Built-in profiles: E1, E4, and E5 at a given bundle count.
ScenarioSpec e1_profile();
ScenarioSpec e4_profile();
ScenarioSpec e5_profile(std::size_t count);
inline constexpr std::size_t kE5Levels[] = {1, 5, 10, 25, 50};

struct ScenarioResult {
  MetricsRecord metrics;
  std::vector<std::string> trace;  // event log, header first
  std::vector<TransmissionRecord> transmissions;
  std::size_t verified = 0;    // delivered payloads byte-identical to the input
  std::size_t mismatched = 0;  // delivered but different (never expected)
  bool drained = false;        // everything resolved before duration_s
  double virtual_s = 0;

  nlohmann::json to_json() const;
};

struct RunHooks {
  std::function<void(Engine&)> on_start;  // attach observers before the first tick
};

ScenarioResult run_scenario(const ScenarioSpec& spec, const RunHooks& hooks = {});

// Deterministic payload for injection i of a scenario seeded with seed.
Bytes scenario_payload(std::uint64_t seed, std::size_t index, std::size_t size);

struct SecurityRow {
  std::size_t plaintext_bytes = 0;
  std::size_t encrypted_bytes = 0;
  double overhead_pct = 0;
  double encrypt_sign_ms = 0;  // mean over iterations, key already derived
  double verify_decrypt_ms = 0;
};

std::vector<SecurityRow> security_benchmark(const std::vector<std::size_t>& sizes, int iterations,
                                            const SymmetricKey& key);
inline constexpr std::size_t kSecuritySizes[] = {64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384};

}  // namespace dtnsim
