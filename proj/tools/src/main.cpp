// dtnsim: experiment runner, emulation harness and service entry point.

#include <CLI11.hpp>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dtnsim/api.hpp"
#include "dtnsim/error.hpp"
#include "dtnsim/netemu.hpp"
#include "dtnsim/runtime.hpp"
#include "dtnsim/scenario.hpp"
#include "dtnsim/store.hpp"

using namespace dtnsim;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string joined(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

json summary_of(json j) {
  j.erase("bundles");
  return j;
}

void emit(const std::string& name, const json& doc, const std::vector<BundleTrace>& traces,
          const std::vector<std::string>& trace_log, const std::optional<std::string>& out) {
  std::cout << summary_of(doc).dump(2) << "\n";
  if (!out) return;
  fs::create_directories(*out);
  write_file(fs::path(*out) / (name + ".metrics.json"), doc.dump(2) + "\n");
  write_file(fs::path(*out) / (name + ".bundles.csv"), bundles_csv(traces));
  if (!trace_log.empty()) write_file(fs::path(*out) / (name + ".trace.csv"), joined(trace_log));
}

int run_security(int iterations, const std::optional<std::string>& out) {
  const SymmetricKey key = derive_key(NetworkConfig{}.keys);
  const auto rows =
      security_benchmark(std::vector<std::size_t>(std::begin(kSecuritySizes), std::end(kSecuritySizes)), iterations, key);
  json doc = json::array();
  std::ostringstream csv;
  csv << "plaintext_bytes,encrypted_bytes,overhead_pct,encrypt_sign_ms,verify_decrypt_ms\n";
  std::cout << std::left << std::setw(10) << "bytes" << std::setw(12) << "encrypted" << std::setw(12) << "overhead%"
            << std::setw(14) << "enc+sign ms" << "verify+dec ms\n";
  for (const auto& r : rows) {
    doc.push_back(json{{"plaintext_bytes", r.plaintext_bytes},
                       {"encrypted_bytes", r.encrypted_bytes},
                       {"overhead_pct", r.overhead_pct},
                       {"encrypt_sign_ms", r.encrypt_sign_ms},
                       {"verify_decrypt_ms", r.verify_decrypt_ms}});
    csv << r.plaintext_bytes << "," << r.encrypted_bytes << "," << r.overhead_pct << "," << r.encrypt_sign_ms << ","
        << r.verify_decrypt_ms << "\n";
    std::cout << std::setw(10) << r.plaintext_bytes << std::setw(12) << r.encrypted_bytes << std::setw(12)
              << std::fixed << std::setprecision(2) << r.overhead_pct << std::setw(14) << std::setprecision(4)
              << r.encrypt_sign_ms << r.verify_decrypt_ms << "\n";
  }
  if (out) {
    fs::create_directories(*out);
    write_file(fs::path(*out) / "E2.metrics.json", doc.dump(2) + "\n");
    write_file(fs::path(*out) / "E2.csv", csv.str());
  }
  return 0;
}

int run_experiment(std::string name, const std::optional<std::string>& config, std::optional<std::uint64_t> seed,
                   const std::optional<std::string>& out, std::optional<int> level, int iterations) {
  name = upper(name);
  if (name == "E2") return run_security(iterations, out);
  std::vector<ScenarioSpec> specs;
  if (config) {
    specs = load_profiles(*config);
  } else if (name == "E1") {
    specs.push_back(e1_profile());
  } else if (name == "E4") {
    specs.push_back(e4_profile());
  } else if (name == "E5") {
    for (const int n : kE5Levels) specs.push_back(e5_profile(n));
  } else {
    throw ConfigError("unknown experiment " + name + " (E1, E2, E4, E5)");
  }
  if (level) {
    std::erase_if(specs, [&](const ScenarioSpec& s) {
      return !s.name.ends_with("-" + std::to_string(*level));
    });
    if (specs.empty()) throw ConfigError("no profile at level " + std::to_string(*level));
  }
  int rc = 0;
  for (auto& spec : specs) {
    if (seed) spec.seed = *seed;
    const ScenarioResult r = run_scenario(spec);
    emit(spec.name, r.to_json(), r.metrics.bundles, r.trace, out);
    if (r.mismatched > 0) rc = 1;
  }
  return rc;
}

int run_emulation(std::string profile, std::optional<double> loss, std::optional<double> duration,
                  std::optional<std::uint64_t> seed, const std::optional<std::string>& out) {
  profile = upper(profile);
  std::vector<EmulationSpec> specs;
  if (profile == "E3") {
    if (loss) {
      specs.push_back(e3_profile(*loss));
    } else {
      for (const double l : kLossLevels) specs.push_back(e3_profile(l));
    }
  } else if (profile == "E7") {
    specs.push_back(e7_profile());
  } else if (profile == "E8") {
    specs.push_back(e8_profile());
  } else {
    throw ConfigError("unknown emulation profile " + profile + " (E3, E7, E8)");
  }
  for (auto& s : specs) {
    if (loss && profile != "E3") s.emu.loss = *loss;
    if (duration) s.budget_s = *duration;
    if (seed) s.seed = *seed;
    const EmulationResult r = run_emulation_scenario(s);
    emit(s.name, r.to_json(), r.metrics.bundles, r.trace, out);
  }
  return 0;
}

volatile std::sig_atomic_t g_stop = 0;

int serve(const std::optional<std::string>& config) {
  AppConfig cfg = config ? load_app_config(*config) : AppConfig{};
  apply_env(cfg);
  Store store(cfg.service.store_path);
  if (store.recovered_from()) {
    std::cerr << "store was unreadable; moved to " << *store.recovered_from() << "\n";
  }
  const auto start = std::chrono::time_point_cast<std::chrono::microseconds>(std::chrono::system_clock::now());
  auto rt = make_runtime(cfg, start);
  rt->attach(store);
  ApiOptions opts;
  opts.listen = cfg.service.listen;
  opts.port = cfg.service.port;
  opts.telemetry_hz = cfg.service.telemetry_hz;
  ApiServer api(*rt, &store, opts);
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  rt->start();
  api.start();
  std::cerr << "dtnsim " << rt->mode() << " mode on http://" << opts.listen << ":" << api.port() << " (store "
            << store.path() << ")\n";
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  api.stop();
  rt->stop();
  return 0;
}

int passes(const std::string& station, double hours, const std::optional<std::string>& config,
           const std::optional<std::string>& start_iso, double threshold) {
  AppConfig cfg = config ? load_app_config(*config) : AppConfig{};
  apply_env(cfg);
  const GroundStation* gs = nullptr;
  for (const auto& s : cfg.network.stations) {
    if (s.id == station) gs = &s;
  }
  if (!gs) throw NotFoundError("unknown station " + station);
  const UtcTime t0 = start_iso ? parse_iso8601(*start_iso)
                               : std::chrono::time_point_cast<std::chrono::microseconds>(std::chrono::system_clock::now());
  json out = json::array();
  for (const auto& w : predict_passes(cfg.network.schedule.propagator, *gs, t0, hours * 3600.0, threshold)) {
    out.push_back(window_json(w));
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int export_store(const std::string& path, const std::string& out) {
  if (!fs::exists(path)) throw NotFoundError("no store at " + path);
  Store store(path);
  fs::create_directories(out);
  for (const auto& f : store.export_csv(out)) std::cout << f << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delay-tolerant ISS/ground network simulator"};
  app.require_subcommand(1);

  std::string exp_name;
  std::optional<std::string> exp_config, exp_out;
  std::optional<std::uint64_t> exp_seed;
  std::optional<int> exp_level;
  int iterations = 200;
  auto* exp = app.add_subcommand("run-experiment", "Run a simulation experiment (E1, E2, E4, E5)");
  exp->add_option("name", exp_name, "Experiment name")->required();
  exp->add_option("--config", exp_config, "Scenario profile document")->check(CLI::ExistingFile);
  exp->add_option("--seed", exp_seed, "RNG seed");
  exp->add_option("--out", exp_out, "Directory for metrics JSON and CSV traces");
  exp->add_option("--level", exp_level, "Only the profile with this bundle count (E5)");
  exp->add_option("--iterations", iterations, "Timing iterations per size (E2)")->check(CLI::PositiveNumber);

  std::string emu_profile;
  std::optional<double> emu_loss, emu_duration;
  std::optional<std::uint64_t> emu_seed;
  std::optional<std::string> emu_out;
  auto* emu = app.add_subcommand("run-emulation", "Run a socket emulation profile (E3, E7, E8)");
  emu->add_option("profile", emu_profile, "Profile name")->required();
  emu->add_option("--loss", emu_loss, "ISS-link loss probability")->check(CLI::Range(0.0, 1.0));
  emu->add_option("--duration", emu_duration, "Wall-clock budget per run, seconds")->check(CLI::PositiveNumber);
  emu->add_option("--seed", emu_seed, "RNG seed");
  emu->add_option("--out", emu_out, "Directory for metrics JSON and CSV traces");

  std::optional<std::string> serve_config;
  auto* srv = app.add_subcommand("serve", "Run the REST/WebSocket service (DTNSIM_MODE=sim|emu)");
  srv->add_option("--config", serve_config, "Application config document")->check(CLI::ExistingFile);

  std::string pass_station;
  double pass_hours = 24;
  double pass_threshold = 0;
  std::optional<std::string> pass_config, pass_start;
  auto* pas = app.add_subcommand("passes", "Predict ISS passes over a station");
  pas->add_option("--station", pass_station, "Station id")->required();
  pas->add_option("--hours", pass_hours, "Horizon in hours")->check(CLI::PositiveNumber);
  pas->add_option("--threshold", pass_threshold, "Minimum elevation, degrees");
  pas->add_option("--start", pass_start, "ISO-8601 start time (default now)");
  pas->add_option("--config", pass_config, "Application config document")->check(CLI::ExistingFile);

  std::string exp_store, exp_dir = ".";
  auto* ex = app.add_subcommand("export", "Export a store as CSV files");
  ex->add_option("--store", exp_store, "SQLite store path")->required();
  ex->add_option("--out", exp_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*exp) return run_experiment(exp_name, exp_config, exp_seed, exp_out, exp_level, iterations);
    if (*emu) return run_emulation(emu_profile, emu_loss, emu_duration, emu_seed, emu_out);
    if (*srv) return serve(serve_config);
    if (*pas) return passes(pass_station, pass_hours, pass_config, pass_start, pass_threshold);
    if (*ex) return export_store(exp_store, exp_dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
