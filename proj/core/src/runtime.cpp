#include "dtnsim/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <condition_variable>
#include <future>

#include "dtnsim/error.hpp"
#include "dtnsim/store.hpp"

namespace dtnsim {

using json = nlohmann::json;
using steady = std::chrono::steady_clock;

namespace {

UtcTime wall_now() {
  return std::chrono::time_point_cast<std::chrono::microseconds>(std::chrono::system_clock::now());
}

json link_json(const LinkState& l) {
  return json{{"visible", l.visible},
              {"fspl_db", l.fspl_db},
              {"atm_loss_db", l.atm_loss_db},
              {"snr_db", l.snr_db},
              {"doppler_hz", l.doppler_hz},
              {"capacity_bps", l.capacity_bps},
              {"effective_rate_bps", l.effective_rate_bps}};
}

void check_station(const NetworkConfig& net, const std::string& id) {
  for (const auto& s : net.stations) {
    if (s.id == id) return;
  }
  throw NotFoundError("unknown station " + id);
}

std::vector<StationView> station_views(const Runtime& rt, UtcTime now, const GeodeticPosition& iss,
                                       const std::map<std::string, std::size_t>& depths) {
  std::vector<StationView> out;
  const auto& oracle = *rt.context().oracle;
  for (const auto& s : rt.network().stations) {
    StationView v;
    v.station = s;
    v.visible = oracle.visible(s.id, now);
    v.angles = look_angles(s, iss);
    v.link = evaluate_link(rt.network().rf, v.angles, v.visible);
    if (auto it = depths.find(s.id); it != depths.end()) v.queue_depth = it->second;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

json position_json(const GeodeticPosition& p) {
  return json{{"lat", p.lat},
              {"lon", p.lon},
              {"alt", p.alt},
              {"velocity", p.velocity},
              {"timestamp", to_iso8601(p.timestamp)}};
}

json window_json(const ContactWindow& w) {
  return json{{"station_id", w.station_id},
              {"aos", to_iso8601(w.aos)},
              {"los", to_iso8601(w.los)},
              {"duration_s", seconds_between(w.aos, w.los)},
              {"max_elevation", w.max_elevation}};
}

json TelemetryTick::to_json() const {
  json stations_j = json::array();
  for (const auto& v : stations) {
    stations_j.push_back(json{{"id", v.station.id},
                              {"name", v.station.name},
                              {"lat", v.station.lat},
                              {"lon", v.station.lon},
                              {"visible", v.visible},
                              {"elevation", v.angles.elevation},
                              {"azimuth", v.angles.azimuth},
                              {"range_km", v.angles.range},
                              {"link", link_json(v.link)},
                              {"queue_depth", v.queue_depth}});
  }
  json active_j = json::array();
  for (const auto& a : active) {
    active_j.push_back(
        json{{"from", a.from}, {"to", a.to}, {"bundle_id", a.bundle_id}, {"progress", a.progress}, {"bytes", a.bytes}});
  }
  return json{{"type", "telemetry"},
              {"seq", seq},
              {"timestamp", to_iso8601(timestamp)},
              {"iss", position_json(iss)},
              {"stations", std::move(stations_j)},
              {"active", std::move(active_j)},
              {"queues", queue_depths}};
}

json InboxEntry::to_json() const {
  return json{{"bundle_id", bundle_id},
              {"source", source},
              {"destination", destination},
              {"priority", std::string(to_string(priority))},
              {"created_at", to_iso8601(created_at)},
              {"complete", complete},
              {"received", received},
              {"total", total},
              {"encrypted_bytes", encrypted_bytes}};
}

std::vector<InboxEntry> inbox_view(const BundleAgent& agent) {
  std::vector<InboxEntry> out;
  for (const auto& [id, b] : agent.inbox()) {
    out.push_back(InboxEntry{id, b.source.node_id, b.destination.node_id, b.priority, b.created_at, true, 1, 1,
                             b.encrypted_payload.size()});
  }
  for (const auto& [id, buf] : agent.reassembly().buffers()) {
    std::size_t bytes = 0;
    for (const auto& [n, chunk] : buf.received) bytes += chunk.size();
    out.push_back(InboxEntry{id, buf.header.source.node_id, buf.header.destination.node_id, buf.header.priority,
                             buf.header.created_at, false, static_cast<int>(buf.received.size()), buf.total_expected,
                             bytes});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.created_at, a.bundle_id) < std::tie(b.created_at, b.bundle_id);
  });
  return out;
}

std::vector<ContactWindow> oracle_windows(const ContactOracle& oracle, const std::string& station, UtcTime t0,
                                          double horizon_s) {
  if (const auto* s = dynamic_cast<const SyntheticSchedule*>(&oracle)) return s->windows(station, t0, horizon_s);
  if (const auto* p = dynamic_cast<const PassOracle*>(&oracle)) return p->windows(station, t0, horizon_s);
  throw DomainError("this contact oracle cannot list windows");
}

GeodeticPosition Runtime::iss_position(UtcTime t) const { return propagate(network().schedule.propagator, t); }

std::vector<ContactWindow> Runtime::windows(const std::string& station, UtcTime t0, double horizon_s) const {
  check_station(network(), station);
  if (!(horizon_s > 0)) throw DomainError("horizon must be positive");
  auto w = oracle_windows(*context().oracle, station, t0, horizon_s);
  std::sort(w.begin(), w.end(), [](const auto& a, const auto& b) { return a.aos < b.aos; });
  return w;
}

// ---- simulation --------------------------------------------------------------

SimRuntime::SimRuntime(NetworkConfig net, UtcTime start, double speedup, std::uint64_t seed)
    : net_(std::move(net)),
      ctx_(make_context(net_, start)),
      engine_(ctx_, EngineConfig{start, 0.1, net_.rates, seed}),
      speedup_(speedup) {
  if (!(speedup_ > 0)) throw ConfigError("speedup must be positive");
  now_us_ = start.time_since_epoch().count();
}

SimRuntime::~SimRuntime() { stop(); }

void SimRuntime::attach(Store& store) { attach_store(store, engine_); }

void SimRuntime::on_telemetry(double hz, TelemetryListener listener) {
  if (!(hz > 0)) throw ConfigError("telemetry rate must be positive");
  hz_ = hz;
  listener_ = std::move(listener);
}

UtcTime SimRuntime::now() const { return UtcTime(std::chrono::microseconds(now_us_.load())); }

void SimRuntime::start() {
  if (running_) return;
  running_ = true;
  stop_ = false;
  thread_ = std::thread([this] { loop(); });
}

void SimRuntime::stop() {
  if (!running_) return;
  stop_ = true;
  if (thread_.joinable()) thread_.join();
  running_ = false;
  drain();
}

void SimRuntime::loop() {
  const auto w0 = steady::now();
  const UtcTime v0 = engine_.now();
  const auto period = std::chrono::duration_cast<steady::duration>(std::chrono::duration<double>(1.0 / hz_));
  auto next_tick = w0;
  while (!stop_.load()) {
    drain();
    const double wall = std::chrono::duration<double>(steady::now() - w0).count();
    const UtcTime target = add_seconds(v0, wall * speedup_);
    while (engine_.now() < target && !stop_.load()) engine_.step();
    now_us_ = engine_.now().time_since_epoch().count();
    const auto t = steady::now();
    if (listener_ && t >= next_tick) {
      ++seq_;
      listener_(make_tick());
      next_tick += period;
      if (next_tick < t) next_tick = t + period;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

void SimRuntime::drain() {
  std::deque<std::function<void()>> work;
  {
    std::lock_guard lock(work_mu_);
    work.swap(work_);
  }
  for (auto& fn : work) fn();
}

void SimRuntime::with_engine(const std::function<void(Engine&)>& fn) {
  if (!running_) {
    fn(engine_);
    return;
  }
  auto prom = std::make_shared<std::promise<void>>();
  auto fut = prom->get_future();
  {
    std::lock_guard lock(work_mu_);
    work_.push_back([this, prom, &fn] {
      try {
        fn(engine_);
        prom->set_value();
      } catch (...) {
        prom->set_exception(std::current_exception());
      }
    });
  }
  if (fut.wait_for(std::chrono::seconds(10)) != std::future_status::ready) {
    throw NetworkError("engine thread did not answer");
  }
  fut.get();
}

Submission SimRuntime::submit(const Bytes& payload, const std::string& source, const std::string& destination,
                              const BundleOptions& options) {
  Submission out;
  with_engine([&](Engine& e) {
    out.bundle = e.submit(payload, source, destination, options);
    try {
      out.route = e.agent(source).plan(out.bundle, e.now());
    } catch (const NoRouteError&) {
    }
  });
  return out;
}

Bytes SimRuntime::open(const std::string& node, const std::string& bundle_id) {
  Bytes out;
  with_engine([&](Engine& e) { out = e.agent(node).open(bundle_id); });
  return out;
}

std::vector<InboxEntry> SimRuntime::inbox(const std::string& node) {
  std::vector<InboxEntry> out;
  with_engine([&](Engine& e) { out = inbox_view(e.agent(node)); });
  return out;
}

TelemetryTick SimRuntime::make_tick() {
  TelemetryTick t;
  t.seq = seq_;
  t.timestamp = engine_.now();
  t.iss = iss_position(t.timestamp);
  for (const auto& [id, a] : engine_.agents()) t.queue_depths[id] = a->backlog();
  t.stations = station_views(*this, t.timestamp, t.iss, t.queue_depths);
  for (const auto& a : engine_.active()) {
    t.active.push_back(TransmissionView{a.from, a.to, a.bundle_id, a.progress(t.timestamp), a.bytes});
  }
  return t;
}

TelemetryTick SimRuntime::snapshot() {
  TelemetryTick t;
  with_engine([&](Engine&) { t = make_tick(); });
  return t;
}

// ---- emulation ---------------------------------------------------------------

namespace {

EmulationSpec service_spec(NetworkConfig net, EmulationConfig emu, std::uint64_t seed) {
  EmulationSpec s;
  s.name = "service";
  s.seed = seed;
  s.network = std::move(net);
  s.emu = emu;
  s.budget_s = 1e9;
  return s;
}

}  // namespace

EmuRuntime::EmuRuntime(NetworkConfig net, EmulationConfig emu, std::uint64_t seed)
    : net_(net), em_(service_spec(std::move(net), emu, seed)) {}

EmuRuntime::~EmuRuntime() { stop(); }

void EmuRuntime::attach(Store& store) {
  attach_store(store, em_.tracker());
  em_.set_transmission_observer([&store](const TransmissionRecord& tx) { store.record_transmission(tx); });
}

void EmuRuntime::on_telemetry(double hz, TelemetryListener listener) {
  if (!(hz > 0)) throw ConfigError("telemetry rate must be positive");
  hz_ = hz;
  listener_ = std::move(listener);
}

UtcTime EmuRuntime::now() const { return wall_now(); }

void EmuRuntime::start() {
  if (running_) return;
  running_ = true;
  stop_ = false;
  em_.start();
  thread_ = std::thread([this] { loop(); });
}

void EmuRuntime::stop() {
  if (!running_) return;
  stop_ = true;
  if (thread_.joinable()) thread_.join();
  em_.stop();
  running_ = false;
}

void EmuRuntime::loop() {
  const auto period = std::chrono::duration_cast<steady::duration>(std::chrono::duration<double>(1.0 / hz_));
  auto next_tick = steady::now();
  while (!stop_.load()) {
    em_.refresh_links();
    const auto t = steady::now();
    if (listener_ && t >= next_tick) {
      ++seq_;
      listener_(snapshot());
      next_tick += period;
      if (next_tick < t) next_tick = t + period;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

Submission EmuRuntime::submit(const Bytes& payload, const std::string& source, const std::string& destination,
                              const BundleOptions& options) {
  Submission out;
  out.bundle = em_.submit(payload, source, destination, options);
  em_.with_agent(source, [&](BundleAgent& a) {
    try {
      out.route = a.plan(out.bundle, wall_now());
    } catch (const NoRouteError&) {
    }
  });
  return out;
}

Bytes EmuRuntime::open(const std::string& node, const std::string& bundle_id) {
  Bytes out;
  em_.with_agent(node, [&](BundleAgent& a) { out = a.open(bundle_id); });
  return out;
}

std::vector<InboxEntry> EmuRuntime::inbox(const std::string& node) {
  std::vector<InboxEntry> out;
  em_.with_agent(node, [&](BundleAgent& a) { out = inbox_view(a); });
  return out;
}

TelemetryTick EmuRuntime::snapshot() {
  TelemetryTick t;
  t.seq = seq_.load();
  t.timestamp = wall_now();
  t.iss = iss_position(t.timestamp);
  t.queue_depths = em_.backlog();
  t.stations = station_views(*this, t.timestamp, t.iss, t.queue_depths);
  for (const auto& a : em_.active()) {
    double rate = 0;
    try {
      rate = em_.links().get(a.from, a.to).rate_bps();
    } catch (const NotFoundError&) {
    }
    t.active.push_back(TransmissionView{a.from, a.to, a.bundle_id, a.progress(t.timestamp, rate), a.bytes});
  }
  return t;
}

std::unique_ptr<Runtime> make_runtime(const AppConfig& cfg, UtcTime start) {
  if (cfg.service.mode == "sim") {
    return std::make_unique<SimRuntime>(cfg.network, start, cfg.service.speedup, cfg.service.seed);
  }
  if (cfg.service.mode == "emu") return std::make_unique<EmuRuntime>(cfg.network, cfg.emulation, cfg.service.seed);
  throw ConfigError("mode must be sim or emu, got " + cfg.service.mode);
}

}  // namespace dtnsim
