#include "dtnsim/engine.hpp"

#include <algorithm>
#include <cmath>

#include "dtnsim/error.hpp"

namespace dtnsim {

namespace {

double wrap(double x, double period) {
  const double r = std::fmod(x, period);
  return r < 0 ? r + period : r;
}

std::string link_key(const std::string& from, const std::string& to) { return from + ">" + to; }

}  // namespace

// ---- synthetic schedule ----------------------------------------------------

SyntheticSchedule::SyntheticSchedule(UtcTime epoch, double period_s, double window_s,
                                     std::map<std::string, double> offsets_s)
    : epoch_(epoch), period_(period_s), window_(window_s), offsets_(std::move(offsets_s)) {
  if (!(period_s > 0) || !(window_s > 0) || window_s >= period_s) {
    throw ConfigError("contact schedule needs 0 < window < period");
  }
  for (const auto& [station, off] : offsets_) {
    if (!(off >= 0) || off >= period_s) throw ConfigError("offset for " + station + " outside [0, period)");
  }
}

SyntheticSchedule SyntheticSchedule::staggered(UtcTime epoch, double period_s, double window_s,
                                               const std::vector<std::string>& stations, double stagger_s) {
  std::map<std::string, double> offsets;
  for (std::size_t k = 0; k < stations.size(); ++k) {
    offsets[stations[k]] = wrap(static_cast<double>(k) * stagger_s, period_s);
  }
  return SyntheticSchedule(epoch, period_s, window_s, std::move(offsets));
}

std::optional<double> SyntheticSchedule::phase(const std::string& station, UtcTime t) const {
  const auto it = offsets_.find(station);
  if (it == offsets_.end()) return std::nullopt;
  return wrap(seconds_between(epoch_, t) - it->second, period_);
}

bool SyntheticSchedule::visible(const std::string& station, UtcTime t) const {
  const auto p = phase(station, t);
  return p && *p < window_;
}

std::optional<UtcTime> SyntheticSchedule::next_aos(const std::string& station, UtcTime t,
                                                   double horizon_s) const {
  const auto p = phase(station, t);
  if (!p) return std::nullopt;
  if (*p < window_) return t;
  const double wait = period_ - *p;
  if (wait > horizon_s) return std::nullopt;
  return add_seconds(t, wait);
}

std::optional<UtcTime> SyntheticSchedule::contact_end(const std::string& station, UtcTime t) const {
  const auto p = phase(station, t);
  if (!p || *p >= window_) return std::nullopt;
  return add_seconds(t, window_ - *p);
}

std::vector<ContactWindow> SyntheticSchedule::windows(const std::string& station, UtcTime t0,
                                                      double horizon_s) const {
  std::vector<ContactWindow> out;
  const auto p = phase(station, t0);
  if (!p) throw NotFoundError("no schedule for station " + station);
  double start = -*p;  // window start relative to t0
  while (start < horizon_s) {
    if (start + window_ > 0) {
      out.push_back({station, add_seconds(t0, start), add_seconds(t0, start + window_), 90.0});
    }
    start += period_;
  }
  return out;
}

// ---- orbital passes --------------------------------------------------------

PassOracle::PassOracle(PropagatorSpec spec, std::vector<GroundStation> stations, double threshold_deg,
                       double chunk_s)
    : spec_(std::move(spec)), threshold_(threshold_deg), chunk_(chunk_s) {
  if (!(chunk_s > 0)) throw ConfigError("pass cache chunk must be positive");
  for (auto& s : stations) stations_.emplace(s.id, std::move(s));
}

std::shared_ptr<const std::vector<ContactWindow>> PassOracle::covering(const std::string& station, UtcTime t,
                                                                       double horizon_s) const {
  const auto st = stations_.find(station);
  if (st == stations_.end()) return std::make_shared<const std::vector<ContactWindow>>();
  std::lock_guard lock(mu_);
  auto& c = cache_[station];
  if (!c.windows || t < c.from || add_seconds(t, horizon_s) > c.to) {
    // Reach back one scan step so a pass straddling t is found whole.
    const UtcTime from = add_seconds(t, -60.0);
    const double span = horizon_s + chunk_ + 60.0;
    c.from = t;
    c.to = add_seconds(from, span);
    c.windows = std::make_shared<const std::vector<ContactWindow>>(
        predict_passes(spec_, st->second, from, span, threshold_));
  }
  return c.windows;
}

bool PassOracle::visible(const std::string& station, UtcTime t) const {
  return contact_end(station, t).has_value();
}

std::optional<UtcTime> PassOracle::next_aos(const std::string& station, UtcTime t, double horizon_s) const {
  for (const auto& w : *covering(station, t, horizon_s)) {
    if (w.aos <= t && t < w.los) return t;
    if (w.aos > t && seconds_between(t, w.aos) <= horizon_s) return w.aos;
  }
  return std::nullopt;
}

std::optional<UtcTime> PassOracle::contact_end(const std::string& station, UtcTime t) const {
  for (const auto& w : *covering(station, t, 0.0)) {
    if (w.aos <= t && t < w.los) return w.los;
  }
  return std::nullopt;
}

std::vector<ContactWindow> PassOracle::windows(const std::string& station, UtcTime t0, double horizon_s) const {
  if (!stations_.contains(station)) throw NotFoundError("unknown station " + station);
  std::vector<ContactWindow> out;
  for (const auto& w : *covering(station, t0, horizon_s)) {
    if (w.los > t0 && w.aos < add_seconds(t0, horizon_s)) out.push_back(w);
  }
  return out;
}

// ---- engine ----------------------------------------------------------------

void LinkRates::validate() const {
  if (!(iss_bps > 0) || !(ground_bps > 0)) throw ConfigError("link rates must be positive");
}

double transmission_time(const DTNBundle& bundle, double rate_bps) {
  if (!(rate_bps > 0)) throw DomainError("transmission needs a positive rate");
  return static_cast<double>(serialized_size(bundle)) * 8.0 / rate_bps;
}

double ActiveTransmission::progress(UtcTime now) const {
  const double total = seconds_between(started, ends);
  if (total <= 0) return 1.0;
  return std::clamp(seconds_between(started, now) / total, 0.0, 1.0);
}

Engine::Engine(std::shared_ptr<const NodeContext> ctx, EngineConfig cfg)
    : ctx_(std::move(ctx)), cfg_(cfg), now_(cfg.start), rng_(cfg.seed) {
  if (!(cfg_.tick_s > 0)) throw ConfigError("tick must be positive");
  cfg_.rates.validate();
  agents_.emplace(std::string(kIssNode), std::make_unique<BundleAgent>(std::string(kIssNode), ctx_, &tracker_));
  for (const auto& s : ctx_->topology.stations()) {
    agents_.emplace(s, std::make_unique<BundleAgent>(s, ctx_, &tracker_));
  }
}

BundleAgent& Engine::agent(const std::string& id) {
  const auto it = agents_.find(id);
  if (it == agents_.end()) throw NotFoundError("unknown node " + id);
  return *it->second;
}

void Engine::schedule(Injection inj) {
  if (!agents_.contains(inj.source)) throw ConfigError("unknown source " + inj.source);
  const UtcTime at = inj.at;
  injections_.emplace(at, std::move(inj));
}

DTNBundle Engine::submit(std::span<const std::uint8_t> plaintext, const std::string& source,
                         const std::string& destination, const BundleOptions& options) {
  BundleAgent& a = agent(source);
  if (destination != kBroadcast && !agents_.contains(destination)) {
    throw NotFoundError("unknown destination " + destination);
  }
  DTNBundle b = create_bundle(plaintext, Endpoint(source), Endpoint(destination), options, ctx_->key, now_, rng_);
  a.originate(b, plaintext.size(), now_, rng_);
  b.status = BundleStatus::Queued;
  return b;
}

void Engine::post(std::function<void(Engine&)> fn) {
  std::lock_guard lock(post_mu_);
  posted_.push_back(std::move(fn));
}

void Engine::drain_posted() {
  std::vector<std::function<void(Engine&)>> work;
  {
    std::lock_guard lock(post_mu_);
    work.swap(posted_);
  }
  for (auto& fn : work) fn(*this);
}

void Engine::set_transmission_observer(std::function<void(const TransmissionRecord&)> obs) {
  tx_observer_ = std::move(obs);
}

bool Engine::iss_link(const std::string& a, const std::string& b) const { return a == kIssNode || b == kIssNode; }

void Engine::start(const std::string& from, Dispatch d) {
  ActiveTransmission tx;
  tx.from = from;
  tx.to = d.next_hop;
  tx.bundle_id = d.bundle.bundle_id;
  tx.parent_id = d.bundle.parent_id();
  tx.started = now_;
  tx.bytes = serialized_size(d.bundle);
  tx.attempt = d.attempt;
  const bool space = iss_link(from, d.next_hop);
  tx.ends = add_seconds(now_, transmission_time(d.bundle, space ? cfg_.rates.iss_bps : cfg_.rates.ground_bps));
  if (space) {
    const std::string& station = from == kIssNode ? d.next_hop : from;
    const auto end = ctx_->oracle->contact_end(station, now_);
    if (!end) {
      tx.completes = false;
      tx.ends = now_;
      tx.failure = "no contact";
    } else if (*end < tx.ends) {
      tx.completes = false;
      tx.ends = *end;
      tx.failure = "contact lost";
    }
  }
  std::string key = link_key(from, d.next_hop);
  links_.insert_or_assign(std::move(key), std::make_pair(std::move(tx), std::move(d)));
}

void Engine::complete(const ActiveTransmission& tx, const Dispatch& d) {
  TransmissionRecord rec{tx.bundle_id, tx.from, tx.to, tx.started, tx.ends, TxOutcome::Ok, tx.attempt, {}};
  if (!tx.completes) {
    rec.outcome = TxOutcome::Failed;
    rec.detail = tx.failure;
    agent(tx.from).send_failed(tx.bundle_id, tx.to, tx.failure, tx.ends);
  } else {
    const AckMessage ack = agent(tx.to).receive(d.bundle, tx.from, tx.ends);
    if (ack.kind == AckKind::CustodyNak) {
      rec.outcome = TxOutcome::Nak;
      rec.detail = ack.reason;
    }
    agent(tx.from).handle_ack(ack, tx.ends);
  }
  history_.push_back(rec);
  if (tx_observer_) tx_observer_(rec);
}

void Engine::step() {
  drain_posted();
  now_ = add_seconds(now_, cfg_.tick_s);

  while (!injections_.empty() && injections_.begin()->first <= now_) {
    Injection inj = std::move(injections_.begin()->second);
    injections_.erase(injections_.begin());
    // Created at its scheduled instant, not at the tick that picks it up.
    const UtcTime saved = now_;
    now_ = inj.at;
    submit(inj.payload, inj.source, inj.destination, inj.options);
    now_ = saved;
  }

  std::vector<std::string> due;
  for (const auto& [key, tx] : links_) {
    if (tx.first.ends <= now_) due.push_back(key);
  }
  std::sort(due.begin(), due.end(), [&](const std::string& a, const std::string& b) {
    const auto ta = links_.at(a).first.ends;
    const auto tb = links_.at(b).first.ends;
    return ta != tb ? ta < tb : a < b;
  });
  for (const auto& key : due) {
    auto node = links_.extract(key);
    complete(node.mapped().first, node.mapped().second);
  }

  for (auto& [_, a] : agents_) a->tick(now_);
  for (auto& [id, a] : agents_) {
    const std::string from = id;
    auto ds = a->poll(now_, [&](const std::string& peer) { return !links_.contains(link_key(from, peer)); });
    for (auto& d : ds) start(from, std::move(d));
  }
}

void Engine::run_until(UtcTime t) {
  while (now_ < t) step();
}

bool Engine::settled() const {
  if (!injections_.empty() || !links_.empty() || tracker_.unresolved() != 0) return false;
  return std::all_of(agents_.begin(), agents_.end(), [](const auto& kv) { return kv.second->idle(); });
}

bool Engine::run_until_settled(UtcTime limit) {
  while (now_ < limit) {
    step();
    if (settled()) return true;
  }
  return settled();
}

std::vector<ActiveTransmission> Engine::active() const {
  std::vector<ActiveTransmission> out;
  for (const auto& [_, tx] : links_) out.push_back(tx.first);
  return out;
}

}  // namespace dtnsim
