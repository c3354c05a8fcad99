#include "dtnsim/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dtnsim {

std::optional<LatencyStats> latency_stats(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  LatencyStats s;
  s.count = n;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  s.median = n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95 = v[std::max<std::size_t>(rank, 1) - 1];
  s.max = v.back();
  return s;
}

std::optional<double> BundleTrace::latency_s() const {
  if (!delivered_at) return std::nullopt;
  return seconds_between(created_at, *delivered_at);
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

bool settled(BundleStatus s) {
  return s == BundleStatus::Delivered || s == BundleStatus::Failed || s == BundleStatus::Expired;
}

}  // namespace

std::string Tracker::event_log_header() { return "time,event,node,peer,bundle_id,parent_id,value,detail"; }

void Tracker::set_observer(Observer obs) {
  std::lock_guard lock(mu_);
  observer_ = std::move(obs);
}

void Tracker::record(const AgentEvent& e) {
  std::lock_guard lock(mu_);
  std::ostringstream line;
  line << to_iso8601(e.at) << ',' << to_string(e.kind) << ',' << csv_field(e.node) << ','
       << csv_field(e.peer) << ',' << csv_field(e.bundle_id) << ',' << csv_field(e.parent_id) << ','
       << e.value << ',' << csv_field(e.detail);
  log_.push_back(line.str());

  switch (e.kind) {
    case AgentEventKind::TxStart:
      ++counters_.sends;
      if (e.bundle) counters_.bytes_sent += static_cast<long long>(serialized_size(*e.bundle));
      break;
    case AgentEventKind::TxFailed: ++counters_.send_failures; break;
    case AgentEventKind::Rejected: ++counters_.rejected; break;
    case AgentEventKind::Retransmit: ++counters_.retransmissions; break;
    case AgentEventKind::AckReceived:
      if (e.detail == to_string(AckKind::CustodyAck)) ++counters_.custody_acks;
      if (e.detail == to_string(AckKind::DeliveryAck)) ++counters_.delivery_acks;
      if (e.detail == to_string(AckKind::CustodyNak)) ++counters_.naks;
      break;
    default: break;
  }

  if (e.kind == AgentEventKind::Created) {
    BundleTrace t;
    const DTNBundle& b = *e.bundle;
    t.bundle_id = b.bundle_id;
    t.source = b.source.node_id;
    t.destination = b.destination.node_id;
    t.priority = b.priority;
    t.custody = b.custody;
    t.created_at = b.created_at;
    t.plaintext_bytes = static_cast<std::size_t>(e.value);
    t.encrypted_bytes = e.bytes;
    t.fragments = e.count;
    t.expected_receivers = std::max(1, e.expected_receivers);
    t.hop_list = b.hop_list;
    t.bundle = b;
    auto [it, _] = traces_.insert_or_assign(t.bundle_id, std::move(t));
    if (observer_) observer_(e, it->second);
    return;
  }
  const auto it = traces_.find(e.parent_id);
  if (it == traces_.end()) return;
  BundleTrace& t = it->second;
  switch (e.kind) {
    case AgentEventKind::TxStart:
      ++t.transmissions;
      if (t.status == BundleStatus::Queued) t.status = BundleStatus::InTransit;
      break;
    case AgentEventKind::Retransmit: ++t.retransmissions; break;
    case AgentEventKind::Delivered:
      if (t.status == BundleStatus::Delivered) break;
      t.receivers.insert(e.node);
      t.hops = std::max(t.hops, static_cast<int>(e.value));
      if (e.bundle) t.hop_list = e.bundle->hop_list;
      if (static_cast<int>(t.receivers.size()) >= t.expected_receivers) {
        t.status = BundleStatus::Delivered;
        t.delivered_at = e.at;
      }
      break;
    case AgentEventKind::Failed:
      if (!settled(t.status)) t.status = BundleStatus::Failed;
      break;
    case AgentEventKind::Expired:
      if (!settled(t.status)) t.status = BundleStatus::Expired;
      break;
    default: break;
  }
  if (observer_) observer_(e, t);
}

std::vector<BundleTrace> Tracker::traces() const {
  std::lock_guard lock(mu_);
  std::vector<BundleTrace> out;
  out.reserve(traces_.size());
  for (const auto& [_, t] : traces_) out.push_back(t);
  std::stable_sort(out.begin(), out.end(), [](const BundleTrace& a, const BundleTrace& b) {
    return a.created_at != b.created_at ? a.created_at < b.created_at : a.bundle_id < b.bundle_id;
  });
  return out;
}

std::optional<BundleTrace> Tracker::find(const std::string& bundle_id) const {
  std::lock_guard lock(mu_);
  const auto it = traces_.find(bundle_id);
  if (it == traces_.end()) return std::nullopt;
  return it->second;
}

Counters Tracker::counters() const {
  std::lock_guard lock(mu_);
  return counters_;
}

std::vector<std::string> Tracker::event_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t Tracker::unresolved() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(
      traces_.begin(), traces_.end(), [](const auto& kv) { return !settled(kv.second.status); }));
}

std::size_t Tracker::size() const {
  std::lock_guard lock(mu_);
  return traces_.size();
}

MetricsRecord Tracker::metrics(const std::string& scenario) const {
  MetricsRecord m;
  m.scenario = scenario;
  m.bundles = traces();
  m.counters = counters();
  m.bundle_count = m.bundles.size();
  std::vector<double> lat;
  double hops = 0;
  for (const auto& t : m.bundles) {
    switch (t.status) {
      case BundleStatus::Delivered:
        ++m.delivered;
        lat.push_back(*t.latency_s());
        hops += t.hops;
        break;
      case BundleStatus::Failed: ++m.failed; break;
      case BundleStatus::Expired: ++m.expired; break;
      default: ++m.in_flight;
    }
  }
  m.delivery_ratio = m.bundle_count == 0 ? 1.0
                                         : static_cast<double>(m.delivered) / static_cast<double>(m.bundle_count);
  m.latency = latency_stats(lat);
  m.mean_hops = m.delivered == 0 ? 0.0 : hops / static_cast<double>(m.delivered);
  return m;
}

nlohmann::json MetricsRecord::to_json() const {
  nlohmann::json j;
  j["scenario"] = scenario;
  j["bundle_count"] = bundle_count;
  j["delivered"] = delivered;
  j["failed"] = failed;
  j["expired"] = expired;
  j["in_flight"] = in_flight;
  j["delivery_ratio"] = delivery_ratio;
  j["mean_hops"] = mean_hops;
  if (latency) {
    j["latency_s"] = {{"mean", latency->mean},
                      {"median", latency->median},
                      {"p95", latency->p95},
                      {"max", latency->max},
                      {"count", latency->count}};
  } else {
    j["latency_s"] = nullptr;
  }
  j["counters"] = {{"sends", counters.sends},
                   {"send_failures", counters.send_failures},
                   {"custody_acks", counters.custody_acks},
                   {"delivery_acks", counters.delivery_acks},
                   {"naks", counters.naks},
                   {"retransmissions", counters.retransmissions},
                   {"rejected", counters.rejected},
                   {"bytes_sent", counters.bytes_sent}};
  return j;
}

std::string bundles_csv(const std::vector<BundleTrace>& traces) {
  std::ostringstream out;
  out << "bundle_id,source,destination,priority,custody,created_at,delivered_at,latency_s,status,"
         "plaintext_bytes,encrypted_bytes,fragments,hops,transmissions,retransmissions,hop_list\n";
  for (const auto& t : traces) {
    std::string hops;
    for (const auto& h : t.hop_list) hops += (hops.empty() ? "" : ">") + h;
    out << csv_field(t.bundle_id) << ',' << csv_field(t.source) << ',' << csv_field(t.destination) << ','
        << to_string(t.priority) << ',' << (t.custody ? "true" : "false") << ',' << to_iso8601(t.created_at)
        << ',' << (t.delivered_at ? to_iso8601(*t.delivered_at) : "") << ',';
    if (const auto l = t.latency_s()) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", *l);
      out << buf;
    }
    out << ',' << to_string(t.status) << ',' << t.plaintext_bytes << ',' << t.encrypted_bytes << ','
        << t.fragments << ',' << t.hops << ',' << t.transmissions << ',' << t.retransmissions << ','
        << csv_field(hops) << '\n';
  }
  return out.str();
}

}  // namespace dtnsim
