#include "dtnsim/agent.hpp"

#include <algorithm>

#include "dtnsim/error.hpp"

namespace dtnsim {

std::string_view to_string(AgentEventKind k) {
  switch (k) {
    case AgentEventKind::Created: return "created";
    case AgentEventKind::TxStart: return "tx_start";
    case AgentEventKind::TxFailed: return "tx_failed";
    case AgentEventKind::Received: return "received";
    case AgentEventKind::Rejected: return "rejected";
    case AgentEventKind::Delivered: return "delivered";
    case AgentEventKind::AckReceived: return "ack";
    case AgentEventKind::Retransmit: return "retransmit";
    case AgentEventKind::Failed: return "failed";
    case AgentEventKind::Expired: return "expired";
  }
  return "?";
}

namespace {

std::string bcast_key(const std::string& id, const std::string& peer) { return id + ">" + peer; }

}  // namespace

BundleAgent::BundleAgent(std::string id, std::shared_ptr<const NodeContext> ctx, EventSink* sink)
    : id_(std::move(id)), ctx_(std::move(ctx)), sink_(sink), pending_(ctx_->custody) {
  if (!ctx_->oracle) throw ConfigError("node context needs a contact oracle");
  if (!is_iss() && !ctx_->topology.contains(id_)) throw ConfigError("unknown node " + id_);
}

void BundleAgent::emit(AgentEventKind kind, UtcTime at, const DTNBundle& b, std::string peer,
                       long long value, std::string detail) {
  if (!sink_) return;
  AgentEvent e;
  e.kind = kind;
  e.at = at;
  e.node = id_;
  e.peer = std::move(peer);
  e.bundle_id = b.bundle_id;
  e.parent_id = b.parent_id();
  e.value = value;
  e.detail = std::move(detail);
  e.bundle = &b;
  sink_->record(e);
}

std::vector<std::string> BundleAgent::originate(const DTNBundle& bundle, std::size_t plaintext_bytes,
                                                UtcTime now, std::mt19937_64& rng) {
  if (bundle.source.node_id != id_) throw ProtocolError("bundle source is not this node");
  if (bundle.destination.node_id == id_) throw ProtocolError("bundle addressed to its own source");
  if (bundle.destination.is_broadcast() && is_iss()) throw ProtocolError("the ISS cannot flood the mesh");
  std::vector<DTNBundle> units = maybe_fragment(bundle, ctx_->fragment_policy, ctx_->key, rng);
  if (sink_) {
    AgentEvent e;
    e.kind = AgentEventKind::Created;
    e.at = now;
    e.node = id_;
    e.bundle_id = e.parent_id = bundle.bundle_id;
    e.value = static_cast<long long>(plaintext_bytes);
    e.bytes = bundle.encrypted_payload.size();
    e.count = static_cast<int>(units.size());
    if (bundle.destination.is_broadcast()) {
      e.expected_receivers = static_cast<int>(reachable(ctx_->topology, id_).size()) - 1;
    }
    e.bundle = &bundle;
    sink_->record(e);
  }
  std::vector<std::string> ids;
  for (auto& u : units) {
    ids.push_back(u.bundle_id);
    if (u.destination.is_broadcast()) {
      enqueue_broadcast_copies(u, now);
    } else {
      queue_.enqueue(std::move(u));
    }
  }
  return ids;
}

AckMessage BundleAgent::reply(AckKind kind, const DTNBundle& b, UtcTime now, std::string reason) const {
  return AckMessage{kind, b.bundle_id, id_, now, std::move(reason)};
}

AckMessage BundleAgent::receive(DTNBundle unit, const std::string& from, UtcTime now) {
  auto reject = [&](std::string why) {
    emit(AgentEventKind::Rejected, now, unit, from, 0, why);
    return reply(AckKind::CustodyNak, unit, now, std::move(why));
  };
  if (!unit.security.bab || !bab_verify(unit.bab_subject(), *unit.security.bab, from, id_, ctx_->key)) {
    return reject("bab verification failed");
  }
  const bool intact = unit.is_fragment()
                          ? verify_fragment(unit, ctx_->key)
                          : pib_verify(unit.security.pib, sha256_hex(unit.encrypted_payload), ctx_->key);
  if (!intact) return reject("pib verification failed");

  if (std::find(unit.hop_list.begin(), unit.hop_list.end(), id_) != unit.hop_list.end()) {
    return reject("routing loop");
  }
  if (unit.destination.is_broadcast()) {
    if (bstate_.seen(id_, unit.bundle_id)) return reply(AckKind::DeliveryAck, unit, now);
  } else if (const auto it = seen_.find(unit.bundle_id); it != seen_.end()) {
    // Retransmission of something already accepted: acknowledge again.
    return reply(it->second, unit, now);
  }
  if (unit.hop_list.empty() || unit.hop_list.back() != from) return reject("hop list does not end at sender");
  unit.hop_list.push_back(id_);
  unit.security.bab.reset();
  emit(AgentEventKind::Received, now, unit, from);

  if (unit.destination.is_broadcast()) {
    enqueue_broadcast_copies(unit, now);
    return deliver_here(std::move(unit), now);
  }
  if (unit.destination.node_id == id_) {
    const AckMessage r = deliver_here(std::move(unit), now);
    if (r.kind != AckKind::CustodyNak) seen_.emplace(r.bundle_id, r.kind);
    return r;
  }
  if (unit.destination.is_iss() || ctx_->topology.contains(unit.destination.node_id)) {
    seen_.emplace(unit.bundle_id, AckKind::CustodyAck);
    const DTNBundle copy = unit;
    queue_.enqueue(std::move(unit));
    return reply(AckKind::CustodyAck, copy, now);
  }
  return reject("unknown destination");
}

AckMessage BundleAgent::deliver_here(DTNBundle unit, UtcTime now) {
  const int hops = static_cast<int>(unit.hop_list.size()) - 1;
  if (!unit.is_fragment()) {
    try {
      (void)open_payload(unit, ctx_->key);
    } catch (const Error& e) {
      emit(AgentEventKind::Rejected, now, unit, {}, 0, e.what());
      return reply(AckKind::CustodyNak, unit, now, e.what());
    }
    set_status(unit, BundleStatus::Delivered);
    emit(AgentEventKind::Delivered, now, unit, {}, hops);
    const std::string id = unit.bundle_id;
    inbox_.insert_or_assign(id, std::move(unit));
    return AckMessage{AckKind::DeliveryAck, id, id_, now, ""};
  }
  const std::string unit_id = unit.bundle_id;
  const std::string parent = unit.parent_id();
  FragmentAccept state;
  try {
    state = reassembly_.accept_fragment(unit, ctx_->key, now);
  } catch (const Error& e) {
    emit(AgentEventKind::Rejected, now, unit, {}, 0, e.what());
    return reply(AckKind::CustodyNak, unit, now, e.what());
  }
  if (state == FragmentAccept::Complete) {
    auto buf = reassembly_.take(parent);
    try {
      (void)reassemble(*buf, ctx_->key);
      DTNBundle whole = reassembled_bundle(*buf);
      whole.hop_list = unit.hop_list;
      whole.status = BundleStatus::Delivered;
      emit(AgentEventKind::Delivered, now, whole, {}, hops);
      inbox_.insert_or_assign(parent, std::move(whole));
    } catch (const Error& e) {
      DTNBundle whole = reassembled_bundle(*buf);
      emit(AgentEventKind::Failed, now, whole, {}, 0, e.what());
    }
  }
  return AckMessage{AckKind::DeliveryAck, unit_id, id_, now, ""};
}

void BundleAgent::enqueue_broadcast_copies(const DTNBundle& unit, UtcTime now) {
  (void)now;
  for (const auto& peer : flood(unit, ctx_->topology, bstate_, id_)) {
    BroadcastCopy c{unit, peer, 0};
    c.bundle.status = BundleStatus::Queued;
    bcast_out_.push_back(std::move(c));
  }
}

void BundleAgent::apply(const CustodyEffect& fx, UtcTime now) {
  const auto it = in_flight_.find(fx.bundle_id);
  if (it == in_flight_.end()) return;
  DTNBundle& b = it->second.bundle;
  switch (fx.kind) {
    case CustodyEffectKind::Released:
    case CustodyEffectKind::Ignored:
      if (fx.kind == CustodyEffectKind::Released) in_flight_.erase(it);
      return;
    case CustodyEffectKind::Delivered:
      set_status(b, BundleStatus::Delivered);
      in_flight_.erase(it);
      return;
    case CustodyEffectKind::Retransmit: {
      emit(AgentEventKind::Retransmit, now, b, fx.peer, fx.retransmit_count);
      DTNBundle again = std::move(b);
      in_flight_.erase(it);
      again.security.bab.reset();
      queue_.enqueue(std::move(again));
      return;
    }
    case CustodyEffectKind::Failed:
      set_status(b, BundleStatus::Failed);
      emit(AgentEventKind::Failed, now, b, fx.peer, fx.retransmit_count, "retries exhausted");
      in_flight_.erase(it);
      return;
  }
}

void BundleAgent::requeue_or_fail_broadcast(const std::string& key, UtcTime now,
                                            const std::string& reason) {
  const auto it = bcast_in_flight_.find(key);
  if (it == bcast_in_flight_.end()) return;
  BroadcastCopy c = std::move(it->second);
  bcast_in_flight_.erase(it);
  if (c.attempts > pending_.config().max_retries) {
    emit(AgentEventKind::Failed, now, c.bundle, c.peer, c.attempts - 1, reason);
    return;
  }
  emit(AgentEventKind::Retransmit, now, c.bundle, c.peer, c.attempts);
  bcast_out_.push_back(std::move(c));
}

void BundleAgent::handle_ack(const AckMessage& ack, UtcTime now) {
  if (const auto bit = bcast_in_flight_.find(bcast_key(ack.bundle_id, ack.from));
      bit != bcast_in_flight_.end()) {
    emit(AgentEventKind::AckReceived, now, bit->second.bundle, ack.from, 0,
         std::string(to_string(ack.kind)));
    if (ack.kind == AckKind::CustodyNak) {
      requeue_or_fail_broadcast(bit->first, now, ack.reason);
    } else {
      bcast_in_flight_.erase(bit);
    }
    return;
  }
  const auto it = in_flight_.find(ack.bundle_id);
  if (it == in_flight_.end() || it->second.peer != ack.from) return;
  emit(AgentEventKind::AckReceived, now, it->second.bundle, ack.from, 0, std::string(to_string(ack.kind)));
  if (it->second.bundle.custody) {
    apply(pending_.on_ack(ack), now);
    return;
  }
  if (ack.kind == AckKind::CustodyNak) {
    apply(pending_.on_send_failure(ack.bundle_id), now);
  } else {
    pending_.drop(ack.bundle_id);
    apply({ack.kind == AckKind::DeliveryAck ? CustodyEffectKind::Delivered : CustodyEffectKind::Released,
           ack.bundle_id, ack.from, 0},
          now);
  }
}

void BundleAgent::send_failed(const std::string& bundle_id, const std::string& peer,
                              const std::string& reason, UtcTime now) {
  const std::string key = bcast_key(bundle_id, peer);
  if (const auto bit = bcast_in_flight_.find(key); bit != bcast_in_flight_.end()) {
    emit(AgentEventKind::TxFailed, now, bit->second.bundle, peer, 0, reason);
    requeue_or_fail_broadcast(key, now, reason);
    return;
  }
  const auto it = in_flight_.find(bundle_id);
  if (it == in_flight_.end() || it->second.peer != peer) return;
  emit(AgentEventKind::TxFailed, now, it->second.bundle, peer, 0, reason);
  apply(pending_.on_send_failure(bundle_id), now);
}

Route BundleAgent::plan(const DTNBundle& b, UtcTime now) const {
  const auto& topo = ctx_->topology;
  const auto& oracle = *ctx_->oracle;
  const double horizon = ctx_->planning_horizon_s;
  if (b.destination.is_broadcast()) {
    Route r{{id_}, true};
    return r;
  }
  std::set<std::string> avoid(b.hop_list.begin(), b.hop_list.end());
  avoid.erase(id_);
  if (is_iss()) {
    if (b.destination.is_iss()) throw NoRouteError("bundle is already at the ISS");
    return route_from_iss(topo, b.destination.node_id, now, oracle, horizon);
  }
  if (b.destination.is_iss()) return route_to_iss(topo, id_, now, oracle, horizon, avoid);
  try {
    return bfs_path(topo, id_, b.destination.node_id, avoid);
  } catch (const NoRouteError&) {
    // Partitioned mesh: relay through the ISS.
    if (avoid.contains(std::string(kIssNode))) throw;
    return route_to_iss(topo, id_, now, oracle, horizon, avoid);
  }
}

std::optional<std::string> BundleAgent::next_hop(const DTNBundle& b, UtcTime now) const {
  Route r;
  try {
    r = plan(b, now);
  } catch (const NoRouteError&) {
    return std::nullopt;
  }
  if (r.hops.size() < 2) return std::nullopt;
  const std::string& next = r.hops[1];
  const auto& oracle = *ctx_->oracle;
  if (next == kIssNode && !oracle.visible(id_, now)) return std::nullopt;
  if (is_iss() && !oracle.visible(next, now)) return std::nullopt;
  return next;
}

std::vector<Dispatch> BundleAgent::poll(UtcTime now,
                                        const std::function<bool(const std::string&)>& link_free) {
  std::vector<Dispatch> out;
  std::set<std::string> used;
  auto usable = [&](const std::string& peer) {
    if (used.contains(peer) || !link_free(peer)) return false;
    if (peer == kIssNode) return ctx_->oracle->visible(id_, now);
    if (is_iss()) return ctx_->oracle->visible(peer, now);
    return true;
  };

  std::vector<std::pair<std::string, std::string>> picks;  // bundle id, next hop
  for (const DTNBundle* b : queue_.in_order()) {
    const auto next = next_hop(*b, now);
    if (!next || !usable(*next)) continue;
    used.insert(*next);
    picks.emplace_back(b->bundle_id, *next);
  }
  for (auto& [id, peer] : picks) {
    DTNBundle b = *queue_.take(id);
    set_status(b, BundleStatus::InTransit);
    b.security.bab = bab_create(b.bab_subject(), id_, peer, ctx_->key);
    const int attempt = pending_.retransmit_count(id) + 1;
    if (b.custody) pending_.register_pending(id, peer, now);
    emit(AgentEventKind::TxStart, now, b, peer, attempt);
    out.push_back(Dispatch{b, peer, attempt});
    in_flight_.insert_or_assign(id, Flight{std::move(b), peer});
  }

  for (auto it = bcast_out_.begin(); it != bcast_out_.end();) {
    if (!usable(it->peer)) {
      ++it;
      continue;
    }
    used.insert(it->peer);
    BroadcastCopy c = std::move(*it);
    it = bcast_out_.erase(it);
    ++c.attempts;
    c.bundle.status = BundleStatus::InTransit;
    c.bundle.security.bab = bab_create(c.bundle.bab_subject(), id_, c.peer, ctx_->key);
    emit(AgentEventKind::TxStart, now, c.bundle, c.peer, c.attempts);
    out.push_back(Dispatch{c.bundle, c.peer, c.attempts});
    bcast_in_flight_.insert_or_assign(bcast_key(c.bundle.bundle_id, c.peer), std::move(c));
  }
  return out;
}

void BundleAgent::tick(UtcTime now) {
  for (const auto& fx : pending_.on_timeout(now)) {
    if (const auto it = in_flight_.find(fx.bundle_id); it != in_flight_.end()) {
      emit(AgentEventKind::TxFailed, now, it->second.bundle, fx.peer, 0, "custody timeout");
    }
    apply(fx, now);
  }
  for (auto& b : queue_.expire_ttl(now)) {
    pending_.drop(b.bundle_id);
    emit(AgentEventKind::Expired, now, b);
  }
  for (auto it = in_flight_.begin(); it != in_flight_.end();) {
    if (it->second.bundle.expires_at() <= now) {
      set_status(it->second.bundle, BundleStatus::Expired);
      pending_.drop(it->first);
      emit(AgentEventKind::Expired, now, it->second.bundle);
      it = in_flight_.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = bcast_out_.begin(); it != bcast_out_.end();) {
    if (it->bundle.expires_at() <= now) {
      it = bcast_out_.erase(it);
    } else {
      ++it;
    }
  }
  for (const auto& parent : reassembly_.evict_expired(now)) {
    DTNBundle stub;
    stub.bundle_id = parent;
    emit(AgentEventKind::Expired, now, stub, {}, 0, "reassembly incomplete");
  }
}

Bytes BundleAgent::open(const std::string& bundle_id) const {
  if (const auto it = inbox_.find(bundle_id); it != inbox_.end()) {
    return open_payload(it->second, ctx_->key);
  }
  if (const auto* buf = reassembly_.find(bundle_id)) {
    throw ConflictError("bundle " + bundle_id + " has " + std::to_string(buf->received.size()) + " of " +
                        std::to_string(buf->total_expected) + " fragments");
  }
  throw NotFoundError("no bundle " + bundle_id + " delivered here");
}

}  // namespace dtnsim
