#include "dtnsim/custody.hpp"

#include "dtnsim/error.hpp"

namespace dtnsim {

std::string_view to_string(AckKind k) {
  switch (k) {
    case AckKind::CustodyAck: return "custody_ack";
    case AckKind::CustodyNak: return "custody_nak";
    case AckKind::DeliveryAck: return "delivery_ack";
  }
  return "?";
}

AckKind parse_ack_kind(std::string_view text) {
  if (text == "custody_ack") return AckKind::CustodyAck;
  if (text == "custody_nak") return AckKind::CustodyNak;
  if (text == "delivery_ack") return AckKind::DeliveryAck;
  throw ParseError("unknown ack type '" + std::string(text) + "'");
}

void CustodyConfig::validate() const {
  if (!(ack_timeout_s > 0)) throw ConfigError("ack_timeout_s must be positive");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
}

PendingSet::PendingSet(CustodyConfig cfg) : cfg_(cfg) { cfg_.validate(); }

const PendingAck& PendingSet::register_pending(const std::string& bundle_id,
                                               const std::string& next_hop, UtcTime now) {
  PendingAck p{bundle_id, next_hop, now, add_seconds(now, cfg_.ack_timeout_s),
               retransmit_count(bundle_id)};
  return pending_.insert_or_assign(bundle_id, std::move(p)).first->second;
}

CustodyEffect PendingSet::retry_or_fail(const std::string& bundle_id, const std::string& peer) {
  pending_.erase(bundle_id);
  const int count = retransmit_count(bundle_id);
  if (count >= cfg_.max_retries) {
    retries_.erase(bundle_id);
    return {CustodyEffectKind::Failed, bundle_id, peer, count};
  }
  retries_[bundle_id] = count + 1;
  return {CustodyEffectKind::Retransmit, bundle_id, peer, count + 1};
}

CustodyEffect PendingSet::on_ack(const AckMessage& ack) {
  const auto it = pending_.find(ack.bundle_id);
  if (it == pending_.end() || it->second.expected_from != ack.from) {
    return {CustodyEffectKind::Ignored, ack.bundle_id, ack.from, 0};
  }
  const int count = it->second.retransmit_count;
  switch (ack.kind) {
    case AckKind::CustodyNak: return retry_or_fail(ack.bundle_id, ack.from);
    case AckKind::CustodyAck:
    case AckKind::DeliveryAck: {
      pending_.erase(it);
      retries_.erase(ack.bundle_id);
      const auto kind = ack.kind == AckKind::CustodyAck ? CustodyEffectKind::Released
                                                        : CustodyEffectKind::Delivered;
      return {kind, ack.bundle_id, ack.from, count};
    }
  }
  return {};
}

CustodyEffect PendingSet::on_send_failure(const std::string& bundle_id) {
  const auto it = pending_.find(bundle_id);
  const std::string peer = it == pending_.end() ? std::string() : it->second.expected_from;
  return retry_or_fail(bundle_id, peer);
}

std::vector<CustodyEffect> PendingSet::on_timeout(UtcTime now) {
  std::vector<std::pair<std::string, std::string>> due;
  for (const auto& [id, p] : pending_) {
    if (p.deadline <= now) due.emplace_back(id, p.expected_from);
  }
  std::vector<CustodyEffect> out;
  for (const auto& [id, peer] : due) out.push_back(retry_or_fail(id, peer));
  return out;
}

void PendingSet::drop(const std::string& bundle_id) {
  pending_.erase(bundle_id);
  retries_.erase(bundle_id);
}

const PendingAck* PendingSet::find(const std::string& bundle_id) const {
  const auto it = pending_.find(bundle_id);
  return it == pending_.end() ? nullptr : &it->second;
}

int PendingSet::retransmit_count(const std::string& bundle_id) const {
  const auto it = retries_.find(bundle_id);
  return it == retries_.end() ? 0 : it->second;
}

}  // namespace dtnsim
