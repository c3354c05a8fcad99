#include "dtnsim/bundle.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>

#include "dtnsim/error.hpp"

namespace dtnsim {

using nlohmann::json;

Endpoint::Endpoint(std::string id) : node_id(std::move(id)) {
  if (node_id.empty()) throw DomainError("endpoint node id must not be empty");
}

std::string_view to_string(Priority p) {
  switch (p) {
    case Priority::Bulk:
      return "BULK";
    case Priority::Normal:
      return "NORMAL";
    case Priority::Expedited:
      return "EXPEDITED";
  }
  return "NORMAL";
}

std::string_view to_string(BundleStatus s) {
  switch (s) {
    case BundleStatus::Created:
      return "CREATED";
    case BundleStatus::Queued:
      return "QUEUED";
    case BundleStatus::InTransit:
      return "IN_TRANSIT";
    case BundleStatus::Delivered:
      return "DELIVERED";
    case BundleStatus::Failed:
      return "FAILED";
    case BundleStatus::Expired:
      return "EXPIRED";
  }
  return "CREATED";
}

Priority parse_priority(std::string_view text) {
  for (auto p : {Priority::Bulk, Priority::Normal, Priority::Expedited}) {
    if (to_string(p) == text) return p;
  }
  throw ParseError("unknown priority: " + std::string(text));
}

BundleStatus parse_status(std::string_view text) {
  for (auto s : {BundleStatus::Created, BundleStatus::Queued, BundleStatus::InTransit,
                 BundleStatus::Delivered, BundleStatus::Failed, BundleStatus::Expired}) {
    if (to_string(s) == text) return s;
  }
  throw ParseError("unknown bundle status: " + std::string(text));
}

bool is_terminal(BundleStatus s) {
  return s == BundleStatus::Delivered || s == BundleStatus::Failed || s == BundleStatus::Expired;
}

bool transition_allowed(BundleStatus from, BundleStatus to) {
  using S = BundleStatus;
  if (is_terminal(from)) return false;
  if (to == S::Expired) return true;
  switch (from) {
    case S::Created:
      return to == S::Queued;
    case S::Queued:
      return to == S::InTransit;
    case S::InTransit:
      return to == S::Queued || to == S::Delivered || to == S::Failed;
    default:
      return false;
  }
}

void set_status(DTNBundle& bundle, BundleStatus next) {
  if (bundle.status == next) return;
  if (!transition_allowed(bundle.status, next)) {
    throw ProtocolError("illegal status transition " + std::string(to_string(bundle.status)) +
                        " -> " + std::string(to_string(next)) + " for " + bundle.bundle_id);
  }
  bundle.status = next;
}

void append_hop(DTNBundle& bundle, std::string_view node) {
  if (std::find(bundle.hop_list.begin(), bundle.hop_list.end(), node) != bundle.hop_list.end()) {
    throw ProtocolError("loop: " + std::string(node) + " already in hop list of " +
                        bundle.bundle_id);
  }
  bundle.hop_list.emplace_back(node);
}

std::string make_bundle_id(std::string_view source, UtcTime created_at, std::mt19937_64& rng) {
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(created_at.time_since_epoch()).count();
  char suffix[9];
  std::snprintf(suffix, sizeof suffix, "%08x", static_cast<unsigned>(rng() & 0xffffffffu));
  return std::string(source) + "-" + std::to_string(ms) + "-" + suffix;
}

DTNBundle create_bundle(std::span<const std::uint8_t> plaintext, const Endpoint& source,
                        const Endpoint& destination, const BundleOptions& options,
                        const SymmetricKey& key, UtcTime now, std::mt19937_64& rng) {
  if (plaintext.empty()) throw DomainError("bundle payload must not be empty");
  if (!(options.ttl_s > 0.0)) throw DomainError("bundle ttl must be positive");
  if (source.node_id.empty() || destination.node_id.empty()) {
    throw DomainError("bundle endpoints must be set");
  }
  if (source.is_broadcast()) throw DomainError("broadcast is only valid as a destination");
  if (source == destination) throw DomainError("source and destination must differ");

  const PCB pcb = pcb_encrypt(plaintext, key);
  DTNBundle b;
  b.bundle_id = make_bundle_id(source.node_id, now, rng);
  b.source = source;
  b.destination = destination;
  b.encrypted_payload = pcb.ciphertext;
  b.payload_hash = sha256_hex(plaintext);
  b.priority = options.priority;
  b.created_at = now;
  b.ttl_s = options.ttl_s;
  b.custody = options.custody;
  b.hop_list = {source.node_id};
  b.status = BundleStatus::Created;
  b.security.pcb_iv = pcb.iv;
  b.security.pib = pib_create(sha256_hex(pcb.ciphertext), key);
  return b;
}

DTNBundle create_bundle(std::string_view plaintext, const Endpoint& source,
                        const Endpoint& destination, const BundleOptions& options,
                        const SymmetricKey& key, UtcTime now, std::mt19937_64& rng) {
  return create_bundle(
      std::span(reinterpret_cast<const std::uint8_t*>(plaintext.data()), plaintext.size()), source,
      destination, options, key, now, rng);
}

Bytes open_payload(const DTNBundle& bundle, const SymmetricKey& key) {
  if (bundle.is_fragment()) throw ConflictError("cannot open a single fragment");
  if (!pib_verify(bundle.security.pib, sha256_hex(bundle.encrypted_payload), key)) {
    throw IntegrityError("PIB verification failed for " + bundle.bundle_id);
  }
  Bytes plain = pcb_decrypt(PCB{bundle.security.pcb_iv, bundle.encrypted_payload}, key);
  if (sha256_hex(plain) != bundle.payload_hash) {
    throw IntegrityError("payload hash mismatch for " + bundle.bundle_id);
  }
  return plain;
}

// ---- canonical document ------------------------------------------------------

json to_document(const DTNBundle& b) {
  json security = {{"pcb", {{"iv", b.security.pcb_iv}}},
                   {"pib", {{"signature", b.security.pib.signature}}}};
  if (b.security.bab) {
    security["bab"] = {{"security_source", b.security.bab->security_source},
                       {"security_dest", b.security.bab->security_dest},
                       {"signature", b.security.bab->signature}};
  }
  json doc = {{"bundle_id", b.bundle_id},
              {"source", b.source.node_id},
              {"destination", b.destination.node_id},
              {"encrypted_payload", b.encrypted_payload},
              {"payload_hash", b.payload_hash},
              {"priority", to_string(b.priority)},
              {"created_at", to_iso8601(b.created_at)},
              {"ttl_s", b.ttl_s},
              {"custody", b.custody},
              {"hop_list", b.hop_list},
              {"status", to_string(b.status)},
              {"security", std::move(security)}};
  if (b.fragment) {
    doc["fragment"] = {{"parent_id", b.fragment->parent_id},
                       {"fragment_number", b.fragment->fragment_number},
                       {"total_fragments", b.fragment->total_fragments},
                       {"parent_encrypted_hash", b.fragment->parent_encrypted_hash},
                       {"chunk_signature", b.fragment->chunk_signature}};
  }
  return doc;
}

DTNBundle bundle_from_document(const json& doc) {
  try {
    DTNBundle b;
    b.bundle_id = doc.at("bundle_id").get<std::string>();
    b.source = Endpoint(doc.at("source").get<std::string>());
    b.destination = Endpoint(doc.at("destination").get<std::string>());
    b.encrypted_payload = doc.at("encrypted_payload").get<std::string>();
    b.payload_hash = doc.at("payload_hash").get<std::string>();
    b.priority = parse_priority(doc.at("priority").get<std::string>());
    b.created_at = parse_iso8601(doc.at("created_at").get<std::string>());
    b.ttl_s = doc.at("ttl_s").get<double>();
    b.custody = doc.at("custody").get<bool>();
    b.hop_list = doc.at("hop_list").get<std::vector<std::string>>();
    b.status = parse_status(doc.at("status").get<std::string>());
    const json& sec = doc.at("security");
    b.security.pcb_iv = sec.at("pcb").at("iv").get<std::string>();
    b.security.pib.signature = sec.at("pib").at("signature").get<std::string>();
    if (auto it = sec.find("bab"); it != sec.end() && !it->is_null()) {
      b.security.bab = BAB{it->at("security_source").get<std::string>(),
                           it->at("security_dest").get<std::string>(),
                           it->at("signature").get<std::string>()};
    }
    if (auto it = doc.find("fragment"); it != doc.end() && !it->is_null()) {
      FragmentInfo f;
      f.parent_id = it->at("parent_id").get<std::string>();
      f.fragment_number = it->at("fragment_number").get<int>();
      f.total_fragments = it->at("total_fragments").get<int>();
      f.parent_encrypted_hash = it->at("parent_encrypted_hash").get<std::string>();
      f.chunk_signature = it->at("chunk_signature").get<std::string>();
      b.fragment = std::move(f);
    }
    return b;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed bundle document: ") + e.what());
  } catch (const DomainError& e) {
    throw ParseError(std::string("malformed bundle document: ") + e.what());
  }
}

std::string serialize(const DTNBundle& bundle) { return to_document(bundle).dump(); }

DTNBundle deserialize_bundle(std::string_view text) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw ParseError("bundle document is not valid JSON");
  return bundle_from_document(doc);
}

std::size_t serialized_size(const DTNBundle& bundle) { return serialize(bundle).size(); }

// ---- priority queue ------------------------------------------------------------

bool drains_before(const DTNBundle& a, const DTNBundle& b) {
  if (a.priority != b.priority) return static_cast<int>(a.priority) > static_cast<int>(b.priority);
  if (a.created_at != b.created_at) return a.created_at < b.created_at;
  return a.bundle_id < b.bundle_id;
}

BundleQueue::Key BundleQueue::key_of(const DTNBundle& b) {
  return Key{static_cast<int>(b.priority), b.created_at, b.bundle_id};
}

void BundleQueue::enqueue(DTNBundle bundle) {
  if (bundles_.contains(bundle.bundle_id)) {
    throw ProtocolError("bundle already queued: " + bundle.bundle_id);
  }
  if (bundle.status != BundleStatus::Queued) set_status(bundle, BundleStatus::Queued);
  order_.insert(key_of(bundle));
  std::string id = bundle.bundle_id;
  bundles_.emplace(std::move(id), std::move(bundle));
}

std::optional<DTNBundle> BundleQueue::next_for_transmission() {
  if (order_.empty()) return std::nullopt;
  return take(order_.begin()->bundle_id);
}

std::optional<DTNBundle> BundleQueue::take(std::string_view bundle_id) {
  auto it = bundles_.find(bundle_id);
  if (it == bundles_.end()) return std::nullopt;
  order_.erase(key_of(it->second));
  DTNBundle out = std::move(it->second);
  bundles_.erase(it);
  return out;
}

const DTNBundle* BundleQueue::find(std::string_view bundle_id) const {
  auto it = bundles_.find(bundle_id);
  return it == bundles_.end() ? nullptr : &it->second;
}

std::vector<const DTNBundle*> BundleQueue::in_order() const {
  std::vector<const DTNBundle*> out;
  out.reserve(order_.size());
  for (const auto& k : order_) out.push_back(&bundles_.find(k.bundle_id)->second);
  return out;
}

std::vector<DTNBundle> BundleQueue::expire_ttl(UtcTime now) {
  std::vector<std::string> lapsed;
  for (const auto& [id, b] : bundles_) {
    if (b.expires_at() <= now) lapsed.push_back(id);
  }
  std::vector<DTNBundle> out;
  for (const auto& id : lapsed) {
    auto b = take(id);
    set_status(*b, BundleStatus::Expired);
    out.push_back(std::move(*b));
  }
  return out;
}

std::vector<std::string> expire_ttl(UtcTime now, std::span<DTNBundle> bundles) {
  std::vector<std::string> out;
  for (auto& b : bundles) {
    if (!is_terminal(b.status) && b.expires_at() <= now) {
      set_status(b, BundleStatus::Expired);
      out.push_back(b.bundle_id);
    }
  }
  return out;
}

}  // namespace dtnsim
