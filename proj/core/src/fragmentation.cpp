#include "dtnsim/fragmentation.hpp"

#include "dtnsim/error.hpp"

namespace dtnsim {

void FragmentPolicy::validate() const {
  if (mtu <= header_reserve) {
    throw ConfigError("MTU (" + std::to_string(mtu) + ") must exceed the header reserve (" +
                      std::to_string(header_reserve) + ")");
  }
}

std::string chunk_signing_string(const FragmentInfo& info, std::string_view chunk) {
  return info.parent_id + "|" + std::to_string(info.fragment_number) + "|" +
         std::to_string(info.total_fragments) + "|" + info.parent_encrypted_hash + "|" +
         sha256_hex(chunk);
}

std::vector<DTNBundle> maybe_fragment(const DTNBundle& bundle, const FragmentPolicy& policy,
                                      const SymmetricKey& key, std::mt19937_64& rng) {
  policy.validate();
  if (bundle.is_fragment()) throw ProtocolError("re-fragmenting a fragment is not supported");
  if (serialized_size(bundle) <= policy.mtu) return {bundle};

  const std::string& payload = bundle.encrypted_payload;
  const std::size_t chunk = policy.chunk_size();
  const auto total = static_cast<int>((payload.size() + chunk - 1) / chunk);
  const std::string parent_hash = sha256_hex(payload);

  std::vector<DTNBundle> out;
  out.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    DTNBundle f = bundle;
    f.bundle_id = make_bundle_id(bundle.source.node_id, bundle.created_at, rng);
    f.encrypted_payload = payload.substr(static_cast<std::size_t>(i) * chunk, chunk);
    f.security.bab.reset();
    FragmentInfo info;
    info.parent_id = bundle.bundle_id;
    info.fragment_number = i;
    info.total_fragments = total;
    info.parent_encrypted_hash = parent_hash;
    info.chunk_signature = hmac_sha256_hex(key, chunk_signing_string(info, f.encrypted_payload));
    f.fragment = std::move(info);
    out.push_back(std::move(f));
  }
  return out;
}

bool verify_fragment(const DTNBundle& fragment, const SymmetricKey& key) noexcept {
  if (!fragment.fragment) return false;
  const FragmentInfo& info = *fragment.fragment;
  if (!pib_verify(fragment.security.pib, info.parent_encrypted_hash, key)) return false;
  try {
    return constant_time_equal(
        hmac_sha256_hex(key, chunk_signing_string(info, fragment.encrypted_payload)),
        info.chunk_signature);
  } catch (...) {
    return false;
  }
}

FragmentAccept ReassemblyTable::accept_fragment(const DTNBundle& fragment, const SymmetricKey& key,
                                                UtcTime now) {
  if (!fragment.fragment) throw ProtocolError("bundle carries no fragment metadata");
  const FragmentInfo& info = *fragment.fragment;
  if (info.total_fragments < 1 || info.fragment_number < 0 ||
      info.fragment_number >= info.total_fragments) {
    throw ProtocolError("fragment number out of range for " + fragment.bundle_id);
  }
  if (!verify_fragment(fragment, key)) {
    throw IntegrityError("fragment integrity check failed: " + fragment.bundle_id);
  }
  auto it = buffers_.find(info.parent_id);
  if (it == buffers_.end()) {
    ReassemblyBuffer buf;
    buf.parent_id = info.parent_id;
    buf.total_expected = info.total_fragments;
    buf.first_seen = now;
    buf.header = fragment;
    it = buffers_.emplace(info.parent_id, std::move(buf)).first;
  } else if (it->second.total_expected != info.total_fragments) {
    throw ProtocolError("total_fragments mismatch for parent " + info.parent_id);
  }
  ReassemblyBuffer& buf = it->second;
  if (buf.received.contains(info.fragment_number)) return FragmentAccept::Duplicate;
  buf.received.emplace(info.fragment_number, fragment.encrypted_payload);
  buf.header.hop_list = fragment.hop_list;
  return buf.complete() ? FragmentAccept::Complete : FragmentAccept::Stored;
}

const ReassemblyBuffer* ReassemblyTable::find(const std::string& parent_id) const {
  auto it = buffers_.find(parent_id);
  return it == buffers_.end() ? nullptr : &it->second;
}

std::optional<ReassemblyBuffer> ReassemblyTable::take(const std::string& parent_id) {
  auto it = buffers_.find(parent_id);
  if (it == buffers_.end()) return std::nullopt;
  ReassemblyBuffer out = std::move(it->second);
  buffers_.erase(it);
  return out;
}

std::vector<std::string> ReassemblyTable::evict_expired(UtcTime now) {
  std::vector<std::string> out;
  for (auto it = buffers_.begin(); it != buffers_.end();) {
    if (it->second.header.expires_at() <= now) {
      out.push_back(it->first);
      it = buffers_.erase(it);
    } else {
      ++it;
    }
  }
  return out;
}

Bytes reassemble(const ReassemblyBuffer& buffer, const SymmetricKey& key) {
  if (!buffer.complete()) {
    throw ConflictError("reassembly incomplete for " + buffer.parent_id + " (" +
                        std::to_string(buffer.received.size()) + "/" +
                        std::to_string(buffer.total_expected) + ")");
  }
  const DTNBundle parent = reassembled_bundle(buffer);
  const FragmentInfo& info = *buffer.header.fragment;
  if (sha256_hex(parent.encrypted_payload) != info.parent_encrypted_hash) {
    throw IntegrityError("reassembled ciphertext does not match for " + buffer.parent_id);
  }
  return open_payload(parent, key);
}

DTNBundle reassembled_bundle(const ReassemblyBuffer& buffer) {
  DTNBundle parent = buffer.header;
  parent.bundle_id = buffer.parent_id;
  parent.fragment.reset();
  parent.security.bab.reset();
  parent.encrypted_payload.clear();
  for (const auto& [n, chunk] : buffer.received) parent.encrypted_payload += chunk;
  return parent;
}

}  // namespace dtnsim
