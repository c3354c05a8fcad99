#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dtnsim/bundle.hpp"

namespace dtnsim {

struct FragmentPolicy {
  std::size_t mtu = 4096;             // serialized bundle bytes, headers included
  std::size_t header_reserve = 1024;  // room left for the document around a chunk

  std::size_t chunk_size() const { return mtu - header_reserve; }
  void validate() const;  // ConfigError when mtu <= header_reserve
};

// Returns {bundle} when its serialized document fits the MTU. Otherwise the
// base64 ciphertext is cut into chunk_size() pieces; fragment i gets a fresh
// id, the parent's security blocks, priority, custody flag, created_at and TTL.
std::vector<DTNBundle> maybe_fragment(const DTNBundle& bundle, const FragmentPolicy& policy,
                                      const SymmetricKey& key, std::mt19937_64& rng);

std::string chunk_signing_string(const FragmentInfo& info, std::string_view chunk);

// PIB over the parent ciphertext hash plus the chunk's own signature.
bool verify_fragment(const DTNBundle& fragment, const SymmetricKey& key) noexcept;

enum class FragmentAccept { Stored, Duplicate, Complete };

struct ReassemblyBuffer {
  std::string parent_id;
  std::map<int, std::string> received;  // fragment_number -> chunk
  int total_expected = 0;
  UtcTime first_seen{};
  DTNBundle header;  // metadata of the first fragment seen, used to rebuild the parent

  bool complete() const { return static_cast<int>(received.size()) == total_expected; }
};

class ReassemblyTable {
 public:
  // IntegrityError when the fragment fails verification (nothing stored);
  // ProtocolError on inconsistent fragment metadata.
  FragmentAccept accept_fragment(const DTNBundle& fragment, const SymmetricKey& key, UtcTime now);

  const ReassemblyBuffer* find(const std::string& parent_id) const;
  std::optional<ReassemblyBuffer> take(const std::string& parent_id);
  // Drops buffers whose parent TTL has lapsed; returns their parent ids.
  std::vector<std::string> evict_expired(UtcTime now);

  const std::map<std::string, ReassemblyBuffer>& buffers() const { return buffers_; }

 private:
  std::map<std::string, ReassemblyBuffer> buffers_;
};

// Concatenates chunks by fragment number, checks the ciphertext against the
// PIB, decrypts and checks the plaintext hash. ConflictError when incomplete,
// IntegrityError on any mismatch.
Bytes reassemble(const ReassemblyBuffer& buffer, const SymmetricKey& key);

// The parent bundle as it would look unfragmented (full ciphertext, parent id).
DTNBundle reassembled_bundle(const ReassemblyBuffer& buffer);

}  // namespace dtnsim
