#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dtnsim/bsp.hpp"
#include "dtnsim/time.hpp"

namespace dtnsim {

inline constexpr std::string_view kIssNode = "ISS";
inline constexpr std::string_view kBroadcast = "*";
inline constexpr double kDefaultTtlSeconds = 86400.0;

struct Endpoint {
  std::string node_id;

  Endpoint() = default;
  explicit Endpoint(std::string id);  // throws DomainError when empty

  bool is_broadcast() const { return node_id == kBroadcast; }
  bool is_iss() const { return node_id == kIssNode; }
  bool operator==(const Endpoint&) const = default;
};

enum class Priority : int { Bulk = 0, Normal = 1, Expedited = 2 };

enum class BundleStatus { Created, Queued, InTransit, Delivered, Failed, Expired };

std::string_view to_string(Priority p);
std::string_view to_string(BundleStatus s);
Priority parse_priority(std::string_view text);
BundleStatus parse_status(std::string_view text);

bool is_terminal(BundleStatus s);
// Edges of the lifecycle graph:
//   CREATED -> QUEUED -> IN_TRANSIT -> {QUEUED, DELIVERED, FAILED}
//   any non-terminal -> EXPIRED
bool transition_allowed(BundleStatus from, BundleStatus to);

struct FragmentInfo {
  std::string parent_id;
  int fragment_number = 0;
  int total_fragments = 1;
  // SHA-256 hex of the parent's complete base64 ciphertext (what the PIB signs).
  std::string parent_encrypted_hash;
  // HMAC-SHA256 binding this chunk to its parent and position.
  std::string chunk_signature;

  bool operator==(const FragmentInfo&) const = default;
};

struct DTNBundle {
  std::string bundle_id;
  Endpoint source;
  Endpoint destination;
  std::string encrypted_payload;  // base64 ciphertext (or one chunk of it)
  std::string payload_hash;       // SHA-256 hex of the plaintext
  Priority priority = Priority::Normal;
  UtcTime created_at{};
  double ttl_s = kDefaultTtlSeconds;
  bool custody = true;
  std::vector<std::string> hop_list;
  BundleStatus status = BundleStatus::Created;
  SecurityBlocks security;
  std::optional<FragmentInfo> fragment;

  bool operator==(const DTNBundle&) const = default;

  bool is_fragment() const { return fragment.has_value(); }
  // Identity of the user-level bundle: parent id for fragments.
  const std::string& parent_id() const { return fragment ? fragment->parent_id : bundle_id; }
  UtcTime expires_at() const { return add_seconds(created_at, ttl_s); }
  BabSubject bab_subject() const {
    return {bundle_id, source.node_id, destination.node_id, payload_hash};
  }
};

// Applies a lifecycle edge; throws ProtocolError for edges outside the graph.
void set_status(DTNBundle& bundle, BundleStatus next);

// Appends node to the hop list; throws ProtocolError if it is already there.
void append_hop(DTNBundle& bundle, std::string_view node);

struct BundleOptions {
  Priority priority = Priority::Normal;
  bool custody = true;
  double ttl_s = kDefaultTtlSeconds;
};

// "{source}-{created_at_ms}-{8 hex}"
std::string make_bundle_id(std::string_view source, UtcTime created_at, std::mt19937_64& rng);

// Encrypts the payload (PCB), signs the ciphertext hash (PIB) and returns a
// CREATED bundle with hop_list = [source].
DTNBundle create_bundle(std::span<const std::uint8_t> plaintext, const Endpoint& source,
                        const Endpoint& destination, const BundleOptions& options,
                        const SymmetricKey& key, UtcTime now, std::mt19937_64& rng);
DTNBundle create_bundle(std::string_view plaintext, const Endpoint& source,
                        const Endpoint& destination, const BundleOptions& options,
                        const SymmetricKey& key, UtcTime now, std::mt19937_64& rng);

// Decrypts an unfragmented bundle and checks the plaintext against payload_hash.
Bytes open_payload(const DTNBundle& bundle, const SymmetricKey& key);

// ---- canonical document ----------------------------------------------------

nlohmann::json to_document(const DTNBundle& bundle);
DTNBundle bundle_from_document(const nlohmann::json& doc);  // throws ParseError
std::string serialize(const DTNBundle& bundle);
DTNBundle deserialize_bundle(std::string_view text);
std::size_t serialized_size(const DTNBundle& bundle);

// ---- priority queue --------------------------------------------------------

// Drain order: priority descending, then created_at ascending, then bundle_id.
bool drains_before(const DTNBundle& a, const DTNBundle& b);

class BundleQueue {
 public:
  // Sets status QUEUED. Throws ProtocolError on a duplicate id or when the
  // bundle is not CREATED/QUEUED/IN_TRANSIT.
  void enqueue(DTNBundle bundle);
  std::optional<DTNBundle> next_for_transmission();
  std::optional<DTNBundle> take(std::string_view bundle_id);

  const DTNBundle* find(std::string_view bundle_id) const;
  bool contains(std::string_view bundle_id) const { return find(bundle_id) != nullptr; }
  std::size_t size() const { return bundles_.size(); }
  bool empty() const { return bundles_.empty(); }

  // Bundles in drain order, without removing them.
  std::vector<const DTNBundle*> in_order() const;

  // Removes every bundle whose TTL has lapsed at now, marking it EXPIRED.
  std::vector<DTNBundle> expire_ttl(UtcTime now);

 private:
  struct Key {
    int priority;
    UtcTime created_at;
    std::string bundle_id;
    auto operator<=>(const Key& other) const {
      if (auto c = other.priority <=> priority; c != 0) return c;
      if (auto c = created_at <=> other.created_at; c != 0) return c;
      return bundle_id <=> other.bundle_id;
    }
    bool operator==(const Key&) const = default;
  };
  static Key key_of(const DTNBundle& b);

  std::set<Key> order_;
  std::map<std::string, DTNBundle, std::less<>> bundles_;
};

// Marks every non-terminal bundle whose TTL has lapsed as EXPIRED and
// returns their ids.
std::vector<std::string> expire_ttl(UtcTime now, std::span<DTNBundle> bundles);

}  // namespace dtnsim
