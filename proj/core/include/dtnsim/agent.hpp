#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dtnsim/bsp.hpp"
#include "dtnsim/bundle.hpp"
#include "dtnsim/custody.hpp"
#include "dtnsim/fragmentation.hpp"
#include "dtnsim/routing.hpp"

namespace dtnsim {

enum class AgentEventKind {
  Created,      // value = plaintext bytes, bytes = encrypted bytes, count = fragments
  TxStart,      // value = attempt number, bytes = serialized size
  TxFailed,     // detail = reason
  Received,     // a unit accepted at `node` from `peer`
  Rejected,     // NAK sent, detail = reason
  Delivered,    // user-level bundle complete at its destination; value = hops
  AckReceived,  // detail = ack kind
  Retransmit,   // value = retransmit count
  Failed,
  Expired,
};

std::string_view to_string(AgentEventKind k);

struct AgentEvent {
  AgentEventKind kind = AgentEventKind::Created;
  UtcTime at{};
  std::string node;
  std::string peer;
  std::string bundle_id;  // the unit on the wire (fragment or whole bundle)
  std::string parent_id;
  long long value = 0;
  std::size_t bytes = 0;
  int count = 0;
  int expected_receivers = 1;  // broadcast bundles: stations that should get it
  std::string detail;
  const DTNBundle* bundle = nullptr;  // valid only during record()
};

class EventSink {
 public:
  virtual ~EventSink() = default;
  virtual void record(const AgentEvent& event) = 0;
};

// Read-only configuration shared by every node of one network.
struct NodeContext {
  MeshTopology topology;
  std::shared_ptr<const ContactOracle> oracle;
  SymmetricKey key{};
  CustodyConfig custody;
  FragmentPolicy fragment_policy;
  double planning_horizon_s = kDefaultPlanningHorizonS;
};

struct Dispatch {
  DTNBundle bundle;  // carries the BAB for this hop
  std::string next_hop;
  int attempt = 1;
};

// Per-node DTN logic: queueing, routing, custody, reassembly. Not
// thread-safe; each node's owner drives it from a single thread.
class BundleAgent {
 public:
  BundleAgent(std::string id, std::shared_ptr<const NodeContext> ctx, EventSink* sink);

  const std::string& id() const { return id_; }
  bool is_iss() const { return id_ == kIssNode; }

  // A bundle created here: fragmented when over the MTU, then queued. Returns
  // the ids of the queued units.
  std::vector<std::string> originate(const DTNBundle& bundle, std::size_t plaintext_bytes,
                                     UtcTime now, std::mt19937_64& rng);

  // A unit arriving from `from`. Returns the reply for the sender.
  AckMessage receive(DTNBundle unit, const std::string& from, UtcTime now);

  void handle_ack(const AckMessage& ack, UtcTime now);
  // The transport gave up on a send (contact lost, connection error, drop).
  void send_failed(const std::string& bundle_id, const std::string& peer, const std::string& reason,
                   UtcTime now);

  // Units ready to go now, in queue order, at most one per link.
  // `link_free(peer)` reports whether the directed link to peer is idle.
  std::vector<Dispatch> poll(UtcTime now, const std::function<bool(const std::string&)>& link_free);

  // Custody timeouts, TTL expiry and stale reassembly buffers.
  void tick(UtcTime now);

  // Planned path for a unit sitting here; NoRouteError when none.
  Route plan(const DTNBundle& bundle, UtcTime now) const;

  const BundleQueue& queue() const { return queue_; }
  std::size_t in_flight() const { return in_flight_.size() + bcast_in_flight_.size(); }
  std::size_t backlog() const { return queue_.size() + bcast_out_.size(); }
  bool idle() const { return backlog() == 0 && in_flight() == 0; }
  const PendingSet& pending() const { return pending_; }
  const ReassemblyTable& reassembly() const { return reassembly_; }
  // User-level bundles delivered here, reassembled, keyed by bundle id.
  const std::map<std::string, DTNBundle>& inbox() const { return inbox_; }
  // Decrypts an inbox entry. NotFoundError for unknown ids, ConflictError
  // while fragments are still missing, IntegrityError on tampering.
  Bytes open(const std::string& bundle_id) const;

 private:
  struct Flight {
    DTNBundle bundle;
    std::string peer;
  };
  struct BroadcastCopy {
    DTNBundle bundle;
    std::string peer;
    int attempts = 0;
  };

  void emit(AgentEventKind kind, UtcTime at, const DTNBundle& b, std::string peer = {},
            long long value = 0, std::string detail = {});
  void apply(const CustodyEffect& fx, UtcTime now);
  void requeue_or_fail_broadcast(const std::string& key, UtcTime now, const std::string& reason);
  AckMessage reply(AckKind kind, const DTNBundle& b, UtcTime now, std::string reason = {}) const;
  AckMessage deliver_here(DTNBundle unit, UtcTime now);
  void enqueue_broadcast_copies(const DTNBundle& unit, UtcTime now);
  std::optional<std::string> next_hop(const DTNBundle& b, UtcTime now) const;

  std::string id_;
  std::shared_ptr<const NodeContext> ctx_;
  EventSink* sink_;
  BundleQueue queue_;
  std::map<std::string, Flight> in_flight_;
  std::deque<BroadcastCopy> bcast_out_;
  std::map<std::string, BroadcastCopy> bcast_in_flight_;  // key: bundle_id + ">" + peer
  PendingSet pending_;
  ReassemblyTable reassembly_;
  BroadcastState bstate_;
  std::map<std::string, AckKind> seen_;  // unicast units already accepted here
  std::map<std::string, DTNBundle> inbox_;
};

}  // namespace dtnsim
