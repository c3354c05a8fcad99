#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dtnsim/time.hpp"

namespace dtnsim {

enum class AckKind { CustodyAck, CustodyNak, DeliveryAck };

std::string_view to_string(AckKind k);
AckKind parse_ack_kind(std::string_view text);  // ParseError

struct AckMessage {
  AckKind kind = AckKind::CustodyAck;
  std::string bundle_id;
  std::string from;
  UtcTime at{};
  std::string reason;  // NAKs only

  bool operator==(const AckMessage&) const = default;
};

struct CustodyConfig {
  double ack_timeout_s = 30.0;
  int max_retries = 5;

  void validate() const;  // ConfigError
};

struct PendingAck {
  std::string bundle_id;
  std::string expected_from;
  UtcTime sent_at{};
  UtcTime deadline{};
  int retransmit_count = 0;
};

enum class CustodyEffectKind {
  Released,     // custody moved on to the receiver
  Delivered,    // receiver was the final destination
  Retransmit,   // send again now; retransmit_count already incremented
  Failed,       // retries exhausted
  Ignored,      // unknown bundle or unexpected sender
};

struct CustodyEffect {
  CustodyEffectKind kind = CustodyEffectKind::Ignored;
  std::string bundle_id;
  std::string peer;
  int retransmit_count = 0;
};

// Outstanding custody transfers of one node. Retry counters survive
// re-registration so a bundle never exceeds 1 + max_retries attempts.
class PendingSet {
 public:
  explicit PendingSet(CustodyConfig cfg = {});

  const PendingAck& register_pending(const std::string& bundle_id, const std::string& next_hop,
                                     UtcTime now);
  CustodyEffect on_ack(const AckMessage& ack);
  // A send that failed outright (contact lost, socket error): same as a NAK.
  CustodyEffect on_send_failure(const std::string& bundle_id);
  std::vector<CustodyEffect> on_timeout(UtcTime now);
  // Forget a bundle entirely (expired, delivered elsewhere).
  void drop(const std::string& bundle_id);

  const PendingAck* find(const std::string& bundle_id) const;
  int retransmit_count(const std::string& bundle_id) const;
  std::size_t size() const { return pending_.size(); }
  const CustodyConfig& config() const { return cfg_; }

 private:
  CustodyEffect retry_or_fail(const std::string& bundle_id, const std::string& peer);

  CustodyConfig cfg_;
  std::map<std::string, PendingAck> pending_;
  std::map<std::string, int> retries_;
};

}  // namespace dtnsim
