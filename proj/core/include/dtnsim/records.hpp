#pragma once

#include <optional>
#include <string>

#include "dtnsim/time.hpp"

namespace dtnsim {

enum class TxOutcome { Ok, Timeout, Nak, Failed };

std::string_view to_string(TxOutcome o);
TxOutcome parse_tx_outcome(std::string_view text);

// One hop-level send attempt.
struct TransmissionRecord {
  std::string bundle_id;
  std::string from;
  std::string to;
  UtcTime started_at{};
  std::optional<UtcTime> completed_at;
  TxOutcome outcome = TxOutcome::Ok;
  int attempt_number = 1;
  std::string detail;

  bool operator==(const TransmissionRecord&) const = default;
};

}  // namespace dtnsim
