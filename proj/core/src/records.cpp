#include "dtnsim/records.hpp"

#include "dtnsim/error.hpp"

namespace dtnsim {

std::string_view to_string(TxOutcome o) {
  switch (o) {
    case TxOutcome::Ok: return "ok";
    case TxOutcome::Timeout: return "timeout";
    case TxOutcome::Nak: return "nak";
    case TxOutcome::Failed: return "failed";
  }
  return "?";
}

TxOutcome parse_tx_outcome(std::string_view text) {
  if (text == "ok") return TxOutcome::Ok;
  if (text == "timeout") return TxOutcome::Timeout;
  if (text == "nak") return TxOutcome::Nak;
  if (text == "failed") return TxOutcome::Failed;
  throw ParseError("unknown transmission outcome: " + std::string(text));
}

}  // namespace dtnsim
