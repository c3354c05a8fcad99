#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dtnsim/bundle.hpp"
#include "dtnsim/custody.hpp"
#include "dtnsim/records.hpp"

namespace dtnsim {

class Engine;
class Tracker;

struct BundleRecord {
  DTNBundle bundle;
  std::optional<UtcTime> delivered_at;
  std::vector<std::string> route;  // planned path when known

  bool operator==(const BundleRecord&) const = default;
};

struct SchemaVersion {
  int version = 0;
  UtcTime applied_at{};
};

struct AckRecord {
  std::string bundle_id;
  AckKind kind = AckKind::CustodyAck;
  std::string from;
  std::string to;
  UtcTime at{};
  std::string reason;

  bool operator==(const AckRecord&) const = default;
};

struct StoreFilter {
  std::optional<BundleStatus> status;
  std::optional<std::string> endpoint;  // matches source or destination
  std::optional<UtcTime> created_from;  // inclusive
  std::optional<UtcTime> created_to;    // exclusive
  std::optional<std::size_t> limit;
};

// SQLite-backed bundle store. Every call opens its own connection; writes are
// serialized by a process-wide lock per store object, reads run concurrently.
class Store {
 public:
  static constexpr int kLatestVersion = 3;

  // Opens (creating if needed) and migrates. A file that fails to open as a
  // database is moved aside with a timestamp suffix and recreated.
  explicit Store(std::string path);

  const std::string& path() const { return path_; }
  // Where a corrupt file was moved on open, if that happened.
  const std::optional<std::string>& recovered_from() const { return recovered_from_; }

  SchemaVersion migrate();
  int version() const;
  std::vector<SchemaVersion> schema_history() const;

  void persist_bundle(const BundleRecord& record);
  BundleRecord load_bundle(const std::string& bundle_id) const;  // NotFoundError
  std::optional<BundleRecord> find_bundle(const std::string& bundle_id) const;
  void update_status(const std::string& bundle_id, BundleStatus status,
                     std::optional<UtcTime> delivered_at = std::nullopt);
  // Status change and its transmission record in one transaction.
  void record_outcome(const std::string& bundle_id, BundleStatus status, const TransmissionRecord& tx);

  void record_transmission(const TransmissionRecord& tx);
  void record_ack(const AckRecord& ack);

  std::vector<BundleRecord> history_query(const StoreFilter& filter = {}) const;
  std::vector<TransmissionRecord> transmissions(const std::optional<std::string>& bundle_id = {}) const;
  std::vector<AckRecord> acks(const std::optional<std::string>& bundle_id = {}) const;
  std::size_t bundle_count() const;

  // One CSV file per table in `dir`; returns the paths written.
  std::vector<std::string> export_csv(const std::string& dir) const;
  // Consistent online copy to `dest`.
  void backup(const std::string& dest) const;

 private:
  void open_or_recover();

  std::string path_;
  std::optional<std::string> recovered_from_;
  mutable std::mutex write_mu_;
};

// Bundle lifecycle and ACKs from the tracker, as they happen.
void attach_store(Store& store, Tracker& tracker);
// The same plus every transmission of a running engine.
void attach_store(Store& store, Engine& engine);

}  // namespace dtnsim
