#include "dtnsim/store.hpp"

#include <sqlite3.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "dtnsim/engine.hpp"
#include "dtnsim/error.hpp"

namespace dtnsim {

using nlohmann::json;

namespace {

class Db {
 public:
  explicit Db(const std::string& path, bool create = true) {
    const int flags = SQLITE_OPEN_READWRITE | (create ? SQLITE_OPEN_CREATE : 0) | SQLITE_OPEN_NOMUTEX;
    const int rc = sqlite3_open_v2(path.c_str(), &db_, flags, nullptr);
    if (rc != SQLITE_OK) {
      const std::string msg = db_ ? sqlite3_errmsg(db_) : sqlite3_errstr(rc);
      sqlite3_close(db_);
      db_ = nullptr;
      throw StorageError("cannot open " + path + ": " + msg);
    }
    sqlite3_busy_timeout(db_, 10000);
  }
  ~Db() { sqlite3_close(db_); }
  Db(const Db&) = delete;
  Db& operator=(const Db&) = delete;

  void exec(const std::string& sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown error";
      sqlite3_free(err);
      throw StorageError(msg + " in: " + sql.substr(0, 80));
    }
  }
  sqlite3* get() const { return db_; }

 private:
  sqlite3* db_ = nullptr;
};

class Stmt {
 public:
  Stmt(const Db& db, const std::string& sql) : db_(db.get()) {
    if (sqlite3_prepare_v2(db_, sql.c_str(), -1, &st_, nullptr) != SQLITE_OK) {
      throw StorageError(std::string(sqlite3_errmsg(db_)) + " in: " + sql.substr(0, 80));
    }
  }
  ~Stmt() { sqlite3_finalize(st_); }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;

  Stmt& bind(int i, const std::string& v) {
    check(sqlite3_bind_text(st_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }
  Stmt& bind(int i, double v) {
    check(sqlite3_bind_double(st_, i, v));
    return *this;
  }
  Stmt& bind(int i, long long v) {
    check(sqlite3_bind_int64(st_, i, v));
    return *this;
  }
  Stmt& bind(int i, int v) { return bind(i, static_cast<long long>(v)); }
  Stmt& bind_null(int i) {
    check(sqlite3_bind_null(st_, i));
    return *this;
  }
  Stmt& bind(int i, const std::optional<std::string>& v) { return v ? bind(i, *v) : bind_null(i); }

  bool step() {
    const int rc = sqlite3_step(st_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw StorageError(sqlite3_errmsg(db_));
  }
  void run() {
    while (step()) {
    }
  }

  std::string text(int col) const {
    const auto* p = sqlite3_column_text(st_, col);
    return p ? std::string(reinterpret_cast<const char*>(p), sqlite3_column_bytes(st_, col)) : std::string();
  }
  bool is_null(int col) const { return sqlite3_column_type(st_, col) == SQLITE_NULL; }
  double real(int col) const { return sqlite3_column_double(st_, col); }
  long long integer(int col) const { return sqlite3_column_int64(st_, col); }
  int columns() const { return sqlite3_column_count(st_); }
  std::string name(int col) const { return sqlite3_column_name(st_, col); }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) throw StorageError(sqlite3_errmsg(db_));
  }
  sqlite3* db_;
  sqlite3_stmt* st_ = nullptr;
};

struct Tx {
  explicit Tx(Db& db) : db_(db) { db_.exec("BEGIN IMMEDIATE"); }
  ~Tx() {
    if (!done_) sqlite3_exec(db_.get(), "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    db_.exec("COMMIT");
    done_ = true;
  }
  Db& db_;
  bool done_ = false;
};

std::set<std::string> columns_of(const Db& db, const std::string& table) {
  std::set<std::string> cols;
  Stmt st(db, "PRAGMA table_info(" + table + ")");
  while (st.step()) cols.insert(st.text(1));
  return cols;
}

// Columns of the bundles table and the version that introduced them.
struct Column {
  const char* name;
  const char* decl;
  int since;
};
constexpr Column kBundleColumns[] = {
    {"source", "TEXT NOT NULL DEFAULT ''", 1},
    {"destination", "TEXT NOT NULL DEFAULT ''", 1},
    {"encrypted_payload", "TEXT NOT NULL DEFAULT ''", 1},
    {"payload_hash", "TEXT NOT NULL DEFAULT ''", 1},
    {"priority", "TEXT NOT NULL DEFAULT 'NORMAL'", 1},
    {"created_at", "TEXT NOT NULL DEFAULT ''", 1},
    {"ttl_s", "REAL NOT NULL DEFAULT 86400", 1},
    {"custody", "INTEGER NOT NULL DEFAULT 1", 1},
    {"hop_list", "TEXT NOT NULL DEFAULT '[]'", 1},
    {"status", "TEXT NOT NULL DEFAULT 'CREATED'", 1},
    {"security", "TEXT NOT NULL DEFAULT '{}'", 1},
    {"fragment", "TEXT", 1},
    {"delivered_at", "TEXT", 2},
    {"route", "TEXT NOT NULL DEFAULT '[]'", 2},
    {"updated_at", "TEXT", 3},
};

std::string now_iso() {
  return to_iso8601(std::chrono::time_point_cast<std::chrono::microseconds>(std::chrono::system_clock::now()));
}

json security_doc(const DTNBundle& b) { return to_document(b).at("security"); }

BundleRecord read_record(const Stmt& st) {
  // Column order matches kSelect.
  json doc;
  doc["bundle_id"] = st.text(0);
  doc["source"] = st.text(1);
  doc["destination"] = st.text(2);
  doc["encrypted_payload"] = st.text(3);
  doc["payload_hash"] = st.text(4);
  doc["priority"] = st.text(5);
  doc["created_at"] = st.text(6);
  doc["ttl_s"] = st.real(7);
  doc["custody"] = st.integer(8) != 0;
  try {
    doc["hop_list"] = json::parse(st.text(9));
    doc["status"] = st.text(10);
    doc["security"] = json::parse(st.text(11));
    if (!st.is_null(12)) doc["fragment"] = json::parse(st.text(12));
    BundleRecord r;
    r.bundle = bundle_from_document(doc);
    if (!st.is_null(13)) r.delivered_at = parse_iso8601(st.text(13));
    r.route = json::parse(st.text(14)).get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw StorageError(std::string("unreadable bundle row: ") + e.what());
  } catch (const ParseError& e) {
    throw StorageError(std::string("unreadable bundle row: ") + e.what());
  }
}

constexpr const char* kSelect =
    "SELECT bundle_id, source, destination, encrypted_payload, payload_hash, priority, created_at, ttl_s, "
    "custody, hop_list, status, security, fragment, delivered_at, route FROM bundles";

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

TransmissionRecord read_tx(const Stmt& st) {
  TransmissionRecord t;
  t.bundle_id = st.text(0);
  t.from = st.text(1);
  t.to = st.text(2);
  t.started_at = parse_iso8601(st.text(3));
  if (!st.is_null(4)) t.completed_at = parse_iso8601(st.text(4));
  t.outcome = parse_tx_outcome(st.text(5));
  t.attempt_number = static_cast<int>(st.integer(6));
  t.detail = st.text(7);
  return t;
}

void insert_tx(Db& db, const TransmissionRecord& tx) {
  if (tx.completed_at && *tx.completed_at < tx.started_at) {
    throw DomainError("transmission completes before it starts");
  }
  Stmt st(db,
          "INSERT INTO transmissions (bundle_id, from_node, to_node, started_at, completed_at, outcome, "
          "attempt_number, detail) VALUES (?,?,?,?,?,?,?,?)");
  st.bind(1, tx.bundle_id).bind(2, tx.from).bind(3, tx.to).bind(4, to_iso8601(tx.started_at));
  st.bind(5, tx.completed_at ? std::optional<std::string>(to_iso8601(*tx.completed_at)) : std::nullopt);
  st.bind(6, std::string(to_string(tx.outcome))).bind(7, tx.attempt_number).bind(8, tx.detail);
  st.run();
}

void set_status(Db& db, const std::string& id, BundleStatus status, std::optional<UtcTime> delivered_at) {
  Stmt st(db,
          "UPDATE bundles SET status = ?, delivered_at = COALESCE(?, delivered_at), updated_at = ? "
          "WHERE bundle_id = ?");
  st.bind(1, std::string(to_string(status)));
  st.bind(2, delivered_at ? std::optional<std::string>(to_iso8601(*delivered_at)) : std::nullopt);
  st.bind(3, now_iso()).bind(4, id);
  st.run();
  if (sqlite3_changes(db.get()) == 0) throw NotFoundError("no stored bundle " + id);
}

}  // namespace

Store::Store(std::string path) : path_(std::move(path)) {
  open_or_recover();
  migrate();
}

void Store::open_or_recover() {
  std::lock_guard lock(write_mu_);
  try {
    Db db(path_);
    db.exec("PRAGMA journal_mode=WAL");
    Stmt check(db, "PRAGMA quick_check");
    if (!check.step() || check.text(0) != "ok") throw StorageError("integrity check failed");
    return;
  } catch (const StorageError&) {
    if (!std::filesystem::exists(path_)) throw;
  }
  std::string stamp = now_iso();
  std::erase_if(stamp, [](char c) { return c == ':' || c == '-'; });
  const std::string aside = path_ + ".corrupt-" + stamp;
  std::filesystem::rename(path_, aside);
  for (const char* suffix : {"-wal", "-shm"}) {
    std::error_code ec;
    if (std::filesystem::exists(path_ + suffix)) std::filesystem::rename(path_ + suffix, aside + suffix, ec);
  }
  recovered_from_ = aside;
  Db db(path_);
  db.exec("PRAGMA journal_mode=WAL");
}

SchemaVersion Store::migrate() {
  std::lock_guard lock(write_mu_);
  Db db(path_);
  Tx tx(db);
  db.exec("CREATE TABLE IF NOT EXISTS schema_version (version INTEGER PRIMARY KEY, applied_at TEXT NOT NULL)");
  db.exec("CREATE TABLE IF NOT EXISTS bundles (bundle_id TEXT PRIMARY KEY)");
  const auto have = columns_of(db, "bundles");
  for (const auto& c : kBundleColumns) {
    if (!have.contains(c.name)) db.exec(std::string("ALTER TABLE bundles ADD COLUMN ") + c.name + " " + c.decl);
  }
  db.exec(
      "CREATE TABLE IF NOT EXISTS transmissions (id INTEGER PRIMARY KEY AUTOINCREMENT, bundle_id TEXT NOT NULL, "
      "from_node TEXT NOT NULL, to_node TEXT NOT NULL, started_at TEXT NOT NULL, completed_at TEXT, "
      "outcome TEXT NOT NULL, attempt_number INTEGER NOT NULL DEFAULT 1, detail TEXT NOT NULL DEFAULT '')");
  db.exec(
      "CREATE TABLE IF NOT EXISTS acks (id INTEGER PRIMARY KEY AUTOINCREMENT, bundle_id TEXT NOT NULL, "
      "kind TEXT NOT NULL, from_node TEXT NOT NULL, to_node TEXT NOT NULL, at TEXT NOT NULL, "
      "reason TEXT NOT NULL DEFAULT '')");
  db.exec("CREATE INDEX IF NOT EXISTS bundles_created ON bundles(created_at)");
  db.exec("CREATE INDEX IF NOT EXISTS tx_bundle ON transmissions(bundle_id)");

  int current = 0;
  {
    Stmt st(db, "SELECT COALESCE(MAX(version), 0) FROM schema_version");
    if (st.step()) current = static_cast<int>(st.integer(0));
  }
  if (current > kLatestVersion) throw StorageError("store schema is newer than this build");
  for (int v = current + 1; v <= kLatestVersion; ++v) {
    Stmt st(db, "INSERT INTO schema_version (version, applied_at) VALUES (?, ?)");
    st.bind(1, v).bind(2, now_iso());
    st.run();
  }
  tx.commit();
  const auto hist = schema_history();
  return hist.back();
}

int Store::version() const {
  Db db(path_);
  Stmt st(db, "SELECT COALESCE(MAX(version), 0) FROM schema_version");
  return st.step() ? static_cast<int>(st.integer(0)) : 0;
}

std::vector<SchemaVersion> Store::schema_history() const {
  Db db(path_);
  Stmt st(db, "SELECT version, applied_at FROM schema_version ORDER BY version");
  std::vector<SchemaVersion> out;
  while (st.step()) out.push_back({static_cast<int>(st.integer(0)), parse_iso8601(st.text(1))});
  return out;
}

void Store::persist_bundle(const BundleRecord& r) {
  const DTNBundle& b = r.bundle;
  std::lock_guard lock(write_mu_);
  Db db(path_);
  Stmt st(db,
          "INSERT INTO bundles (bundle_id, source, destination, encrypted_payload, payload_hash, priority, "
          "created_at, ttl_s, custody, hop_list, status, security, fragment, delivered_at, route, updated_at) "
          "VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?) ON CONFLICT(bundle_id) DO UPDATE SET "
          "source=excluded.source, destination=excluded.destination, encrypted_payload=excluded.encrypted_payload, "
          "payload_hash=excluded.payload_hash, priority=excluded.priority, created_at=excluded.created_at, "
          "ttl_s=excluded.ttl_s, custody=excluded.custody, hop_list=excluded.hop_list, status=excluded.status, "
          "security=excluded.security, fragment=excluded.fragment, delivered_at=excluded.delivered_at, "
          "route=excluded.route, updated_at=excluded.updated_at");
  const json doc = to_document(b);
  st.bind(1, b.bundle_id).bind(2, b.source.node_id).bind(3, b.destination.node_id);
  st.bind(4, b.encrypted_payload).bind(5, b.payload_hash).bind(6, std::string(to_string(b.priority)));
  st.bind(7, to_iso8601(b.created_at)).bind(8, b.ttl_s).bind(9, b.custody ? 1 : 0);
  st.bind(10, json(b.hop_list).dump()).bind(11, std::string(to_string(b.status)));
  st.bind(12, security_doc(b).dump());
  st.bind(13, doc.contains("fragment") ? std::optional<std::string>(doc.at("fragment").dump()) : std::nullopt);
  st.bind(14, r.delivered_at ? std::optional<std::string>(to_iso8601(*r.delivered_at)) : std::nullopt);
  st.bind(15, json(r.route).dump()).bind(16, now_iso());
  st.run();
}

std::optional<BundleRecord> Store::find_bundle(const std::string& id) const {
  Db db(path_);
  Stmt st(db, std::string(kSelect) + " WHERE bundle_id = ?");
  st.bind(1, id);
  if (!st.step()) return std::nullopt;
  return read_record(st);
}

BundleRecord Store::load_bundle(const std::string& id) const {
  auto r = find_bundle(id);
  if (!r) throw NotFoundError("no stored bundle " + id);
  return std::move(*r);
}

void Store::update_status(const std::string& id, BundleStatus status, std::optional<UtcTime> delivered_at) {
  std::lock_guard lock(write_mu_);
  Db db(path_);
  set_status(db, id, status, delivered_at);
}

void Store::record_outcome(const std::string& id, BundleStatus status, const TransmissionRecord& t) {
  std::lock_guard lock(write_mu_);
  Db db(path_);
  Tx tx(db);
  set_status(db, id, status, status == BundleStatus::Delivered ? t.completed_at : std::nullopt);
  insert_tx(db, t);
  tx.commit();
}

void Store::record_transmission(const TransmissionRecord& t) {
  std::lock_guard lock(write_mu_);
  Db db(path_);
  insert_tx(db, t);
}

void Store::record_ack(const AckRecord& a) {
  std::lock_guard lock(write_mu_);
  Db db(path_);
  Stmt st(db, "INSERT INTO acks (bundle_id, kind, from_node, to_node, at, reason) VALUES (?,?,?,?,?,?)");
  st.bind(1, a.bundle_id).bind(2, std::string(to_string(a.kind))).bind(3, a.from).bind(4, a.to);
  st.bind(5, to_iso8601(a.at)).bind(6, a.reason);
  st.run();
}

std::vector<BundleRecord> Store::history_query(const StoreFilter& f) const {
  std::string sql = std::string(kSelect) + " WHERE 1=1";
  if (f.status) sql += " AND status = ?";
  if (f.endpoint) sql += " AND (source = ? OR destination = ?)";
  if (f.created_from) sql += " AND created_at >= ?";
  if (f.created_to) sql += " AND created_at < ?";
  sql += " ORDER BY created_at, bundle_id";
  if (f.limit) sql += " LIMIT " + std::to_string(*f.limit);
  Db db(path_);
  Stmt st(db, sql);
  int i = 1;
  if (f.status) st.bind(i++, std::string(to_string(*f.status)));
  if (f.endpoint) {
    st.bind(i++, *f.endpoint);
    st.bind(i++, *f.endpoint);
  }
  if (f.created_from) st.bind(i++, to_iso8601(*f.created_from));
  if (f.created_to) st.bind(i++, to_iso8601(*f.created_to));
  std::vector<BundleRecord> out;
  while (st.step()) out.push_back(read_record(st));
  return out;
}

std::vector<TransmissionRecord> Store::transmissions(const std::optional<std::string>& id) const {
  Db db(path_);
  Stmt st(db, std::string("SELECT bundle_id, from_node, to_node, started_at, completed_at, outcome, "
                          "attempt_number, detail FROM transmissions") +
                  (id ? " WHERE bundle_id = ?" : "") + " ORDER BY id");
  if (id) st.bind(1, *id);
  std::vector<TransmissionRecord> out;
  while (st.step()) out.push_back(read_tx(st));
  return out;
}

std::vector<AckRecord> Store::acks(const std::optional<std::string>& id) const {
  Db db(path_);
  Stmt st(db, std::string("SELECT bundle_id, kind, from_node, to_node, at, reason FROM acks") +
                  (id ? " WHERE bundle_id = ?" : "") + " ORDER BY id");
  if (id) st.bind(1, *id);
  std::vector<AckRecord> out;
  while (st.step()) {
    out.push_back({st.text(0), parse_ack_kind(st.text(1)), st.text(2), st.text(3), parse_iso8601(st.text(4)),
                   st.text(5)});
  }
  return out;
}

std::size_t Store::bundle_count() const {
  Db db(path_);
  Stmt st(db, "SELECT COUNT(*) FROM bundles");
  st.step();
  return static_cast<std::size_t>(st.integer(0));
}

std::vector<std::string> Store::export_csv(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  Db db(path_);
  for (const char* table : {"bundles", "transmissions", "acks", "schema_version"}) {
    const std::string file = (std::filesystem::path(dir) / (std::string(table) + ".csv")).string();
    std::ofstream out(file);
    if (!out) throw StorageError("cannot write " + file);
    Stmt st(db, std::string("SELECT * FROM ") + table + " ORDER BY rowid");
    for (int c = 0; c < st.columns(); ++c) out << (c ? "," : "") << st.name(c);
    out << '\n';
    while (st.step()) {
      for (int c = 0; c < st.columns(); ++c) out << (c ? "," : "") << csv_field(st.text(c));
      out << '\n';
    }
    written.push_back(file);
  }
  return written;
}

void Store::backup(const std::string& dest) const {
  Db src(path_);
  Db dst(dest);
  sqlite3_backup* b = sqlite3_backup_init(dst.get(), "main", src.get(), "main");
  if (!b) throw StorageError(sqlite3_errmsg(dst.get()));
  sqlite3_backup_step(b, -1);
  if (sqlite3_backup_finish(b) != SQLITE_OK) throw StorageError(sqlite3_errmsg(dst.get()));
}

void attach_store(Store& store, Tracker& tracker) {
  tracker.set_observer([&store](const AgentEvent& e, const BundleTrace& t) {
    switch (e.kind) {
      case AgentEventKind::Created: {
        BundleRecord r{t.bundle, std::nullopt, {}};
        r.bundle.status = BundleStatus::Queued;
        store.persist_bundle(r);
        return;
      }
      case AgentEventKind::Delivered:
      case AgentEventKind::Failed:
      case AgentEventKind::Expired: {
        BundleRecord r{t.bundle, t.delivered_at, t.hop_list};
        r.bundle.status = t.status == BundleStatus::Queued ? BundleStatus::Queued : t.status;
        r.bundle.hop_list = t.hop_list;
        store.persist_bundle(r);
        return;
      }
      case AgentEventKind::TxStart:
        if (t.transmissions == 1) store.update_status(t.bundle_id, BundleStatus::InTransit);
        return;
      case AgentEventKind::AckReceived:
        store.record_ack({e.bundle_id, parse_ack_kind(e.detail), e.peer, e.node, e.at, {}});
        return;
      default: return;
    }
  });
}

void attach_store(Store& store, Engine& engine) {
  attach_store(store, engine.tracker());
  engine.set_transmission_observer([&store](const TransmissionRecord& tx) { store.record_transmission(tx); });
}

}  // namespace dtnsim
