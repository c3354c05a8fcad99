#include <gtest/gtest.h>
#include <httplib.h>
#include <sys/socket.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <filesystem>
#include <future>

#include "dtnsim/api.hpp"
#include "dtnsim/error.hpp"
#include "dtnsim/scenario.hpp"

using namespace dtnsim;
using json = nlohmann::json;
namespace fs = std::filesystem;
namespace beast = boost::beast;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

namespace {

const UtcTime kStart = make_utc(2025, 1, 1);

ApiOptions ephemeral(double hz = 1.0) {
  ApiOptions o;
  o.port = 0;
  o.telemetry_hz = hz;
  return o;
}

json post_body(const std::string& message, const std::string& source, const std::string& destination) {
  return json{{"message", message}, {"source", source}, {"destination", destination}};
}

// Steps the engine until `done` holds or the virtual limit passes.
void advance(SimRuntime& rt, double limit_s, const std::function<bool(Engine&)>& done) {
  rt.with_engine([&](Engine& e) {
    const UtcTime stop = add_seconds(e.now(), limit_s);
    while (e.now() < stop && !done(e)) e.step();
  });
}

struct WsClient {
  asio::io_context ioc;
  beast::websocket::stream<tcp::socket> ws{ioc};

  explicit WsClient(unsigned short port, int rcvbuf = 0) {
    auto& sock = ws.next_layer();
    sock.open(tcp::v4());
    if (rcvbuf > 0) {
      sock.set_option(asio::socket_base::receive_buffer_size(rcvbuf));
    }
    sock.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
    ws.handshake("127.0.0.1", "/telemetry");
  }

  // nullopt when nothing arrives in time (the socket is then shut down).
  std::optional<json> next(double timeout_s) {
    auto fut = std::async(std::launch::async, [this] {
      beast::flat_buffer b;
      beast::error_code ec;
      ws.read(b, ec);
      if (ec) return std::optional<json>();
      return std::optional<json>(json::parse(beast::buffers_to_string(b.data())));
    });
    if (fut.wait_for(std::chrono::duration<double>(timeout_s)) != std::future_status::ready) {
      ::shutdown(ws.next_layer().native_handle(), SHUT_RDWR);
      fut.wait();
      return std::nullopt;
    }
    return fut.get();
  }
};

class ApiTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("dtnsim-api-" + std::to_string(::getpid()) + "-" +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
};

}  // namespace

TEST_F(ApiTest, CreateBundleReturnsQueuedSummary) {
  SimRuntime rt(NetworkConfig{}, kStart);
  ApiServer api(rt, nullptr, ephemeral());
  auto r = api.handle("POST", "/bundles", post_body("hello ISS", "toronto", "ISS").dump());
  ASSERT_EQ(r.status, 201) << r.body.dump();
  EXPECT_EQ(r.body["status"], "QUEUED");
  EXPECT_EQ(r.body["source"], "toronto");
  EXPECT_FALSE(r.body["encrypted_preview"].get<std::string>().empty());
  EXPECT_EQ(r.body["encrypted_bytes"], encrypted_size(9));
  ASSERT_FALSE(r.body["route"].empty());
  EXPECT_EQ(r.body["route"].front(), "toronto");
  EXPECT_EQ(r.body["route"].back(), "ISS");
  EXPECT_FALSE(r.body["flood"].get<bool>());

  json exp = post_body("urgent", "tokyo", "london");
  exp["priority"] = "expedited";
  exp["custody"] = false;
  exp["ttl_s"] = 600;
  r = api.handle("POST", "/bundles", exp.dump());
  ASSERT_EQ(r.status, 201) << r.body.dump();
  EXPECT_EQ(r.body["priority"], "EXPEDITED");
  EXPECT_FALSE(r.body["custody"].get<bool>());
  EXPECT_DOUBLE_EQ(r.body["ttl_s"].get<double>(), 600);
}

TEST_F(ApiTest, CreateBundleValidation) {
  SimRuntime rt(NetworkConfig{}, kStart);
  ApiServer api(rt, nullptr, ephemeral());
  EXPECT_EQ(api.handle("POST", "/bundles", post_body("x", "atlantis", "ISS").dump()).status, 400);
  EXPECT_EQ(api.handle("POST", "/bundles", post_body("x", "toronto", "atlantis").dump()).status, 400);
  EXPECT_EQ(api.handle("POST", "/bundles", post_body("", "toronto", "ISS").dump()).status, 400);
  EXPECT_EQ(api.handle("POST", "/bundles", post_body("x", "toronto", "toronto").dump()).status, 400);
  EXPECT_EQ(api.handle("POST", "/bundles", post_body("x", "ISS", "toronto").dump()).status, 400);
  EXPECT_EQ(api.handle("POST", "/bundles", "not json").status, 400);
  json bad = post_body("x", "toronto", "ISS");
  bad["priority"] = "URGENT";
  EXPECT_EQ(api.handle("POST", "/bundles", bad.dump()).status, 400);
  bad = post_body("x", "toronto", "ISS");
  bad["ttl_s"] = -1;
  EXPECT_EQ(api.handle("POST", "/bundles", bad.dump()).status, 400);
  EXPECT_EQ(rt.tracker().size(), 0u);
}

TEST_F(ApiTest, BroadcastIndicatesFlood) {
  SimRuntime rt(NetworkConfig{}, kStart);
  ApiServer api(rt, nullptr, ephemeral());
  for (const char* dst : {"*", "broadcast"}) {
    const auto r = api.handle("POST", "/bundles", post_body("all hands", "toronto", dst).dump());
    ASSERT_EQ(r.status, 201) << r.body.dump();
    EXPECT_TRUE(r.body["flood"].get<bool>());
    EXPECT_EQ(r.body["destination"], "*");
  }
}

TEST_F(ApiTest, DeliveredQueryAfterE1ComesFromTheStore) {
  Store store((dir_ / "e1.db").string());
  const ScenarioResult res = run_scenario(e1_profile(), RunHooks{[&](Engine& e) { attach_store(store, e); }});
  ASSERT_EQ(res.metrics.delivered, 20u);

  SimRuntime rt(NetworkConfig{}, kStart);
  ApiServer api(rt, &store, ephemeral());
  auto r = api.handle("GET", "/bundles?status=DELIVERED", "");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body.size(), 20u);
  for (const auto& b : r.body) {
    EXPECT_EQ(b["status"], "DELIVERED");
    EXPECT_EQ(b["destination"], "ISS");
    EXPECT_TRUE(b["delivered_at"].is_string());
  }
  EXPECT_EQ(api.handle("GET", "/bundles?status=FAILED", "").body.size(), 0u);
  EXPECT_EQ(api.handle("GET", "/bundles", "").body.size(), 20u);
  EXPECT_EQ(api.handle("GET", "/bundles?status=LOST", "").status, 400);
}

TEST_F(ApiTest, ReadOnlyEndpoints) {
  SimRuntime rt(NetworkConfig{}, kStart);
  ApiServer api(rt, nullptr, ephemeral());

  auto st = api.handle("GET", "/stations", "");
  ASSERT_EQ(st.status, 200);
  ASSERT_EQ(st.body.size(), 9u);
  EXPECT_TRUE(st.body[0].contains("link"));
  EXPECT_TRUE(st.body[0].contains("visible"));

  auto iss = api.handle("GET", "/iss/state", "");
  ASSERT_EQ(iss.status, 200);
  const GeodeticPosition p = propagate(NetworkConfig{}.schedule.propagator, kStart);
  EXPECT_NEAR(iss.body["lat"].get<double>(), p.lat, 1e-9);
  EXPECT_NEAR(iss.body["lon"].get<double>(), p.lon, 1e-9);
  EXPECT_NEAR(iss.body["alt"].get<double>(), p.alt, 1e-9);

  auto passes = api.handle("GET", "/passes?station=tokyo&hours=12", "");
  ASSERT_EQ(passes.status, 200);
  const auto& w = passes.body["windows"];
  ASSERT_GE(w.size(), 7u);
  for (std::size_t i = 1; i < w.size(); ++i) {
    EXPECT_LT(parse_iso8601(w[i - 1]["aos"].get<std::string>()), parse_iso8601(w[i]["aos"].get<std::string>()));
  }
  EXPECT_EQ(api.handle("GET", "/passes?station=atlantis", "").status, 404);
  EXPECT_EQ(api.handle("GET", "/passes", "").status, 400);
  EXPECT_EQ(api.handle("GET", "/passes?station=tokyo&hours=abc", "").status, 400);
  EXPECT_EQ(api.handle("GET", "/nowhere", "").status, 404);
  EXPECT_EQ(api.handle("DELETE", "/bundles", "").status, 405);
  EXPECT_EQ(api.handle("GET", "/bundles/none", "").status, 404);
}

TEST_F(ApiTest, DecryptConflictsUntilReassembledThenRoundTrips) {
  NetworkConfig net;
  net.fragment_policy = FragmentPolicy{2048, 1024};
  SimRuntime rt(net, kStart);
  ApiServer api(rt, nullptr, ephemeral());
  const std::string first = net.station_ids().front();  // in contact at the start
  std::string message(16384, ' ');
  for (std::size_t i = 0; i < message.size(); ++i) message[i] = static_cast<char>('a' + i % 26);
  const auto created = api.handle("POST", "/bundles", post_body(message, first, "ISS").dump());
  ASSERT_EQ(created.status, 201);
  const std::string id = created.body["bundle_id"];

  EXPECT_EQ(api.handle("POST", "/iss/decrypt", json{{"bundle_id", id}}.dump()).status, 404);
  advance(rt, 300, [&](Engine& e) {
    auto v = inbox_view(e.agent("ISS"));
    return !v.empty() && v[0].received >= 3;
  });
  auto inbox = api.handle("GET", "/iss/inbox", "");
  ASSERT_EQ(inbox.body.size(), 1u);
  EXPECT_FALSE(inbox.body[0]["complete"].get<bool>());
  EXPECT_EQ(inbox.body[0]["total"], 22);
  EXPECT_EQ(api.handle("POST", "/iss/decrypt", json{{"bundle_id", id}}.dump()).status, 409);

  advance(rt, 300, [&](Engine& e) { return e.agent("ISS").inbox().contains(id); });
  inbox = api.handle("GET", "/iss/inbox", "");
  ASSERT_EQ(inbox.body.size(), 1u);
  EXPECT_TRUE(inbox.body[0]["complete"].get<bool>());
  const auto dec = api.handle("POST", "/iss/decrypt", json{{"bundle_id", id}}.dump());
  ASSERT_EQ(dec.status, 200) << dec.body.dump();
  EXPECT_EQ(dec.body["plaintext"], message);
  EXPECT_EQ(api.handle("POST", "/iss/decrypt", "{}").status, 400);
}

TEST_F(ApiTest, RelayCreatesIssSourcedBundle) {
  SimRuntime rt(NetworkConfig{}, kStart);
  ApiServer api(rt, nullptr, ephemeral());
  const auto r = api.handle("POST", "/iss/relay", json{{"message", "reply"}, {"destination", "london"}}.dump());
  ASSERT_EQ(r.status, 201) << r.body.dump();
  EXPECT_EQ(r.body["source"], "ISS");
  EXPECT_EQ(r.body["destination"], "london");
  ASSERT_FALSE(r.body["route"].empty());
  EXPECT_EQ(r.body["route"].front(), "ISS");
  EXPECT_EQ(r.body["route"].back(), "london");
  EXPECT_EQ(api.handle("POST", "/iss/relay", json{{"message", "x"}, {"destination", "ISS"}}.dump()).status, 400);
  EXPECT_EQ(api.handle("POST", "/iss/relay", json{{"message", "x"}, {"destination", "*"}}.dump()).status, 400);

  advance(rt, 6000, [&](Engine& e) { return e.agent("london").inbox().contains(r.body["bundle_id"]); });
  const Bytes plain = rt.open("london", r.body["bundle_id"]);
  EXPECT_EQ(std::string(plain.begin(), plain.end()), "reply");
}

TEST_F(ApiTest, ServesHttpOverLoopback) {
  SimRuntime rt(NetworkConfig{}, kStart, 10.0);
  ApiServer api(rt, nullptr, ephemeral());
  rt.start();
  api.start();
  httplib::Client cli("127.0.0.1", api.port());
  cli.set_read_timeout(5, 0);
  auto h = cli.Get("/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);
  EXPECT_EQ(json::parse(h->body)["mode"], "sim");
  EXPECT_EQ(h->get_header_value("Access-Control-Allow-Origin"), "*");

  auto c = cli.Post("/bundles", post_body("over the wire", "toronto", "ISS").dump(), "application/json");
  ASSERT_TRUE(c);
  EXPECT_EQ(c->status, 201);
  const std::string id = json::parse(c->body)["bundle_id"];
  auto g = cli.Get(("/bundles/" + id).c_str());
  ASSERT_TRUE(g);
  EXPECT_EQ(g->status, 200);
  auto bad = cli.Post("/bundles", "{", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  auto missing = cli.Get("/passes?station=atlantis");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  api.stop();
  rt.stop();
}

TEST_F(ApiTest, TelemetryReachesEveryClientAtCadence) {
  SimRuntime rt(NetworkConfig{}, kStart);
  ApiServer api(rt, nullptr, ephemeral(2.0));
  api.start();
  rt.start();
  WsClient a(api.port());
  WsClient b(api.port());
  const auto t0 = std::chrono::steady_clock::now();
  auto first = a.next(2.0);
  ASSERT_TRUE(first) << "no tick within 2 s";
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 2.0);
  EXPECT_EQ((*first)["type"], "telemetry");
  EXPECT_EQ((*first)["stations"].size(), 9u);
  EXPECT_TRUE((*first)["iss"].contains("lat"));

  // Same seq, same document on both clients.
  std::map<std::uint64_t, json> seen_a{{(*first)["seq"].get<std::uint64_t>(), *first}};
  std::uint64_t last_seq = (*first)["seq"];
  UtcTime last_ts = parse_iso8601((*first)["timestamp"].get<std::string>());
  auto prev = std::chrono::steady_clock::now();
  for (int i = 0; i < 3; ++i) {
    auto t = a.next(2.0);
    ASSERT_TRUE(t);
    const auto now = std::chrono::steady_clock::now();
    EXPECT_NEAR(std::chrono::duration<double>(now - prev).count(), 0.5, 0.5);
    prev = now;
    EXPECT_GT((*t)["seq"].get<std::uint64_t>(), last_seq);
    const UtcTime ts = parse_iso8601((*t)["timestamp"].get<std::string>());
    EXPECT_GE(ts, last_ts);
    last_seq = (*t)["seq"];
    last_ts = ts;
    seen_a[last_seq] = *t;
  }
  int matched = 0;
  for (int i = 0; i < 6; ++i) {
    auto t = b.next(2.0);
    ASSERT_TRUE(t);
    if (auto it = seen_a.find((*t)["seq"]); it != seen_a.end()) {
      EXPECT_EQ(it->second, *t);
      ++matched;
    }
  }
  EXPECT_GE(matched, 3);
  EXPECT_EQ(api.clients(), 2u);
  api.stop();
  rt.stop();
}

TEST_F(ApiTest, StalledTelemetryClientIsDropped) {
  SimRuntime rt(NetworkConfig{}, kStart);
  ApiOptions o = ephemeral(50.0);
  o.client_buffer = 4;
  ApiServer api(rt, nullptr, o);
  api.start();
  rt.start();
  WsClient healthy(api.port());
  WsClient stalled(api.port(), 2048);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(20);
  while (api.dropped() == 0 && std::chrono::steady_clock::now() < deadline) {
    ASSERT_TRUE(healthy.next(2.0));  // keeps reading
  }
  EXPECT_EQ(api.dropped(), 1u);
  EXPECT_TRUE(healthy.next(2.0)) << "healthy client must keep receiving";
  EXPECT_EQ(api.clients(), 1u);
  api.stop();
  rt.stop();
}

TEST(Env, OverridesServiceSettings) {
  std::map<std::string, std::string> env{{"DTNSIM_MODE", "emu"},
                                         {"DTNSIM_LISTEN", "0.0.0.0:9090"},
                                         {"DTNSIM_STORE", "/tmp/x.db"},
                                         {"DTNSIM_SEED", "7"},
                                         {"DTNSIM_SPEEDUP", "60"}};
  auto lookup = [&](const char* k) -> std::optional<std::string> {
    auto it = env.find(k);
    if (it == env.end()) return std::nullopt;
    return it->second;
  };
  AppConfig cfg;
  apply_env(cfg, lookup);
  EXPECT_EQ(cfg.service.mode, "emu");
  EXPECT_EQ(cfg.service.listen, "0.0.0.0");
  EXPECT_EQ(cfg.service.port, 9090);
  EXPECT_EQ(cfg.service.store_path, "/tmp/x.db");
  EXPECT_EQ(cfg.service.seed, 7u);
  EXPECT_DOUBLE_EQ(cfg.service.speedup, 60);

  env["DTNSIM_TLE"] = std::string(DTNSIM_SOURCE_DIR) + "/config/iss.tle";
  apply_env(cfg, lookup);
  EXPECT_EQ(cfg.network.schedule.propagator.kind, PropagatorKind::Sgp4);

  for (auto [k, v] : std::vector<std::pair<std::string, std::string>>{{"DTNSIM_MODE", "mininet"},
                                                                       {"DTNSIM_PORT", "70000"},
                                                                       {"DTNSIM_SEED", "seven"},
                                                                       {"DTNSIM_SPEEDUP", "0"},
                                                                       {"DTNSIM_TLE", "/nonexistent"}}) {
    auto bad = env;
    bad.erase("DTNSIM_TLE");
    bad[k] = v;
    AppConfig c;
    EXPECT_THROW(apply_env(c,
                           [&](const char* key) -> std::optional<std::string> {
                             auto it = bad.find(key);
                             if (it == bad.end()) return std::nullopt;
                             return it->second;
                           }),
                 ConfigError)
        << k;
  }
}

TEST(EmuRuntime, ServesTheSameSurface) {
  EmulationConfig emu;
  emu.base_port = 0;
  EmuRuntime rt(NetworkConfig{}, emu, 42);
  ApiServer api(rt, nullptr, ephemeral(4.0));
  rt.start();
  api.start();
  const auto r = api.handle("POST", "/bundles", post_body("via sockets", "toronto", "ISS").dump());
  ASSERT_EQ(r.status, 201) << r.body.dump();
  const std::string id = r.body["bundle_id"];
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  HttpResponse dec;
  do {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    dec = api.handle("POST", "/iss/decrypt", json{{"bundle_id", id}}.dump());
  } while (dec.status != 200 && std::chrono::steady_clock::now() < deadline);
  ASSERT_EQ(dec.status, 200) << dec.body.dump();
  EXPECT_EQ(dec.body["plaintext"], "via sockets");
  EXPECT_EQ(api.handle("GET", "/health", "").body["mode"], "emu");
  EXPECT_EQ(api.handle("GET", "/bundles?status=DELIVERED", "").body.size(), 1u);
  const auto passes = api.handle("GET", "/passes?station=toronto&hours=1", "");
  ASSERT_EQ(passes.status, 200);
  EXPECT_GE(passes.body["windows"].size(), 12u);  // 120 s up every 300 s
  api.stop();
  rt.stop();
}
