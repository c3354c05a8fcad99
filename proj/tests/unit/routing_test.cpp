#include <gtest/gtest.h>

#include <deque>
#include <functional>
#include <random>

#include "dtnsim/error.hpp"
#include "dtnsim/routing.hpp"
#include "test_oracle.hpp"

namespace dtnsim {
namespace {

using testing::TableOracle;

const UtcTime kT0 = make_utc(2025, 1, 1);

MeshTopology line3() { return MeshTopology({"a", "b", "c"}, {{"a", "b"}, {"b", "c"}}); }

TEST(Topology, DefaultMeshIsConnectedPartialMesh) {
  const auto m = MeshTopology::default_mesh();
  EXPECT_EQ(m.stations().size(), 9u);
  EXPECT_EQ(m.edge_count(), 20u);
  EXPECT_LT(m.edge_count(), 9u * 8u / 2u);
  EXPECT_EQ(reachable(m, "sydney").size(), 9u);
  EXPECT_TRUE(m.adjacent("london", "toronto"));
  EXPECT_FALSE(m.adjacent("sydney", "toronto"));
}

TEST(Topology, RejectsBadDefinitions) {
  EXPECT_THROW(MeshTopology({"a"}, {{"a", "z"}}), ConfigError);
  EXPECT_THROW(MeshTopology({"a"}, {{"a", "a"}}), ConfigError);
  EXPECT_THROW(MeshTopology({"a", "a"}, {}), ConfigError);
  EXPECT_THROW(MeshTopology({"ISS"}, {}), ConfigError);
  EXPECT_THROW(line3().neighbors("zz"), NotFoundError);
}

TEST(SelectContact, VisibleThenEarliestThenId) {
  TableOracle o(kT0);
  o.add("x", 300, 600).add("y", 1200, 1500).add("z", -10, 10);
  EXPECT_EQ(select_contact_station({"x", "y", "z"}, kT0, o), "z");
  EXPECT_EQ(select_contact_station({"x", "y"}, kT0, o), "x");
  TableOracle tie(kT0);
  tie.add("m", 100, 200).add("k", 100, 200);
  EXPECT_EQ(select_contact_station({"m", "k"}, kT0, tie), "k");
  EXPECT_THROW(select_contact_station({"q"}, kT0, tie), NoRouteError);
  EXPECT_THROW(select_contact_station({"x"}, kT0, o, 60.0), NoRouteError);
}

TEST(SelectContact, MakingAStationVisibleNeverDelaysContact) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> ids{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 200; ++trial) {
    TableOracle before(kT0), after(kT0);
    const std::string lucky = ids[rng() % ids.size()];
    for (const auto& s : ids) {
      const double start = 1 + static_cast<double>(rng() % 5000);
      before.add(s, start, start + 480);
      after.add(s, start, start + 480);
    }
    after.add(lucky, 0, 100);
    auto contact_time = [&](const TableOracle& o) {
      const auto s = select_contact_station(ids, kT0, o);
      return *o.next_aos(s, kT0, 86400);
    };
    EXPECT_LE(contact_time(after), contact_time(before));
  }
}

TEST(Bfs, TrivialCases) {
  const auto m = line3();
  EXPECT_EQ(bfs_path(m, "a", "a").hops, (std::vector<std::string>{"a"}));
  EXPECT_EQ(bfs_path(m, "a", "b").hops, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(bfs_path(m, "a", "c").hops, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_THROW(bfs_path(m, "a", "c", {"b"}), NoRouteError);
  const MeshTopology split({"a", "b"}, {});
  EXPECT_THROW(bfs_path(split, "a", "b"), NoRouteError);
}

TEST(Bfs, RingTieBrokenLexicographically) {
  // Square ring: two equal 2-hop paths from a to c.
  const MeshTopology sq({"a", "b", "c", "d"}, {{"a", "b"}, {"b", "c"}, {"c", "d"}, {"d", "a"}});
  EXPECT_EQ(bfs_path(sq, "a", "c").hops, (std::vector<std::string>{"a", "b", "c"}));
  const MeshTopology ring5({"a", "b", "c", "d", "e"},
                           {{"a", "b"}, {"b", "c"}, {"c", "d"}, {"d", "e"}, {"e", "a"}});
  EXPECT_EQ(bfs_path(ring5, "a", "c").hops, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(bfs_path(ring5, "a", "d").hops, (std::vector<std::string>{"a", "e", "d"}));
}

TEST(Bfs, ShortestAgainstExhaustiveSearch) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 5);
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back(std::string(1, static_cast<char>('a' + i)));
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng() % 2) edges.emplace_back(ids[i], ids[j]);
    const MeshTopology m(ids, edges);
    // Exhaustive simple-path enumeration.
    std::function<void(const std::string&, const std::string&, std::vector<std::string>&, std::size_t&)>
        dfs = [&](const std::string& cur, const std::string& dst, std::vector<std::string>& path,
                  std::size_t& best) {
          if (cur == dst) {
            best = std::min(best, path.size());
            return;
          }
          for (const auto& nb : m.neighbors(cur)) {
            if (std::find(path.begin(), path.end(), nb) != path.end()) continue;
            path.push_back(nb);
            dfs(nb, dst, path, best);
            path.pop_back();
          }
        };
    for (const auto& s : ids) {
      for (const auto& d : ids) {
        std::size_t best = SIZE_MAX;
        std::vector<std::string> path{s};
        dfs(s, d, path, best);
        if (best == SIZE_MAX) {
          EXPECT_THROW(bfs_path(m, s, d), NoRouteError);
          continue;
        }
        const auto r = bfs_path(m, s, d).hops;
        ASSERT_EQ(r.size(), best);
        for (std::size_t i = 1; i < r.size(); ++i) EXPECT_TRUE(m.adjacent(r[i - 1], r[i]));
        std::set<std::string> uniq(r.begin(), r.end());
        EXPECT_EQ(uniq.size(), r.size());
      }
    }
  }
}

TEST(IssRoutes, ToAndFrom) {
  const auto m = line3();
  TableOracle o(kT0);
  o.add("c", 0, 480).add("a", 1000, 1480);
  EXPECT_EQ(route_to_iss(m, "a", kT0, o).hops, (std::vector<std::string>{"a", "b", "c", "ISS"}));
  EXPECT_EQ(route_to_iss(m, "c", kT0, o).hops, (std::vector<std::string>{"c", "ISS"}));
  EXPECT_EQ(route_from_iss(m, "c", kT0, o).hops, (std::vector<std::string>{"ISS", "c"}));
  EXPECT_EQ(route_from_iss(m, "a", kT0, o).hops, (std::vector<std::string>{"ISS", "c", "b", "a"}));
  // Once c's window has passed, a is the earliest contact.
  EXPECT_EQ(route_to_iss(m, "b", add_seconds(kT0, 500), o).hops,
            (std::vector<std::string>{"b", "a", "ISS"}));
  // Avoiding a visited node removes it from the candidates.
  EXPECT_EQ(route_to_iss(m, "b", kT0, o, 86400, {"c"}).hops,
            (std::vector<std::string>{"b", "a", "ISS"}));
  TableOracle none(kT0);
  EXPECT_THROW(route_to_iss(m, "a", kT0, none), NoRouteError);
}

TEST(IssRoutes, EqualContactPrefersFewerHops) {
  const auto m = line3();
  TableOracle o(kT0);
  o.add("a", 100, 200).add("c", 100, 200);
  EXPECT_EQ(route_to_iss(m, "b", kT0, o).hops, (std::vector<std::string>{"b", "a", "ISS"}));
  EXPECT_EQ(route_to_iss(m, "c", kT0, o).hops, (std::vector<std::string>{"c", "ISS"}));
}

DTNBundle broadcast_from(const std::string& src) {
  DTNBundle b;
  b.bundle_id = "bc-1";
  b.source = Endpoint(src);
  b.destination = Endpoint(std::string(kBroadcast));
  b.hop_list = {src};
  return b;
}

TEST(Flood, FullMeshProcessesEachNodeOnce) {
  const MeshTopology m({"a", "b", "c", "d"},
                       {{"a", "b"}, {"a", "c"}, {"a", "d"}, {"b", "c"}, {"b", "d"}, {"c", "d"}});
  BroadcastState st;
  std::map<std::string, int> processed;
  std::deque<std::pair<std::string, DTNBundle>> work{{"a", broadcast_from("a")}};
  int events = 0;
  while (!work.empty()) {
    auto [at, b] = work.front();
    work.pop_front();
    ++events;
    const bool first = !st.seen(at, b.bundle_id);
    const auto next = flood(b, m, st, at);
    if (first) ++processed[at];
    for (const auto& n : next) {
      DTNBundle copy = b;
      copy.hop_list.push_back(n);
      work.emplace_back(n, copy);
    }
  }
  for (const auto& s : m.stations()) EXPECT_EQ(processed[s], 1) << s;
  EXPECT_TRUE(flood(broadcast_from("a"), m, st, "a").empty());
}

TEST(Flood, IsolatedNodeNeverReceives) {
  const MeshTopology m({"a", "b", "z"}, {{"a", "b"}});
  BroadcastState st;
  EXPECT_EQ(flood(broadcast_from("a"), m, st, "a"), std::vector<std::string>{"b"});
  DTNBundle at_b = broadcast_from("a");
  at_b.hop_list.push_back("b");
  EXPECT_TRUE(flood(at_b, m, st, "b").empty());
  EXPECT_FALSE(st.seen("z", "bc-1"));
}

}  // namespace
}  // namespace dtnsim
