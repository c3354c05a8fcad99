#include "dtnsim/routing.hpp"

#include <algorithm>
#include <deque>

#include "dtnsim/error.hpp"

namespace dtnsim {

MeshTopology::MeshTopology(std::vector<std::string> stations, const std::vector<Edge>& edges)
    : stations_(std::move(stations)) {
  std::sort(stations_.begin(), stations_.end());
  if (std::adjacent_find(stations_.begin(), stations_.end()) != stations_.end()) {
    throw ConfigError("duplicate station in topology");
  }
  for (const auto& s : stations_) {
    if (s.empty() || s == kIssNode || s == kBroadcast) throw ConfigError("invalid station id '" + s + "'");
    adj_[s];
  }
  for (const auto& [a, b] : edges) {
    if (!contains(a) || !contains(b)) throw ConfigError("edge " + a + "-" + b + " names an unknown station");
    if (a == b) throw ConfigError("self-loop on " + a);
    adj_[a].push_back(b);
    adj_[b].push_back(a);
  }
  for (auto& [_, n] : adj_) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
}

std::vector<Edge> MeshTopology::default_edges() {
  return {{"toronto", "london"},       {"toronto", "washington_dc"}, {"toronto", "sao_paulo"},
          {"toronto", "tokyo"},        {"toronto", "moscow"},        {"london", "washington_dc"},
          {"london", "moscow"},        {"london", "bengaluru"},      {"london", "singapore"},
          {"london", "sao_paulo"},     {"tokyo", "sydney"},          {"tokyo", "singapore"},
          {"tokyo", "moscow"},         {"tokyo", "bengaluru"},       {"sydney", "singapore"},
          {"sydney", "bengaluru"},     {"washington_dc", "sao_paulo"}, {"singapore", "bengaluru"},
          {"singapore", "moscow"},     {"bengaluru", "moscow"}};
}

MeshTopology MeshTopology::default_mesh() {
  return MeshTopology({"toronto", "london", "tokyo", "sydney", "washington_dc", "singapore",
                       "bengaluru", "sao_paulo", "moscow"},
                      default_edges());
}

bool MeshTopology::contains(std::string_view id) const { return adj_.find(id) != adj_.end(); }

const std::vector<std::string>& MeshTopology::neighbors(std::string_view id) const {
  const auto it = adj_.find(id);
  if (it == adj_.end()) throw NotFoundError("unknown station " + std::string(id));
  return it->second;
}

bool MeshTopology::adjacent(std::string_view a, std::string_view b) const {
  const auto it = adj_.find(a);
  return it != adj_.end() && std::binary_search(it->second.begin(), it->second.end(), b);
}

std::size_t MeshTopology::edge_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : adj_) n += v.size();
  return n / 2;
}

std::string select_contact_station(const std::vector<std::string>& stations, UtcTime t,
                                   const ContactOracle& oracle, double horizon_s) {
  std::optional<std::pair<UtcTime, std::string>> best;
  for (const auto& s : stations) {
    const auto aos = oracle.visible(s, t) ? std::optional<UtcTime>(t) : oracle.next_aos(s, t, horizon_s);
    if (!aos) continue;
    std::pair<UtcTime, std::string> cand{std::max(*aos, t), s};
    if (!best || cand < *best) best = std::move(cand);
  }
  if (!best) throw NoRouteError("no station has an ISS contact within the planning horizon");
  return best->second;
}

namespace {

// BFS parents from src; nodes in avoid are not expanded into.
std::map<std::string, std::string> bfs_tree(const MeshTopology& topo, const std::string& src,
                                            const std::set<std::string>& avoid) {
  std::map<std::string, std::string> parent{{src, src}};
  std::deque<std::string> frontier{src};
  while (!frontier.empty()) {
    const std::string cur = frontier.front();
    frontier.pop_front();
    for (const auto& n : topo.neighbors(cur)) {
      if (parent.contains(n) || avoid.contains(n)) continue;
      parent.emplace(n, cur);
      frontier.push_back(n);
    }
  }
  return parent;
}

std::vector<std::string> unwind(const std::map<std::string, std::string>& parent,
                                const std::string& src, std::string node) {
  std::vector<std::string> path{node};
  while (node != src) {
    node = parent.at(node);
    path.push_back(node);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace

Route bfs_path(const MeshTopology& topo, const std::string& src, const std::string& dst,
               const std::set<std::string>& avoid) {
  if (!topo.contains(src)) throw NotFoundError("unknown station " + src);
  if (!topo.contains(dst)) throw NotFoundError("unknown station " + dst);
  const auto parent = bfs_tree(topo, src, avoid);
  if (!parent.contains(dst)) throw NoRouteError("no mesh path from " + src + " to " + dst);
  return Route{unwind(parent, src, dst)};
}

std::vector<std::string> reachable(const MeshTopology& topo, const std::string& src,
                                   const std::set<std::string>& avoid) {
  if (!topo.contains(src)) throw NotFoundError("unknown station " + src);
  std::vector<std::string> out;
  for (const auto& [n, _] : bfs_tree(topo, src, avoid)) out.push_back(n);
  return out;
}

Route route_to_iss(const MeshTopology& topo, const std::string& src, UtcTime t,
                   const ContactOracle& oracle, double horizon_s,
                   const std::set<std::string>& avoid) {
  if (!topo.contains(src)) throw NotFoundError("unknown station " + src);
  const auto parent = bfs_tree(topo, src, avoid);
  // Earliest contact first, then fewest hops, then id.
  std::optional<std::tuple<UtcTime, std::size_t, std::string>> best;
  for (const auto& [s, _] : parent) {
    const auto aos = oracle.visible(s, t) ? std::optional<UtcTime>(t) : oracle.next_aos(s, t, horizon_s);
    if (!aos) continue;
    std::tuple<UtcTime, std::size_t, std::string> cand{std::max(*aos, t),
                                                       unwind(parent, src, s).size(), s};
    if (!best || cand < *best) best = std::move(cand);
  }
  if (!best) throw NoRouteError("no reachable station has an ISS contact within the horizon");
  Route r{unwind(parent, src, std::get<2>(*best))};
  r.hops.emplace_back(kIssNode);
  return r;
}

Route route_from_iss(const MeshTopology& topo, const std::string& dst, UtcTime t,
                     const ContactOracle& oracle, double horizon_s) {
  if (!topo.contains(dst)) throw NotFoundError("unknown station " + dst);
  // Only stations that can still reach dst are useful contacts.
  const auto back = bfs_tree(topo, dst, {});
  std::vector<std::string> candidates;
  for (const auto& [s, _] : back) candidates.push_back(s);
  const std::string contact = select_contact_station(candidates, t, oracle, horizon_s);
  Route r{{std::string(kIssNode)}};
  for (auto& h : bfs_path(topo, contact, dst).hops) r.hops.push_back(std::move(h));
  return r;
}

bool BroadcastState::seen(const std::string& node, const std::string& bundle_id) const {
  const auto it = received_.find(node);
  return it != received_.end() && it->second.contains(bundle_id);
}

bool BroadcastState::mark(const std::string& node, const std::string& bundle_id) {
  return received_[node].insert(bundle_id).second;
}

std::vector<std::string> flood(const DTNBundle& bundle, const MeshTopology& topo,
                               BroadcastState& state, const std::string& at) {
  if (!bundle.destination.is_broadcast()) throw ProtocolError("flood needs a broadcast bundle");
  if (!state.mark(at, bundle.bundle_id)) return {};
  std::vector<std::string> out;
  for (const auto& n : topo.neighbors(at)) {
    if (std::find(bundle.hop_list.begin(), bundle.hop_list.end(), n) == bundle.hop_list.end()) {
      out.push_back(n);
    }
  }
  return out;
}

}  // namespace dtnsim
