#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dtnsim/bundle.hpp"

namespace dtnsim {

using Edge = std::pair<std::string, std::string>;

// Undirected ground-station mesh. Neighbour lists are kept sorted so every
// traversal is deterministic.
class MeshTopology {
 public:
  MeshTopology() = default;
  // ConfigError on unknown endpoints, self-loops or duplicate stations.
  MeshTopology(std::vector<std::string> stations, const std::vector<Edge>& edges);

  static MeshTopology default_mesh();
  static std::vector<Edge> default_edges();

  const std::vector<std::string>& stations() const { return stations_; }
  bool contains(std::string_view id) const;
  const std::vector<std::string>& neighbors(std::string_view id) const;  // NotFoundError
  bool adjacent(std::string_view a, std::string_view b) const;
  std::size_t edge_count() const;

 private:
  std::vector<std::string> stations_;
  std::map<std::string, std::vector<std::string>, std::less<>> adj_;
};

struct Route {
  std::vector<std::string> hops;
  bool flood = false;

  bool operator==(const Route&) const = default;
};

// Where and when the ISS can be reached.
class ContactOracle {
 public:
  virtual ~ContactOracle() = default;
  virtual bool visible(const std::string& station, UtcTime t) const = 0;
  // Earliest contact start at or after t (t itself when visible), within horizon.
  virtual std::optional<UtcTime> next_aos(const std::string& station, UtcTime t,
                                          double horizon_s) const = 0;
  // End of the contact in progress at t; nullopt when not visible.
  virtual std::optional<UtcTime> contact_end(const std::string& station, UtcTime t) const = 0;
};

inline constexpr double kDefaultPlanningHorizonS = 86400.0;

// Visible stations win; otherwise the earliest next AOS. Ties go to the
// smaller id. NoRouteError when nothing is reachable within the horizon.
std::string select_contact_station(const std::vector<std::string>& stations, UtcTime t,
                                   const ContactOracle& oracle,
                                   double horizon_s = kDefaultPlanningHorizonS);

// Minimum-hop path with neighbours expanded in id order. Nodes in `avoid`
// are never entered (src itself is allowed). NoRouteError when unreachable.
Route bfs_path(const MeshTopology& topo, const std::string& src, const std::string& dst,
               const std::set<std::string>& avoid = {});

// Stations reachable from src without entering `avoid`, src included.
std::vector<std::string> reachable(const MeshTopology& topo, const std::string& src,
                                   const std::set<std::string>& avoid = {});

// [src, ..., contact, ISS]. The contact station is chosen among stations
// reachable from src; on equal contact time the closer one (then the smaller
// id) wins.
Route route_to_iss(const MeshTopology& topo, const std::string& src, UtcTime t,
                   const ContactOracle& oracle, double horizon_s = kDefaultPlanningHorizonS,
                   const std::set<std::string>& avoid = {});

// [ISS, contact, ..., dst].
Route route_from_iss(const MeshTopology& topo, const std::string& dst, UtcTime t,
                     const ContactOracle& oracle, double horizon_s = kDefaultPlanningHorizonS);

class BroadcastState {
 public:
  bool seen(const std::string& node, const std::string& bundle_id) const;
  // Returns false when the id was already marked at this node.
  bool mark(const std::string& node, const std::string& bundle_id);

 private:
  std::map<std::string, std::set<std::string>> received_;
};

// Marks the bundle at `at` and returns the neighbours it should go to next
// (those not already on its hop list). A repeat arrival returns nothing.
std::vector<std::string> flood(const DTNBundle& bundle, const MeshTopology& topo,
                               BroadcastState& state, const std::string& at);

}  // namespace dtnsim
