#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dtnsim/time.hpp"

namespace dtnsim {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kSiderealDaySeconds = 86164.0905;

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double k) const { return {x * k, y * k, z * k}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const;
};

struct TLESet {
  std::string name;
  std::string line1;
  std::string line2;
  UtcTime epoch{};
};

// Sum of digits plus one per '-', modulo 10, over the first 68 columns.
int tle_checksum(std::string_view line);
// ParseError on wrong length, bad checksum or unparsable fields.
TLESet parse_tle(std::string name, std::string line1, std::string line2);
// Three-line file: name, line 1, line 2. A two-line file gets an empty name.
TLESet load_tle_file(const std::string& path);

struct GeodeticPosition {
  double lat = 0;       // deg
  double lon = 0;       // deg, [-180, 180)
  double alt = 0;       // km above the sphere
  double velocity = 0;  // inertial speed, km/s
  UtcTime timestamp{};
  Vec3 ecef;      // km
  Vec3 ecef_vel;  // km/s, Earth-fixed frame
};

struct GroundStation {
  std::string id;
  std::string name;
  double lat = 0;
  double lon = 0;
  double alt = 0;  // km
};

std::vector<GroundStation> default_stations();
Vec3 station_ecef(const GroundStation& s);

struct LookAngles {
  double elevation = 0;   // deg
  double azimuth = 0;     // deg, [0, 360)
  double range = 0;       // km
  double range_rate = 0;  // km/s, positive when receding
};

struct ContactWindow {
  std::string station_id;
  UtcTime aos{};
  UtcTime los{};
  double max_elevation = 0;
};

struct SyntheticOrbit {
  double period_s = 5520.0;
  double inclination_deg = 51.6;
  double altitude_km = 420.0;
  double phase_rad = 0.0;  // argument of latitude at epoch
  double raan_deg = 0.0;   // ascending node longitude at epoch (Earth-fixed)
  UtcTime epoch = make_utc(2025, 1, 1);

  void validate() const;
};

enum class PropagatorKind { Sgp4, SyntheticCircular };

struct PropagatorSpec {
  PropagatorKind kind = PropagatorKind::SyntheticCircular;
  SyntheticOrbit synthetic;
  std::optional<TLESet> tle;
};

struct StateVector {
  Vec3 r;  // km
  Vec3 v;  // km/s
};

// Near-Earth SGP4 (WGS-72). Deep-space elements are rejected.
class Sgp4 {
 public:
  explicit Sgp4(const TLESet& tle);
  // TEME state at minutes since the element epoch. DomainError when the
  // elements have decayed or diverged.
  StateVector at_minutes(double tsince) const;
  StateVector at(UtcTime t) const;
  UtcTime epoch() const { return epoch_; }

 private:
  UtcTime epoch_{};
  double bstar_, ecco_, argpo_, inclo_, mo_, no_, nodeo_;
  bool isimp_ = false;
  double aycof_, con41_, cc1_, cc4_, cc5_, d2_, d3_, d4_, delmo_, eta_, argpdot_, omgcof_,
      sinmao_, t2cof_, t3cof_, t4cof_, t5cof_, x1mth2_, x7thm1_, mdot_, nodedot_, xlcof_,
      xmcof_, nodecf_;
};

// Greenwich mean sidereal angle (IAU-82), radians in [0, 2pi).
double gmst_rad(UtcTime t);

// Inertial position of the synthetic orbit; the frame is aligned with the
// Earth-fixed frame at the orbit epoch.
StateVector synthetic_eci(const SyntheticOrbit& orbit, UtcTime t);

GeodeticPosition propagate(const PropagatorSpec& spec, UtcTime t);

LookAngles look_angles(const GroundStation& station, const GeodeticPosition& iss);
bool is_visible(const GroundStation& station, const GeodeticPosition& iss, double threshold_deg);

// 60 s scan refined by bisection to under a second. A pass already in
// progress at t0 reports its true AOS; the last pass may end after t0+horizon.
std::vector<ContactWindow> predict_passes(const PropagatorSpec& spec, const GroundStation& station,
                                          UtcTime t0, double horizon_s, double threshold_deg = 0.0);

}  // namespace dtnsim
