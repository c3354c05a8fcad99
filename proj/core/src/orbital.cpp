#include "dtnsim/orbital.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "dtnsim/error.hpp"

namespace dtnsim {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kDeg = kPi / 180.0;
constexpr double kEarthRate = kTwoPi / kSiderealDaySeconds;  // rad/s

// WGS-72, as SGP4 expects.
constexpr double kMu = 398600.8;
constexpr double kRe = 6378.135;
constexpr double kJ2 = 0.001082616;
constexpr double kJ3 = -0.00000253881;
constexpr double kJ4 = -0.00000165597;
constexpr double kJ3oJ2 = kJ3 / kJ2;
const double kXke = 60.0 / std::sqrt(kRe * kRe * kRe / kMu);

double wrap_lon(double deg) {
  double x = std::fmod(deg + 180.0, 360.0);
  if (x < 0) x += 360.0;
  return x - 180.0;
}

Vec3 rot_z(const Vec3& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y, v.z};
}

// Earth-fixed state from an inertial one, given the Earth rotation angle.
GeodeticPosition to_geodetic(const StateVector& eci, double theta, UtcTime t) {
  const Vec3 r = rot_z(eci.r, -theta);
  // v_ecef = R(-theta) (v - w x r)
  const Vec3 w_cross_r{-kEarthRate * eci.r.y, kEarthRate * eci.r.x, 0.0};
  const Vec3 v = rot_z(eci.v - w_cross_r, -theta);
  GeodeticPosition p;
  const double rn = r.norm();
  p.lat = std::asin(r.z / rn) / kDeg;
  p.lon = wrap_lon(std::atan2(r.y, r.x) / kDeg);
  p.alt = rn - kEarthRadiusKm;
  p.velocity = eci.v.norm();
  p.timestamp = t;
  p.ecef = r;
  p.ecef_vel = v;
  return p;
}

double parse_double(std::string_view field, std::string_view what) {
  std::string s(field);
  s.erase(std::remove(s.begin(), s.end(), ' '), s.end());
  if (s.empty()) throw ParseError("TLE field " + std::string(what) + " is blank");
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) throw ParseError("TLE field " + std::string(what) + " is not a number");
  return v;
}

// "-11606-4" -> -0.11606e-4: implied leading decimal point and exponent.
double parse_implied(std::string_view field, std::string_view what) {
  std::string s(field);
  s.erase(std::remove(s.begin(), s.end(), ' '), s.end());
  if (s.empty()) return 0.0;
  double sign = 1.0;
  if (s[0] == '-' || s[0] == '+') {
    if (s[0] == '-') sign = -1.0;
    s.erase(0, 1);
  }
  const auto exp_at = s.find_first_of("+-");
  if (exp_at == std::string::npos || exp_at == 0) {
    throw ParseError("TLE field " + std::string(what) + " lacks an exponent");
  }
  const double mant = parse_double("0." + s.substr(0, exp_at), what);
  const double exp = parse_double(s.substr(exp_at), what);
  return sign * mant * std::pow(10.0, exp);
}

}  // namespace

double Vec3::norm() const { return std::sqrt(dot(*this)); }

int tle_checksum(std::string_view line) {
  int sum = 0;
  for (std::size_t i = 0; i < std::min<std::size_t>(68, line.size()); ++i) {
    const char c = line[i];
    if (c >= '0' && c <= '9') sum += c - '0';
    if (c == '-') sum += 1;
  }
  return sum % 10;
}

TLESet parse_tle(std::string name, std::string line1, std::string line2) {
  auto trim = [](std::string& s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.pop_back();
  };
  trim(name);
  trim(line1);
  trim(line2);
  for (const auto* l : {&line1, &line2}) {
    if (l->size() != 69) throw ParseError("TLE line must be 69 characters");
    const char check = (*l)[68];
    if (check < '0' || check > '9' || tle_checksum(*l) != check - '0') {
      throw ParseError("TLE checksum mismatch");
    }
  }
  if (line1[0] != '1' || line2[0] != '2') throw ParseError("TLE line numbers out of order");
  if (line1.substr(2, 5) != line2.substr(2, 5)) throw ParseError("TLE lines name different satellites");

  const int yy = static_cast<int>(parse_double(std::string_view(line1).substr(18, 2), "epoch year"));
  const double doy = parse_double(std::string_view(line1).substr(20, 12), "epoch day");
  if (doy < 1.0 || doy >= 367.0) throw ParseError("TLE epoch day out of range");
  const int year = yy < 57 ? 2000 + yy : 1900 + yy;
  TLESet t;
  t.name = std::move(name);
  t.line1 = std::move(line1);
  t.line2 = std::move(line2);
  t.epoch = add_seconds(make_utc(year, 1, 1), (doy - 1.0) * 86400.0);
  return t;
}

TLESet load_tle_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open TLE file " + path);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) {
    if (l.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(l);
  }
  if (lines.size() == 2) return parse_tle("", lines[0], lines[1]);
  if (lines.size() == 3) return parse_tle(lines[0], lines[1], lines[2]);
  throw ParseError("TLE file " + path + " must hold two or three lines");
}

std::vector<GroundStation> default_stations() {
  return {
      {"toronto", "Toronto", 43.6532, -79.3832, 0.0},
      {"london", "London", 51.5074, -0.1278, 0.0},
      {"tokyo", "Tokyo", 35.6762, 139.6503, 0.0},
      {"sydney", "Sydney", -33.8688, 151.2093, 0.0},
      {"washington_dc", "Washington DC", 38.9072, -77.0369, 0.0},
      {"singapore", "Singapore", 1.3521, 103.8198, 0.0},
      {"bengaluru", "Bengaluru", 12.9716, 77.5946, 0.0},
      {"sao_paulo", "São Paulo", -23.5505, -46.6333, 0.0},
      {"moscow", "Moscow", 55.7558, 37.6173, 0.0},
  };
}

Vec3 station_ecef(const GroundStation& s) {
  const double r = kEarthRadiusKm + s.alt;
  const double la = s.lat * kDeg, lo = s.lon * kDeg;
  return {r * std::cos(la) * std::cos(lo), r * std::cos(la) * std::sin(lo), r * std::sin(la)};
}

void SyntheticOrbit::validate() const {
  if (!(period_s > 0)) throw ConfigError("synthetic orbit period must be positive");
  if (!(altitude_km > 0)) throw ConfigError("synthetic orbit altitude must be positive");
  if (inclination_deg < 0 || inclination_deg > 180) {
    throw ConfigError("synthetic orbit inclination must lie in [0, 180]");
  }
}

StateVector synthetic_eci(const SyntheticOrbit& o, UtcTime t) {
  const double a = kEarthRadiusKm + o.altitude_km;
  const double n = kTwoPi / o.period_s;
  // Reduce elapsed time modulo the period first so t and t+period agree to
  // rounding.
  const double dt = std::fmod(seconds_between(o.epoch, t), o.period_s);
  const double u = o.phase_rad + n * dt;
  const double i = o.inclination_deg * kDeg, raan = o.raan_deg * kDeg;
  const double cu = std::cos(u), su = std::sin(u), ci = std::cos(i), si = std::sin(i);
  const double co = std::cos(raan), so = std::sin(raan);
  StateVector s;
  s.r = Vec3{co * cu - so * su * ci, so * cu + co * su * ci, su * si} * a;
  s.v = Vec3{-co * su - so * cu * ci, -so * su + co * cu * ci, cu * si} * (a * n);
  return s;
}

double gmst_rad(UtcTime t) {
  const double tut1 = (julian_date(t) - 2451545.0) / 36525.0;
  double g = -6.2e-6 * tut1 * tut1 * tut1 + 0.093104 * tut1 * tut1 +
             (876600.0 * 3600.0 + 8640184.812866) * tut1 + 67310.54841;
  g = std::fmod(g * kDeg / 240.0, kTwoPi);
  if (g < 0) g += kTwoPi;
  return g;
}

GeodeticPosition propagate(const PropagatorSpec& spec, UtcTime t) {
  if (spec.kind == PropagatorKind::SyntheticCircular) {
    const double theta = kEarthRate * seconds_between(spec.synthetic.epoch, t);
    return to_geodetic(synthetic_eci(spec.synthetic, t), theta, t);
  }
  if (!spec.tle) throw ConfigError("SGP4 propagation needs a TLE");
  const Sgp4 model(*spec.tle);
  return to_geodetic(model.at(t), gmst_rad(t), t);
}

LookAngles look_angles(const GroundStation& station, const GeodeticPosition& iss) {
  const Vec3 s = station_ecef(station);
  const Vec3 rho = iss.ecef - s;
  const double range = rho.norm();
  const double la = station.lat * kDeg, lo = station.lon * kDeg;
  const Vec3 up{std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo), std::sin(la)};
  const Vec3 east{-std::sin(lo), std::cos(lo), 0.0};
  const Vec3 north{-std::sin(la) * std::cos(lo), -std::sin(la) * std::sin(lo), std::cos(la)};
  LookAngles a;
  a.range = range;
  a.elevation = std::asin(std::clamp(rho.dot(up) / range, -1.0, 1.0)) / kDeg;
  double az = std::atan2(rho.dot(east), rho.dot(north)) / kDeg;
  if (az < 0) az += 360.0;
  if (az >= 360.0) az -= 360.0;
  a.azimuth = az;
  a.range_rate = rho.dot(iss.ecef_vel) / range;
  return a;
}

bool is_visible(const GroundStation& station, const GeodeticPosition& iss, double threshold_deg) {
  return look_angles(station, iss).elevation >= threshold_deg;
}

std::vector<ContactWindow> predict_passes(const PropagatorSpec& spec, const GroundStation& station,
                                          UtcTime t0, double horizon_s, double threshold_deg) {
  if (!(horizon_s > 0)) throw DomainError("pass prediction horizon must be positive");
  std::optional<Sgp4> model;
  if (spec.kind == PropagatorKind::Sgp4) {
    if (!spec.tle) throw ConfigError("SGP4 propagation needs a TLE");
    model.emplace(*spec.tle);
  }
  auto elev = [&](UtcTime t) {
    const GeodeticPosition p =
        model ? to_geodetic(model->at(t), gmst_rad(t), t) : propagate(spec, t);
    return look_angles(station, p).elevation;
  };
  auto up = [&](UtcTime t) { return elev(t) >= threshold_deg; };
  // Returns the first visible instant in (lo, hi] given up(lo) != up(hi);
  // "rising" selects which side is visible.
  auto refine = [&](UtcTime lo, UtcTime hi, bool rising) {
    while (seconds_between(lo, hi) > 0.5) {
      const UtcTime mid = lo + (hi - lo) / 2;
      if (up(mid) == rising) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return rising ? hi : lo;
  };

  constexpr double kStep = 60.0;
  const UtcTime end = add_seconds(t0, horizon_s);
  std::vector<ContactWindow> out;
  UtcTime t = t0;
  bool cur = up(t);
  UtcTime aos = t0;
  if (cur) {
    UtcTime back = t0;
    for (int i = 0; i < 60 && up(back); ++i) back = add_seconds(back, -kStep);
    aos = up(back) ? back : refine(back, add_seconds(back, kStep), true);
  }
  while (true) {
    const UtcTime next = add_seconds(t, kStep);
    const bool nu = up(next);
    if (!cur && nu) {
      const UtcTime a = refine(t, next, true);
      if (a > end) break;
      aos = a;
    } else if (cur && !nu) {
      const UtcTime los = refine(t, next, false);
      // Golden-section search for the culmination.
      double lo = 0, hi = seconds_between(aos, los);
      const double g = (std::sqrt(5.0) - 1.0) / 2.0;
      double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
      double f1 = elev(add_seconds(aos, x1)), f2 = elev(add_seconds(aos, x2));
      while (hi - lo > 1e-3) {
        if (f1 < f2) {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + g * (hi - lo);
          f2 = elev(add_seconds(aos, x2));
        } else {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - g * (hi - lo);
          f1 = elev(add_seconds(aos, x1));
        }
      }
      out.push_back({station.id, aos, los, std::max(f1, f2)});
    }
    t = next;
    cur = nu;
    if (!cur && t >= end) break;
    if (seconds_between(end, t) > 86400.0) break;  // never sets (e.g. geostationary)
  }
  return out;
}

// --- SGP4 -------------------------------------------------------------------

Sgp4::Sgp4(const TLESet& tle) {
  const std::string_view l1 = tle.line1, l2 = tle.line2;
  epoch_ = tle.epoch;
  bstar_ = parse_implied(l1.substr(53, 8), "bstar");
  inclo_ = parse_double(l2.substr(8, 8), "inclination") * kDeg;
  nodeo_ = parse_double(l2.substr(17, 8), "raan") * kDeg;
  ecco_ = parse_double("0." + std::string(l2.substr(26, 7)), "eccentricity");
  argpo_ = parse_double(l2.substr(34, 8), "argument of perigee") * kDeg;
  mo_ = parse_double(l2.substr(43, 8), "mean anomaly") * kDeg;
  const double no_kozai = parse_double(l2.substr(52, 11), "mean motion") / (1440.0 / kTwoPi);
  if (!(no_kozai > 0)) throw ParseError("TLE mean motion must be positive");

  // Recover the original mean motion and semi-major axis.
  const double ak = std::pow(kXke / no_kozai, 2.0 / 3.0);
  const double eccsq = ecco_ * ecco_;
  const double omeosq = 1.0 - eccsq;
  const double rteosq = std::sqrt(omeosq);
  const double cosio = std::cos(inclo_);
  const double cosio2 = cosio * cosio;
  const double d1 = 0.75 * kJ2 * (3.0 * cosio2 - 1.0) / (rteosq * omeosq);
  double del = d1 / (ak * ak);
  const double adel = ak * (1.0 - del * del - del * (1.0 / 3.0 + 134.0 * del * del / 81.0));
  del = d1 / (adel * adel);
  no_ = no_kozai / (1.0 + del);
  if (kTwoPi / no_ >= 225.0) throw DomainError("deep-space elements are not supported");

  const double ao = std::pow(kXke / no_, 2.0 / 3.0);
  const double sinio = std::sin(inclo_);
  const double po = ao * omeosq;
  const double con42 = 1.0 - 5.0 * cosio2;
  con41_ = -con42 - cosio2 - cosio2;
  const double posq = po * po;
  const double rp = ao * (1.0 - ecco_);

  const double ss = 78.0 / kRe + 1.0;
  const double qzms2t = std::pow((120.0 - 78.0) / kRe, 4);
  isimp_ = rp < (220.0 / kRe + 1.0);
  double sfour = ss, qzms24 = qzms2t;
  const double perige = (rp - 1.0) * kRe;
  if (perige < 156.0) {
    sfour = perige < 98.0 ? 20.0 : perige - 78.0;
    qzms24 = std::pow((120.0 - sfour) / kRe, 4);
    sfour = sfour / kRe + 1.0;
  }
  const double pinvsq = 1.0 / posq;
  const double tsi = 1.0 / (ao - sfour);
  eta_ = ao * ecco_ * tsi;
  const double etasq = eta_ * eta_;
  const double eeta = ecco_ * eta_;
  const double psisq = std::fabs(1.0 - etasq);
  const double coef = qzms24 * std::pow(tsi, 4);
  const double coef1 = coef / std::pow(psisq, 3.5);
  const double cc2 = coef1 * no_ *
                     (ao * (1.0 + 1.5 * etasq + eeta * (4.0 + etasq)) +
                      0.375 * kJ2 * tsi / psisq * con41_ * (8.0 + 3.0 * etasq * (8.0 + etasq)));
  cc1_ = bstar_ * cc2;
  double cc3 = 0.0;
  if (ecco_ > 1.0e-4) cc3 = -2.0 * coef * tsi * kJ3oJ2 * no_ * sinio / ecco_;
  x1mth2_ = 1.0 - cosio2;
  cc4_ = 2.0 * no_ * coef1 * ao * omeosq *
         (eta_ * (2.0 + 0.5 * etasq) + ecco_ * (0.5 + 2.0 * etasq) -
          kJ2 * tsi / (ao * psisq) *
              (-3.0 * con41_ * (1.0 - 2.0 * eeta + etasq * (1.5 - 0.5 * eeta)) +
               0.75 * x1mth2_ * (2.0 * etasq - eeta * (1.0 + etasq)) * std::cos(2.0 * argpo_)));
  cc5_ = 2.0 * coef1 * ao * omeosq * (1.0 + 2.75 * (etasq + eeta) + eeta * etasq);
  const double cosio4 = cosio2 * cosio2;
  const double temp1 = 1.5 * kJ2 * pinvsq * no_;
  const double temp2 = 0.5 * temp1 * kJ2 * pinvsq;
  const double temp3 = -0.46875 * kJ4 * pinvsq * pinvsq * no_;
  mdot_ = no_ + 0.5 * temp1 * rteosq * con41_ +
          0.0625 * temp2 * rteosq * (13.0 - 78.0 * cosio2 + 137.0 * cosio4);
  argpdot_ = -0.5 * temp1 * con42 + 0.0625 * temp2 * (7.0 - 114.0 * cosio2 + 395.0 * cosio4) +
             temp3 * (3.0 - 36.0 * cosio2 + 49.0 * cosio4);
  const double xhdot1 = -temp1 * cosio;
  nodedot_ = xhdot1 + (0.5 * temp2 * (4.0 - 19.0 * cosio2) + 2.0 * temp3 * (3.0 - 7.0 * cosio2)) *
                          cosio;
  omgcof_ = bstar_ * cc3 * std::cos(argpo_);
  xmcof_ = ecco_ > 1.0e-4 ? -2.0 / 3.0 * coef * bstar_ / eeta : 0.0;
  nodecf_ = 3.5 * omeosq * xhdot1 * cc1_;
  t2cof_ = 1.5 * cc1_;
  const double denom = std::fabs(cosio + 1.0) > 1.5e-12 ? 1.0 + cosio : 1.5e-12;
  xlcof_ = -0.25 * kJ3oJ2 * sinio * (3.0 + 5.0 * cosio) / denom;
  aycof_ = -0.5 * kJ3oJ2 * sinio;
  delmo_ = std::pow(1.0 + eta_ * std::cos(mo_), 3);
  sinmao_ = std::sin(mo_);
  x7thm1_ = 7.0 * cosio2 - 1.0;
  d2_ = d3_ = d4_ = t3cof_ = t4cof_ = t5cof_ = 0.0;
  if (!isimp_) {
    const double cc1sq = cc1_ * cc1_;
    d2_ = 4.0 * ao * tsi * cc1sq;
    const double temp = d2_ * tsi * cc1_ / 3.0;
    d3_ = (17.0 * ao + sfour) * temp;
    d4_ = 0.5 * temp * ao * tsi * (221.0 * ao + 31.0 * sfour) * cc1_;
    t3cof_ = d2_ + 2.0 * cc1sq;
    t4cof_ = 0.25 * (3.0 * d3_ + cc1_ * (12.0 * d2_ + 10.0 * cc1sq));
    t5cof_ = 0.2 * (3.0 * d4_ + 12.0 * cc1_ * d3_ + 6.0 * d2_ * d2_ + 15.0 * cc1sq * (2.0 * d2_ + cc1sq));
  }
}

StateVector Sgp4::at(UtcTime t) const { return at_minutes(seconds_between(epoch_, t) / 60.0); }

StateVector Sgp4::at_minutes(double t) const {
  const double xmdf = mo_ + mdot_ * t;
  const double argpdf = argpo_ + argpdot_ * t;
  const double nodedf = nodeo_ + nodedot_ * t;
  double argpm = argpdf;
  double mm = xmdf;
  const double t2 = t * t;
  double nodem = nodedf + nodecf_ * t2;
  double tempa = 1.0 - cc1_ * t;
  double tempe = bstar_ * cc4_ * t;
  double templ = t2cof_ * t2;
  if (!isimp_) {
    const double delomg = omgcof_ * t;
    const double delm = xmcof_ * (std::pow(1.0 + eta_ * std::cos(xmdf), 3) - delmo_);
    const double temp = delomg + delm;
    mm = xmdf + temp;
    argpm = argpdf - temp;
    const double t3 = t2 * t, t4 = t3 * t;
    tempa = tempa - d2_ * t2 - d3_ * t3 - d4_ * t4;
    tempe = tempe + bstar_ * cc5_ * (std::sin(mm) - sinmao_);
    templ = templ + t3cof_ * t3 + t4 * (t4cof_ + t * t5cof_);
  }
  const double am = std::pow(kXke / no_, 2.0 / 3.0) * tempa * tempa;
  const double nm = kXke / std::pow(am, 1.5);
  double em = ecco_ - tempe;
  if (em >= 1.0 || em < -0.001) throw DomainError("SGP4 eccentricity diverged");
  if (em < 1.0e-6) em = 1.0e-6;
  mm = mm + no_ * templ;
  double xlm = mm + argpm + nodem;
  nodem = std::fmod(nodem, kTwoPi);
  argpm = std::fmod(argpm, kTwoPi);
  xlm = std::fmod(xlm, kTwoPi);
  mm = std::fmod(xlm - argpm - nodem, kTwoPi);

  const double sinip = std::sin(inclo_), cosip = std::cos(inclo_);
  const double axnl = em * std::cos(argpm);
  double temp = 1.0 / (am * (1.0 - em * em));
  const double aynl = em * std::sin(argpm) + temp * aycof_;
  const double xl = mm + argpm + nodem + temp * xlcof_ * axnl;

  // Kepler's equation in equinoctial form.
  const double u = std::fmod(xl - nodem, kTwoPi);
  double eo1 = u, tem5 = 9999.9, sineo1 = 0, coseo1 = 0;
  for (int ktr = 1; std::fabs(tem5) >= 1.0e-12 && ktr <= 10; ++ktr) {
    sineo1 = std::sin(eo1);
    coseo1 = std::cos(eo1);
    tem5 = 1.0 - coseo1 * axnl - sineo1 * aynl;
    tem5 = (u - aynl * coseo1 + axnl * sineo1 - eo1) / tem5;
    tem5 = std::clamp(tem5, -0.95, 0.95);
    eo1 += tem5;
  }
  const double ecose = axnl * coseo1 + aynl * sineo1;
  const double esine = axnl * sineo1 - aynl * coseo1;
  const double el2 = axnl * axnl + aynl * aynl;
  const double pl = am * (1.0 - el2);
  if (pl < 0.0) throw DomainError("SGP4 semi-latus rectum is negative");
  const double rl = am * (1.0 - ecose);
  const double rdotl = std::sqrt(am) * esine / rl;
  const double rvdotl = std::sqrt(pl) / rl;
  const double betal = std::sqrt(1.0 - el2);
  temp = esine / (1.0 + betal);
  const double sinu = am / rl * (sineo1 - aynl - axnl * temp);
  const double cosu = am / rl * (coseo1 - axnl + aynl * temp);
  double su = std::atan2(sinu, cosu);
  const double sin2u = (cosu + cosu) * sinu;
  const double cos2u = 1.0 - 2.0 * sinu * sinu;
  temp = 1.0 / pl;
  const double temp1 = 0.5 * kJ2 * temp;
  const double temp2 = temp1 * temp;

  const double mrt = rl * (1.0 - 1.5 * temp2 * betal * con41_) + 0.5 * temp1 * x1mth2_ * cos2u;
  su = su - 0.25 * temp2 * x7thm1_ * sin2u;
  const double xnode = nodem + 1.5 * temp2 * cosip * sin2u;
  const double xinc = inclo_ + 1.5 * temp2 * cosip * sinip * cos2u;
  const double mvt = rdotl - nm * temp1 * x1mth2_ * sin2u / kXke;
  const double rvdot = rvdotl + nm * temp1 * (x1mth2_ * cos2u + 1.5 * con41_) / kXke;
  if (mrt < 1.0) throw DomainError("SGP4 satellite has decayed");

  const double sinsu = std::sin(su), cossu = std::cos(su);
  const double snod = std::sin(xnode), cnod = std::cos(xnode);
  const double sini = std::sin(xinc), cosi = std::cos(xinc);
  const double xmx = -snod * cosi, xmy = cnod * cosi;
  const Vec3 uv{xmx * sinsu + cnod * cossu, xmy * sinsu + snod * cossu, sini * sinsu};
  const Vec3 vv{xmx * cossu - cnod * sinsu, xmy * cossu - snod * sinsu, sini * cossu};
  const double vkmpersec = kRe * kXke / 60.0;
  return {uv * (mrt * kRe), (uv * mvt + vv * rvdot) * vkmpersec};
}

}  // namespace dtnsim
