#include "dtnsim/linkbudget.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dtnsim/error.hpp"

namespace dtnsim {

void RFConfig::validate() const {
  if (!(bandwidth_hz > 0)) throw ConfigError("rf bandwidth_hz must be positive");
  if (!(noise_temp_k > 0)) throw ConfigError("rf noise_temp_k must be positive");
  if (!(efficiency > 0 && efficiency <= 1)) throw ConfigError("rf efficiency must be in (0, 1]");
  if (!(zenith_atm_loss_db >= 0)) throw ConfigError("rf zenith_atm_loss_db must be >= 0");
  if (!(carrier_freq_mhz > 0)) throw ConfigError("rf carrier_freq_mhz must be positive");
}

double fspl_db(double range_km, double freq_mhz) {
  if (!(range_km > 0) || !(freq_mhz > 0)) throw DomainError("fspl needs positive range and frequency");
  const double d = range_km * 1e3, f = freq_mhz * 1e6;
  return 20.0 * std::log10(4.0 * std::numbers::pi * d * f / kSpeedOfLight);
}

double atmospheric_loss_db(double elevation_deg, double zenith_loss_db) {
  if (zenith_loss_db < 0) throw DomainError("zenith loss must be non-negative");
  if (elevation_deg <= 0) return zenith_loss_db * 10.0;
  const double s = std::sin(std::min(elevation_deg, 90.0) * std::numbers::pi / 180.0);
  return zenith_loss_db * std::min(1.0 / s, 10.0);
}

double noise_floor_dbm(double temp_k, double bandwidth_hz) {
  if (!(temp_k > 0) || !(bandwidth_hz > 0)) throw DomainError("noise floor needs positive T and B");
  return 10.0 * std::log10(kBoltzmann * temp_k * bandwidth_hz * 1000.0);
}

double snr_db(const RFConfig& c, double fspl, double atm) {
  return c.tx_power_dbm + c.tx_gain_dbi + c.rx_gain_dbi - fspl - atm - c.cable_loss_db -
         c.misc_loss_db - noise_floor_dbm(c.noise_temp_k, c.bandwidth_hz);
}

double doppler_hz(double carrier_mhz, double radial_velocity_km_s) {
  if (!(carrier_mhz > 0)) throw DomainError("carrier frequency must be positive");
  return carrier_mhz * 1e6 * (radial_velocity_km_s * 1e3) / kSpeedOfLight;
}

double capacity_bps(double bandwidth_hz, double snr) {
  if (!(bandwidth_hz > 0)) throw DomainError("bandwidth must be positive");
  return bandwidth_hz * std::log2(1.0 + std::pow(10.0, snr / 10.0));
}

LinkState evaluate_link(const RFConfig& cfg, const LookAngles& angles, bool visible) {
  LinkState s;
  s.fspl_db = fspl_db(angles.range, cfg.carrier_freq_mhz);
  s.atm_loss_db = atmospheric_loss_db(angles.elevation, cfg.zenith_atm_loss_db);
  s.noise_floor_dbm = noise_floor_dbm(cfg.noise_temp_k, cfg.bandwidth_hz);
  s.snr_db = snr_db(cfg, s.fspl_db, s.atm_loss_db);
  s.doppler_hz = doppler_hz(cfg.carrier_freq_mhz, angles.range_rate);
  s.capacity_bps = capacity_bps(cfg.bandwidth_hz, s.snr_db);
  s.visible = visible;
  const bool viable = visible && s.snr_db > cfg.min_snr_db_viable;
  s.effective_rate_bps = viable ? cfg.efficiency * s.capacity_bps : 0.0;
  return s;
}

}  // namespace dtnsim
