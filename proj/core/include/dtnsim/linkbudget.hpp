#pragma once

#include "dtnsim/orbital.hpp"

namespace dtnsim {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kBoltzmann = 1.380649e-23;    // J/K

struct RFConfig {
  double tx_power_dbm = 30.0;
  double tx_gain_dbi = 6.0;
  double rx_gain_dbi = 12.0;
  double cable_loss_db = 2.0;
  double misc_loss_db = 3.0;
  double noise_temp_k = 500.0;
  double bandwidth_hz = 25000.0;
  double carrier_freq_mhz = 437.0;
  double zenith_atm_loss_db = 0.5;
  double efficiency = 0.75;
  double min_snr_db_viable = 0.0;

  void validate() const;  // ConfigError
};

struct LinkState {
  double fspl_db = 0;
  double atm_loss_db = 0;
  double noise_floor_dbm = 0;
  double snr_db = 0;
  double doppler_hz = 0;
  double capacity_bps = 0;
  double effective_rate_bps = 0;
  bool visible = false;
};

// Friis free-space loss. DomainError on non-positive input.
double fspl_db(double range_km, double freq_mhz);
// L0 * min(1/sin(el), 10); non-positive elevations get the cap.
double atmospheric_loss_db(double elevation_deg, double zenith_loss_db);
double noise_floor_dbm(double temp_k, double bandwidth_hz);
double snr_db(const RFConfig& cfg, double fspl, double atm);
// Positive radial velocity (receding) gives a positive shift.
double doppler_hz(double carrier_mhz, double radial_velocity_km_s);
double capacity_bps(double bandwidth_hz, double snr_db);

LinkState evaluate_link(const RFConfig& cfg, const LookAngles& angles, bool visible);

}  // namespace dtnsim
