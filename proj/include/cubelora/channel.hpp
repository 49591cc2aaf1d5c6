#pragma once

// Satellite downlink impairments: AWGN at a given in-band SNR and the
// time-varying Doppler of a pass. No fading or multipath.

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "cubelora/core.hpp"
#include "cubelora/orbit.hpp"
#include "cubelora/phy.hpp"

namespace cubelora::channel {

using phy::cplx;

/// Pass this as snr_db to disable noise.
inline constexpr double no_noise = std::numeric_limits<double>::infinity();

struct ChannelConfig {
  double snr_db = -10.0;  // in-band (over the LoRa bandwidth), before despreading
  orbit::PassGeometry pass;
  double packet_start_s = 0.0;  // absolute time, same clock as pass.t_start_s
  std::uint64_t seed = 1;
  bool doppler = true;

  void validate() const {
    require(!std::isnan(snr_db) && snr_db > -std::numeric_limits<double>::infinity(), errc::domain,
            "snr must be finite or +inf");
    const orbit::PassShape shape(pass);
    require(packet_start_s >= shape.t_start() && packet_start_s <= shape.t_end(), errc::out_of_range,
            "packet start outside the pass");
  }
};

inline double mean_power(std::span<const cplx> x) {
  double p = 0.0;
  for (const auto& v : x) p += std::norm(v);
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

/// Adds circular complex Gaussian noise in place. The SNR refers to the
/// occupied bandwidth, so the per-sample noise variance is
/// P_signal * (fs / occupied_bw) / snr.
inline void add_awgn(std::span<cplx> x, double snr_db, std::uint64_t seed, double sample_rate_hz, double occupied_bw_hz) {
  if (snr_db == no_noise) return;
  require(occupied_bw_hz > 0.0 && sample_rate_hz >= occupied_bw_hz, errc::configuration,
          "occupied bandwidth must be positive and not exceed the sample rate");
  const double p = mean_power(x);
  require(p > 0.0, errc::domain, "awgn: signal power must be positive");
  const double variance = p * (sample_rate_hz / occupied_bw_hz) / std::pow(10.0, snr_db / 10.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, std::sqrt(variance / 2.0));
  for (auto& v : x) v += cplx(g(rng), g(rng));
}

inline phy::IqBuffer apply_awgn(const phy::IqBuffer& iq, double snr_db, std::uint64_t seed, double occupied_bw_hz) {
  iq.validate();
  if (snr_db == no_noise) return iq;
  auto x = phy::to_double(iq.samples);
  add_awgn(x, snr_db, seed, iq.sample_rate_hz, occupied_bw_hz);
  return phy::make_buffer(x, iq.sample_rate_hz, iq.center_offset_hz);
}

/// SNR over the full sample rate.
inline phy::IqBuffer apply_awgn(const phy::IqBuffer& iq, double snr_db, std::uint64_t seed) {
  return apply_awgn(iq, snr_db, seed, iq.sample_rate_hz);
}

/// Rotates x[n] by exp(j 2 pi integral f(t) dt), with f evaluated at sample
/// instants t0 + n/fs and integrated with the trapezoid rule.
template <class FreqFn>
void apply_frequency_track(std::span<cplx> x, double sample_rate_hz, double t0, FreqFn&& freq_hz) {
  const double dt = 1.0 / sample_rate_hz;
  double phase = 0.0;  // cycles
  double f_prev = freq_hz(t0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    if (n > 0) {
      const double f = freq_hz(t0 + static_cast<double>(n) * dt);
      phase += 0.5 * (f_prev + f) * dt;
      phase -= std::floor(phase);
      f_prev = f;
    }
    x[n] *= std::polar(1.0, constants::two_pi * phase);
  }
}

inline void apply_frequency_offset(std::span<cplx> x, double sample_rate_hz, double offset_hz) {
  apply_frequency_track(x, sample_rate_hz, 0.0, [offset_hz](double) { return offset_hz; });
}

inline phy::IqBuffer apply_frequency_offset(const phy::IqBuffer& iq, double offset_hz) {
  auto x = phy::to_double(iq.samples);
  apply_frequency_offset(x, iq.sample_rate_hz, offset_hz);
  return phy::make_buffer(x, iq.sample_rate_hz, iq.center_offset_hz);
}

/// Pass Doppler over the packet, starting at `packet_start_s`. Amplitude is
/// untouched. `bias_hz` is subtracted from the instantaneous Doppler (used to
/// model a receiver that has already removed the preamble offset).
inline void apply_doppler_track(std::span<cplx> x, double sample_rate_hz, const orbit::PassGeometry& pass,
                                double packet_start_s, double bias_hz = 0.0) {
  const orbit::PassShape shape(pass);
  const double duration = static_cast<double>(x.size()) / sample_rate_hz;
  require(packet_start_s >= shape.t_start() && packet_start_s + duration <= shape.t_end() + 1e-9, errc::out_of_range,
          "packet does not fit within the pass");
  const double tca = shape.t_ca();
  apply_frequency_track(x, sample_rate_hz, packet_start_s,
                        [&](double t) { return shape.doppler(t - tca) - bias_hz; });
}

inline phy::IqBuffer apply_doppler_track(const phy::IqBuffer& iq, const orbit::PassGeometry& pass, double packet_start_s) {
  iq.validate();
  auto x = phy::to_double(iq.samples);
  apply_doppler_track(x, iq.sample_rate_hz, pass, packet_start_s);
  return phy::make_buffer(x, iq.sample_rate_hz, iq.center_offset_hz);
}

/// Thermal noise floor kTB in dBm.
inline double noise_floor_dbm(double bw_hz) {
  return 10.0 * std::log10(constants::boltzmann * constants::reference_temperature * bw_hz * 1e3);
}

/// Default receive chain, chosen so a 525 km zenith pass averages -10 dB SNR
/// at 62.5 kHz.
struct LinkBudget {
  double tx_dbm = 27.0;
  double rx_gain_db = 2.0;
  double noise_figure_db = 13.4;
};

inline double received_power_dbm(double tx_dbm, double range_m, double carrier_hz, double rx_gain_db) {
  return tx_dbm - orbit::path_loss_db(range_m, carrier_hz) + rx_gain_db;
}

inline double attenuation_to_snr(double tx_dbm, double range_m, double carrier_hz, double noise_figure_db,
                                 double rx_gain_db, double bw_hz) {
  require(bw_hz > 0.0, errc::domain, "bandwidth must be positive");
  return received_power_dbm(tx_dbm, range_m, carrier_hz, rx_gain_db) - noise_floor_dbm(bw_hz) - noise_figure_db;
}

inline double pass_snr_db(const orbit::PassGeometry& pass, double t, double bw_hz, const LinkBudget& link = {}) {
  return attenuation_to_snr(link.tx_dbm, orbit::slant_range(pass, t), pass.orbit.carrier_hz, link.noise_figure_db,
                            link.rx_gain_db, bw_hz);
}

/// Post-despreading SNR gain of a symbol, 10*log10(2^sf).
inline double processing_gain_db(int sf) { return 10.0 * std::log10(std::ldexp(1.0, sf)); }

}  // namespace cubelora::channel
