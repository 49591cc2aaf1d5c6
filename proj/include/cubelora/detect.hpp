#pragma once

// Preamble detection and Doppler estimation at the ground station.
//
// Buffers are frame aligned: the preamble starts at `symbol_start_index`, so the
// detectors search frequency only.
//
// Narrowband baseline: a gateway channelized at the signal bandwidth. Preamble
// chirps are dechirped with the narrow downchirp and their power spectra
// accumulated; the peak must fall inside +/-(bw/2 - one bin).
//
// Wideband correlator: a chirp template at m*bw with spreading factor
// sf + 2*log2(m), i.e. the same chirp slope as the signal. Each narrow preamble
// chirp is then a time slice of the wide template, and dechirping one template
// period (m narrow symbols) leaves m tone fragments at d + c_j, with
// c_j = ((m-1)/2 - j)*bw. Folding the wide spectrum modulo bw stacks the
// fragments non-coherently; the fold position gives d modulo bw and the alias
// is picked by checking which candidate puts fragment j in time slice j.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cubelora/channel.hpp"
#include "cubelora/core.hpp"
#include "cubelora/fft.hpp"
#include "cubelora/phy.hpp"

namespace cubelora::detect {

using phy::cplx;
using phy::LoRaParams;

struct DetectionResult {
  bool detected = false;
  double coarse_doppler_hz = 0.0;
  double fine_doppler_hz = std::numeric_limits<double>::quiet_NaN();  // only when detected
  double detection_snr_db = -std::numeric_limits<double>::infinity();
  std::size_t symbol_start_index = 0;
  double statistic = 0.0;  // peak-to-noise-floor ratio compared to the threshold
};

struct CorrelatorConfig {
  LoRaParams narrow;
  double wide_bw_hz = 250000.0;
  double detection_threshold = 0.0;  // peak / floor; 0 means "not calibrated"

  int ratio() const { return static_cast<int>(std::llround(wide_bw_hz / narrow.bw_hz)); }
  int wide_sf() const { return narrow.sf + 2 * std::countr_zero(static_cast<unsigned>(ratio())); }
  double wide_slope() const { return wide_bw_hz * wide_bw_hz / std::ldexp(1.0, wide_sf()); }

  void validate() const {
    narrow.validate();
    const double r = wide_bw_hz / narrow.bw_hz;
    const int m = ratio();
    require(r >= 1.0 && std::abs(r - m) < 1e-9 && (m & (m - 1)) == 0, errc::configuration,
            "wide bandwidth must be a power-of-two multiple of the signal bandwidth");
    require(wide_slope() == narrow.chirp_slope(), errc::configuration, "wide correlator slope must equal the signal slope");
    const double os = narrow.sample_rate_hz / wide_bw_hz;
    require(os >= 1.0 && std::abs(os - std::round(os)) < 1e-9, errc::configuration,
            "sample rate must be an integer multiple of the correlator bandwidth");
    require(narrow.preamble_len >= m, errc::configuration, "preamble shorter than one wide correlator period");
  }
};

inline nlohmann::json to_json(const DetectionResult& r) {
  nlohmann::json j = {{"detected", r.detected},
                      {"coarse_doppler_hz", r.coarse_doppler_hz},
                      {"detection_snr_db", std::isfinite(r.detection_snr_db) ? nlohmann::json(r.detection_snr_db) : nlohmann::json(nullptr)},
                      {"symbol_start_index", r.symbol_start_index},
                      {"statistic", r.statistic}};
  j["fine_doppler_hz"] = r.detected && std::isfinite(r.fine_doppler_hz) ? nlohmann::json(r.fine_doppler_hz) : nlohmann::json(nullptr);
  return j;
}

inline DetectionResult detection_from_json(const nlohmann::json& j) {
  DetectionResult r;
  r.detected = j.at("detected").get<bool>();
  r.coarse_doppler_hz = j.at("coarse_doppler_hz").get<double>();
  if (!j.at("detection_snr_db").is_null()) r.detection_snr_db = j.at("detection_snr_db").get<double>();
  if (!j.at("fine_doppler_hz").is_null()) r.fine_doppler_hz = j.at("fine_doppler_hz").get<double>();
  r.symbol_start_index = j.at("symbol_start_index").get<std::size_t>();
  r.statistic = j.value("statistic", 0.0);
  return r;
}

namespace detail {

struct PeakStats {
  std::size_t index = 0;
  double peak = 0.0;
  double floor = 0.0;
  double ratio() const { return floor > 0.0 ? peak / floor : std::numeric_limits<double>::infinity(); }
  double snr_db() const {
    const double excess = ratio() - 1.0;
    return excess > 0.0 ? 10.0 * std::log10(excess) : -std::numeric_limits<double>::infinity();
  }
};

// Peak over `bins` (indices into power) and the mean of the rest, excluding
// `guard` bins either side of the peak (circular in `period`).
inline PeakStats peak_and_floor(std::span<const double> power, std::span<const std::size_t> bins, std::size_t guard,
                                std::size_t period) {
  PeakStats s;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < bins.size(); ++i)
    if (power[bins[i]] > s.peak) {
      s.peak = power[bins[i]];
      arg = i;
    }
  s.index = bins[arg];
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const std::size_t d = (bins[i] + period - s.index) % period;
    if (std::min(d, period - d) <= guard) continue;
    sum += power[bins[i]];
    ++count;
  }
  s.floor = count > 0 ? sum / static_cast<double>(count) : 0.0;
  return s;
}

inline double parabolic_offset(double left, double mid, double right) {
  const double den = left - 2.0 * mid + right;
  return den != 0.0 ? 0.5 * (left - right) / den : 0.0;
}

}  // namespace detail

/// Baseline gateway detector: dechirp each preamble chirp at the input rate and
/// accumulate power spectra. Only bins inside +/-(bw/2 - one bin) count, which
/// is where a receiver channelized at bw can see the correlation peak.
inline DetectionResult detect_narrowband(std::span<const cplx> x, const LoRaParams& params, double threshold,
                                         std::size_t start = 0) {
  params.validate();
  const std::size_t m = params.samples_per_symbol();
  const std::size_t n = params.chips();
  const auto P = static_cast<std::size_t>(params.preamble_len);
  require(start + P * m <= x.size(), errc::framing, "buffer shorter than the preamble");
  const auto down = phy::make_chirp(params.sf, params.bw_hz, params.sample_rate_hz, 0.0, false);
  std::vector<double> power(m, 0.0);
  std::vector<cplx> seg(m);
  for (std::size_t c = 0; c < P; ++c) {
    for (std::size_t i = 0; i < m; ++i) seg[i] = x[start + c * m + i] * down[i];
    const auto s = fft::forward(seg);
    for (std::size_t k = 0; k < m; ++k) power[k] += std::norm(s[k]);
  }
  std::vector<std::size_t> window;
  for (std::size_t k = 0; k < n / 2; ++k) window.push_back(k);
  for (std::size_t k = m - n / 2 + 1; k < m; ++k) window.push_back(k);
  const auto stats = detail::peak_and_floor(power, window, 2, m);
  DetectionResult r;
  r.statistic = stats.ratio();
  r.detection_snr_db = stats.snr_db();
  r.symbol_start_index = start;
  r.coarse_doppler_hz = fft::bin_frequency(stats.index, m, params.sample_rate_hz);
  r.detected = threshold > 0.0 && r.statistic >= threshold;
  return r;
}

inline DetectionResult detect_narrowband(const phy::IqBuffer& iq, const LoRaParams& params, double threshold,
                                         std::size_t start = 0) {
  return detect_narrowband(phy::to_double(iq.samples), params, threshold, start);
}

/// Offset estimate from a known symbol sequence: x * conj(reference) is a tone
/// at the carrier offset; its periodogram peak is refined by golden-section
/// search around `guess_hz`.
inline double estimate_offset_known_symbols(std::span<const cplx> x, const LoRaParams& params,
                                            std::span<const std::uint32_t> symbols, std::size_t start, double guess_hz) {
  const auto ref = phy::modulate_symbols(symbols, params);
  require(start + ref.size() <= x.size(), errc::framing, "buffer shorter than the reference symbols");
  const double fs = params.sample_rate_hz;
  // Decimate the product by block averaging; the residual tone is near 0 Hz.
  const std::size_t block = params.oversampling() * 4;
  const std::size_t nb = ref.size() / block;
  std::vector<cplx> z(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    cplx acc = 0.0;
    for (std::size_t i = b * block; i < (b + 1) * block; ++i) {
      const double t = static_cast<double>(i) / fs;
      acc += x[start + i] * std::conj(ref[i]) * std::polar(1.0, -constants::two_pi * guess_hz * t);
    }
    z[b] = acc;
  }
  const double fz = fs / static_cast<double>(block);  // rate of z
  const double tb0 = (static_cast<double>(block) - 1.0) / 2.0 / fs;  // block centre delay
  auto periodogram = [&](double f) {
    cplx acc = 0.0;
    for (std::size_t b = 0; b < nb; ++b)
      acc += z[b] * std::polar(1.0, -constants::two_pi * f * (static_cast<double>(b) / fz + tb0));
    return std::norm(acc);
  };
  // coarse scan over +/- one symbol bin, resolution 1/(8 T_obs)
  const double t_obs = static_cast<double>(nb) / fz;
  const double span = params.bin_spacing();
  const double step = 1.0 / (8.0 * t_obs);
  double best_f = 0.0, best_p = -1.0;
  for (double f = -span; f <= span; f += step) {
    const double p = periodogram(f);
    if (p > best_p) {
      best_p = p;
      best_f = f;
    }
  }
  double lo = best_f - step, hi = best_f + step;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
  double pa = periodogram(a), pb = periodogram(b);
  for (int it = 0; it < 40; ++it) {
    if (pa > pb) {
      hi = b;
      b = a;
      pb = pa;
      a = hi - g * (hi - lo);
      pa = periodogram(a);
    } else {
      lo = a;
      a = b;
      pa = pb;
      b = lo + g * (hi - lo);
      pb = periodogram(b);
    }
  }
  return guess_hz + 0.5 * (lo + hi);
}

inline std::vector<std::uint32_t> preamble_and_sync(const LoRaParams& p) {
  std::vector<std::uint32_t> s(static_cast<std::size_t>(p.preamble_len), 0u);
  for (int i = 0; i < p.sync_len; ++i) s.push_back(phy::sync_symbol(p, i));
  return s;
}

/// Frequency resolution of the preamble + SYNC observation, bw / (2^sf * (P + S)).
inline double fine_bin_hz(const LoRaParams& p) {
  return p.bw_hz / (static_cast<double>(p.chips()) * (p.preamble_len + p.sync_len));
}

/// Refines a detected packet's offset using preamble and SYNC jointly.
inline double estimate_doppler_fine(std::span<const cplx> x, const CorrelatorConfig& cfg, const DetectionResult& det) {
  require(det.detected, errc::precondition, "fine estimation needs a detected packet");
  const auto syms = preamble_and_sync(cfg.narrow);
  return estimate_offset_known_symbols(x, cfg.narrow, syms, det.symbol_start_index, det.coarse_doppler_hz);
}

/// Same estimator restricted to the SYNC symbols (the conventional approach).
inline double estimate_doppler_sync_only(std::span<const cplx> x, const LoRaParams& p, std::size_t start, double coarse_hz) {
  std::vector<std::uint32_t> syms;
  for (int i = 0; i < p.sync_len; ++i) syms.push_back(phy::sync_symbol(p, i));
  require(!syms.empty(), errc::configuration, "no SYNC symbols configured");
  const std::size_t offset = start + static_cast<std::size_t>(p.preamble_len) * p.samples_per_symbol();
  // keep the time origin at the packet start so both estimators see the same phase model
  return estimate_offset_known_symbols(x, p, syms, offset, coarse_hz);
}

inline DetectionResult detect_wideband(std::span<const cplx> x, const CorrelatorConfig& cfg, std::size_t start = 0,
                                       bool refine = true) {
  cfg.validate();
  const auto& p = cfg.narrow;
  const int m = cfg.ratio();
  const double fs = p.sample_rate_hz;
  const std::size_t sym = p.samples_per_symbol();
  const std::size_t win = sym * static_cast<std::size_t>(m);  // one wide template period
  const std::size_t windows = static_cast<std::size_t>(p.preamble_len / m);
  require(start + windows * win <= x.size(), errc::framing, "buffer shorter than the preamble");

  const auto down = phy::make_chirp(cfg.wide_sf(), cfg.wide_bw_hz, fs, 0.0, false);
  std::vector<double> power(win, 0.0);
  std::vector<std::vector<cplx>> products(windows);
  for (std::size_t w = 0; w < windows; ++w) {
    auto& prod = products[w];
    prod.resize(win);
    for (std::size_t i = 0; i < win; ++i) prod[i] = x[start + w * win + i] * down[i];
    const auto s = fft::forward(prod);
    for (std::size_t k = 0; k < win; ++k) power[k] += std::norm(s[k]);
  }

  // fold modulo bw over the correlator band; bin spacing is bw / (2^sf * m)
  const std::size_t fold = p.chips() * static_cast<std::size_t>(m);
  std::vector<double> folded(fold, 0.0);
  const auto half = static_cast<long long>(fold) * m / 2;
  for (long long sb = -half; sb < half; ++sb) {
    const auto idx = static_cast<std::size_t>((sb + static_cast<long long>(win)) % static_cast<long long>(win));
    folded[static_cast<std::size_t>(sb + half) % fold] += power[idx];
  }
  std::vector<std::size_t> all(fold);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto stats = detail::peak_and_floor(folded, all, 2, fold);

  DetectionResult r;
  r.statistic = stats.ratio();
  r.detection_snr_db = stats.snr_db();
  r.symbol_start_index = start;

  // fold position -> d (mod bw); fragments sit at d + c_j, c_j = ((m-1)/2 - j) bw
  const double bin_hz = fs / static_cast<double>(win);
  const double off = detail::parabolic_offset(folded[(stats.index + fold - 1) % fold], folded[stats.index],
                                              folded[(stats.index + 1) % fold]);
  const double fold_freq = (static_cast<double>(stats.index) + off) * bin_hz - p.bw_hz * m / 2.0;
  const double base = fold_freq - (m % 2 == 0 ? p.bw_hz / 2.0 : 0.0);

  // resolve the alias: fragment j must live in time slice j
  double best_score = -1.0, best_d = 0.0;
  for (int q = -m; q <= m; ++q) {
    const double cand = base + q * p.bw_hz;
    if (cand < -cfg.wide_bw_hz / 2.0 || cand >= cfg.wide_bw_hz / 2.0) continue;
    double score = 0.0;
    for (std::size_t w = 0; w < windows; ++w) {
      for (int j = 0; j < m; ++j) {
        const double f = cand + ((m - 1) / 2.0 - j) * p.bw_hz;
        cplx acc = 0.0;
        const cplx step = std::polar(1.0, -constants::two_pi * f / fs);
        cplx rot = std::polar(1.0, -constants::two_pi * f * static_cast<double>(static_cast<std::size_t>(j) * sym) / fs);
        for (std::size_t i = static_cast<std::size_t>(j) * sym; i < static_cast<std::size_t>(j + 1) * sym; ++i) {
          acc += products[w][i] * rot;
          rot *= step;
        }
        score += std::norm(acc);
      }
    }
    if (score > best_score) {
      best_score = score;
      best_d = cand;
    }
  }
  r.coarse_doppler_hz = best_d;
  r.detected = cfg.detection_threshold > 0.0 && r.statistic >= cfg.detection_threshold;
  if (r.detected && refine) r.fine_doppler_hz = estimate_doppler_fine(x, cfg, r);
  return r;
}

inline DetectionResult detect_wideband(const phy::IqBuffer& iq, const CorrelatorConfig& cfg, std::size_t start = 0) {
  return detect_wideband(phy::to_double(iq.samples), cfg, start);
}

/// Smallest power-of-two correlator (up to `max_bw_hz`) whose acceptance
/// region covers |expected| + margin. Default margin is a quarter of the
/// signal bandwidth.
inline CorrelatorConfig select_correlator(double expected_doppler_hz, const LoRaParams& narrow, double margin_hz = -1.0,
                                          double max_bw_hz = 250000.0) {
  if (margin_hz < 0.0) margin_hz = narrow.bw_hz / 4.0;
  CorrelatorConfig cfg;
  cfg.narrow = narrow;
  const double need = std::abs(expected_doppler_hz) + margin_hz;
  double bw = narrow.bw_hz;
  while (bw < max_bw_hz && bw / 2.0 - narrow.bin_spacing() < need) bw *= 2.0;
  cfg.wide_bw_hz = std::min(bw, max_bw_hz);
  return cfg;
}

enum class DetectorKind { narrowband, wideband };

/// Constant-false-alarm threshold: the (1 - pfa) quantile of the detector
/// statistic on pure-noise buffers.
inline double calibrate_threshold(const CorrelatorConfig& cfg, DetectorKind kind, double pfa = 0.01,
                                  std::size_t trials = 1000, std::uint64_t seed = 1) {
  require(pfa > 0.0 && pfa < 1.0, errc::domain, "false-alarm rate must be in (0, 1)");
  require(trials >= static_cast<std::size_t>(std::ceil(2.0 / pfa)), errc::statistical_power, "too few calibration trials");
  const auto& p = cfg.narrow;
  const std::size_t len = static_cast<std::size_t>(p.preamble_len + p.sync_len) * p.samples_per_symbol();
  std::vector<double> stats;
  stats.reserve(trials);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<cplx> noise(len);
  for (std::size_t t = 0; t < trials; ++t) {
    for (auto& v : noise) v = cplx(g(rng), g(rng));
    CorrelatorConfig probe = cfg;
    probe.detection_threshold = 1.0;
    const auto r = kind == DetectorKind::narrowband ? detect_narrowband(noise, p, 1.0)
                                                    : detect_wideband(noise, probe, 0, false);
    stats.push_back(r.statistic);
  }
  std::sort(stats.begin(), stats.end());
  const auto idx = static_cast<std::size_t>(std::ceil((1.0 - pfa) * static_cast<double>(trials))) - 1;
  return stats[std::min(idx, trials - 1)];
}

}  // namespace cubelora::detect
