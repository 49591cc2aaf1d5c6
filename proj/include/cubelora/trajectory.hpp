#pragma once

// Pass-parameter estimation from a sparse Doppler record.
//
// The record is splined onto a 1 s grid, then every (theta_max, phi) cell of a
// grid emulates its pass Doppler and is slid against the record; the best lag
// gives t_ca and hence t_start. Search runs coarse, then fine around the best
// coarse cells. The coarse stage slides the splined record; the fine stage
// scores the raw samples at a continuous lag.
//
// Two cell scores:
//   matched     least-squares residual between record and emulated curve
//   normalized  zero-mean, unit-energy cross-correlation (amplitude blind)

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "cubelora/core.hpp"
#include "cubelora/fft.hpp"
#include "cubelora/orbit.hpp"
#include "cubelora/spline.hpp"

namespace cubelora::trajectory {

enum class ScoreMode { matched, normalized };

struct GridSpec {
  double coarse_theta_deg = 2.0;
  double coarse_phi_deg = 4.0;
  double theta_deg = 0.25;
  double phi_deg = 0.5;
  int seeds = 6;  // coarse cells refined

  void validate() const {
    require(theta_deg > 0.0 && phi_deg > 0.0 && coarse_theta_deg >= theta_deg && coarse_phi_deg >= phi_deg,
            errc::configuration, "grid resolutions must be positive and coarse >= fine");
    require(seeds >= 1, errc::configuration, "need at least one refinement seed");
  }
};

struct TrajectoryEstimate {
  double theta_max_deg = 0.0;
  double phi_deg = 0.0;
  double t_start_s = 0.0;
  double correlation_score = 0.0;  // normalized correlation at the chosen lag
  double theta_resolution_deg = 0.0;
  double phi_resolution_deg = 0.0;
  double residual_rms_hz = 0.0;

  orbit::PassGeometry geometry(const orbit::OrbitParams& base) const {
    orbit::PassGeometry g;
    g.orbit = base;
    g.orbit.inclination_deg = phi_deg;
    g.max_elevation_deg = theta_max_deg;
    g.t_start_s = t_start_s;
    return g;
  }
};

inline nlohmann::json to_json(const TrajectoryEstimate& e) {
  return {{"theta_max_deg", e.theta_max_deg},
          {"phi_deg", e.phi_deg},
          {"t_start_s", e.t_start_s},
          {"correlation_score", e.correlation_score},
          {"grid_resolution", {{"theta_deg", e.theta_resolution_deg}, {"phi_deg", e.phi_resolution_deg}}},
          {"residual_rms_hz", e.residual_rms_hz}};
}

inline TrajectoryEstimate estimate_from_json(const nlohmann::json& j) {
  TrajectoryEstimate e;
  e.theta_max_deg = j.at("theta_max_deg").get<double>();
  e.phi_deg = j.at("phi_deg").get<double>();
  e.t_start_s = j.at("t_start_s").get<double>();
  e.correlation_score = j.at("correlation_score").get<double>();
  e.theta_resolution_deg = j.at("grid_resolution").at("theta_deg").get<double>();
  e.phi_resolution_deg = j.at("grid_resolution").at("phi_deg").get<double>();
  e.residual_rms_hz = j.value("residual_rms_hz", 0.0);
  return e;
}

namespace detail {

struct CellFit {
  double theta = 0.0, phi = 0.0;
  double cost = std::numeric_limits<double>::infinity();  // lower is better in both modes
  double t_ca_offset = 0.0;                                // t_ca relative to the first grid sample
};

// Record on a 1 s grid plus everything that does not depend on the cell.
class Matcher {
 public:
  // s: record on the 1 s grid starting at the first knot; knot_t/knot_f: the
  // raw samples, with times relative to the first knot.
  Matcher(std::vector<double> s, std::vector<double> knot_t, std::vector<double> knot_f, const orbit::OrbitParams& orbit,
          ScoreMode mode)
      : s_(std::move(s)), kt_(std::move(knot_t)), kf_(std::move(knot_f)), orbit_(orbit), mode_(mode) {
    k_ = s_.size();
    ks1_ = std::accumulate(kf_.begin(), kf_.end(), 0.0);
    ks2_ = std::inner_product(kf_.begin(), kf_.end(), kf_.begin(), 0.0);
    s1_ = std::accumulate(s_.begin(), s_.end(), 0.0);
    s2_ = std::inner_product(s_.begin(), s_.end(), s_.begin(), 0.0);
    var_s_ = s2_ - s1_ * s1_ / static_cast<double>(k_);
    require(s2_ > 0.0 && var_s_ > 1e-12 * s2_, errc::ambiguity, "flat Doppler record: geometry is unobservable");
    // longest possible pass: zenith, slowest ground track
    orbit::PassGeometry longest;
    longest.orbit = orbit_;
    longest.orbit.inclination_deg = 0.0;
    ext_ = static_cast<std::size_t>(std::ceil(orbit::PassShape(longest).duration() / 2.0)) + 2;
    off_ = k_ - 1 + ext_;
    m_ = 2 * off_ + 1;
    nfft_ = 1;
    while (nfft_ < m_ + k_) nfft_ <<= 1;
    std::vector<std::complex<double>> a(nfft_, 0.0);
    for (std::size_t i = 0; i < k_; ++i) a[i] = s_[i];
    s_fft_ = fft::forward(a);
  }

  std::size_t size() const { return k_; }

  // Cell cost with integer lag search and parabolic lag interpolation.
  CellFit coarse(double theta, double phi) const {
    const orbit::PassShape shape(geometry(theta, phi));
    std::vector<std::complex<double>> b(nfft_, 0.0);
    std::vector<double> p1(m_ + 1, 0.0), p2(m_ + 1, 0.0);
    for (std::size_t j = 0; j < m_; ++j) {
      const double d = shape.doppler(static_cast<double>(j) - static_cast<double>(off_));
      b[j] = d;
      p1[j + 1] = p1[j] + d;
      p2[j + 1] = p2[j] + d * d;
    }
    auto bf = fft::forward(b);
    for (std::size_t i = 0; i < nfft_; ++i) bf[i] *= std::conj(s_fft_[i]);
    const auto xc = fft::inverse(bf);
    // window u covers table entries [u, u + K); lag l = off - u
    const std::size_t nu = m_ - k_ + 1;
    std::vector<double> cost(nu);
    for (std::size_t u = 0; u < nu; ++u) {
      const double c = xc[u].real() / static_cast<double>(nfft_);
      const double d1 = p1[u + k_] - p1[u], d2 = p2[u + k_] - p2[u];
      cost[u] = score(c, d1, d2);
    }
    const auto best = static_cast<std::size_t>(std::min_element(cost.begin(), cost.end()) - cost.begin());
    double frac = 0.0, value = cost[best];
    if (best > 0 && best + 1 < nu) {
      const double l = cost[best - 1], mid = cost[best], r = cost[best + 1];
      const double den = l - 2.0 * mid + r;
      if (den > 0.0) {
        frac = 0.5 * (l - r) / den;
        value = mid - 0.25 * (l - r) * frac;
      }
    }
    CellFit f{theta, phi, value, static_cast<double>(off_) - (static_cast<double>(best) + frac)};
    return f;
  }

  // Exact cost at a continuous lag, evaluated at the knots.
  double cost_at(const orbit::PassShape& shape, double t_ca_offset) const {
    const auto [c, d1, d2] = knot_sums(shape, t_ca_offset);
    if (mode_ == ScoreMode::matched) return ks2_ - 2.0 * c + d2;
    return -knot_gamma(c, d1, d2);
  }

  // Coarse lag followed by golden-section refinement of the lag.
  CellFit fine(double theta, double phi) const {
    auto f = coarse(theta, phi);
    const orbit::PassShape shape(geometry(theta, phi));
    double lo = f.t_ca_offset - 1.0, hi = f.t_ca_offset + 1.0;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    double fa = cost_at(shape, a), fb = cost_at(shape, b);
    for (int it = 0; it < 30; ++it) {
      if (fa < fb) {
        hi = b;
        b = a;
        fb = fa;
        a = hi - g * (hi - lo);
        fa = cost_at(shape, a);
      } else {
        lo = a;
        a = b;
        fa = fb;
        b = lo + g * (hi - lo);
        fb = cost_at(shape, b);
      }
    }
    f.t_ca_offset = 0.5 * (lo + hi);
    f.cost = cost_at(shape, f.t_ca_offset);
    return f;
  }

  double normalized_correlation(const orbit::PassShape& shape, double t_ca_offset) const {
    const auto [c, d1, d2] = knot_sums(shape, t_ca_offset);
    return knot_gamma(c, d1, d2);
  }

  double residual_rms(const orbit::PassShape& shape, double t_ca_offset) const {
    double e = 0.0;
    for (std::size_t i = 0; i < kt_.size(); ++i) e += std::pow(kf_[i] - shape.doppler(kt_[i] - t_ca_offset), 2);
    return std::sqrt(e / static_cast<double>(kt_.size()));
  }

  orbit::PassGeometry geometry(double theta, double phi) const {
    orbit::PassGeometry g;
    g.orbit = orbit_;
    g.orbit.inclination_deg = phi;
    g.max_elevation_deg = theta;
    return g;
  }

 private:
  double gamma(double c, double d1, double d2) const {
    const double n = static_cast<double>(k_);
    const double cov = c - s1_ * d1 / n;
    const double var_d = d2 - d1 * d1 / n;
    return var_d > 0.0 ? cov / std::sqrt(var_s_ * var_d) : 0.0;
  }

  std::array<double, 3> knot_sums(const orbit::PassShape& shape, double t_ca_offset) const {
    double c = 0.0, d1 = 0.0, d2 = 0.0;
    for (std::size_t i = 0; i < kt_.size(); ++i) {
      const double d = shape.doppler(kt_[i] - t_ca_offset);
      c += kf_[i] * d;
      d1 += d;
      d2 += d * d;
    }
    return {c, d1, d2};
  }

  double knot_gamma(double c, double d1, double d2) const {
    const double n = static_cast<double>(kt_.size());
    const double cov = c - ks1_ * d1 / n;
    const double var_s = ks2_ - ks1_ * ks1_ / n, var_d = d2 - d1 * d1 / n;
    return var_s > 0.0 && var_d > 0.0 ? cov / std::sqrt(var_s * var_d) : 0.0;
  }

  double score(double c, double d1, double d2) const {
    if (mode_ == ScoreMode::matched) return s2_ - 2.0 * c + d2;
    return -gamma(c, d1, d2);
  }

  std::vector<double> s_, kt_, kf_;
  orbit::OrbitParams orbit_;
  ScoreMode mode_;
  std::size_t k_ = 0, ext_ = 0, off_ = 0, m_ = 0, nfft_ = 0;
  double s1_ = 0.0, s2_ = 0.0, var_s_ = 0.0, ks1_ = 0.0, ks2_ = 0.0;
  std::vector<std::complex<double>> s_fft_;
};

// Strict improvement keeps the earlier cell, so scanning theta then phi in
// ascending order breaks ties toward smaller theta, then smaller phi.
inline bool better(const CellFit& a, const CellFit& b) {
  if (a.cost != b.cost) return a.cost < b.cost;
  if (a.theta != b.theta) return a.theta < b.theta;
  return a.phi < b.phi;
}

inline std::vector<double> axis(double lo, double hi, double step, bool include_hi) {
  std::vector<double> v;
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= n; ++i) {
    const double x = lo + static_cast<double>(i) * step;
    if (x < hi - 1e-9 || (include_hi && x <= hi + 1e-9)) v.push_back(x);
  }
  return v;
}

}  // namespace detail

/// theta_max over (0, 90], phi over [0, 180). Grid points are multiples of the
/// resolution.
inline TrajectoryEstimate estimate_trajectory(const orbit::DopplerCurve& measured, const orbit::OrbitParams& orbit,
                                              const GridSpec& grid = {}, ScoreMode mode = ScoreMode::matched) {
  grid.validate();
  orbit.validate();
  const auto spline = spline_doppler(measured);
  const double t0 = spline.front();
  const auto k = static_cast<std::size_t>(std::floor(spline.back() - t0)) + 1;
  std::vector<double> s(k);
  for (std::size_t i = 0; i < k; ++i) s[i] = spline(t0 + static_cast<double>(i));
  std::vector<double> kt(measured.times_s);
  for (auto& t : kt) t -= t0;
  const detail::Matcher matcher(std::move(s), std::move(kt), measured.doppler_hz, orbit, mode);

  std::vector<detail::CellFit> coarse;
  for (double th : detail::axis(grid.coarse_theta_deg, 90.0, grid.coarse_theta_deg, true))
    for (double ph : detail::axis(0.0, 180.0, grid.coarse_phi_deg, false)) coarse.push_back(matcher.coarse(th, ph));
  std::stable_sort(coarse.begin(), coarse.end(), detail::better);

  // fine windows of +/- one coarse step, re-centred while the optimum sits on an edge
  detail::CellFit best;
  const auto snap = [](double x, double step) { return std::round(x / step) * step; };
  // seeds: best coarse cells, skipping neighbours of cells already taken
  std::vector<detail::CellFit> seeds;
  for (const auto& c : coarse) {
    if (static_cast<int>(seeds.size()) >= grid.seeds) break;
    const bool near = std::any_of(seeds.begin(), seeds.end(), [&](const detail::CellFit& o) {
      return std::abs(o.theta - c.theta) <= grid.coarse_theta_deg + 1e-9 && std::abs(o.phi - c.phi) <= grid.coarse_phi_deg + 1e-9;
    });
    if (!near) seeds.push_back(c);
  }
  for (const auto& seed : seeds) {
    double ct = snap(seed.theta, grid.theta_deg);
    double cp = snap(seed.phi, grid.phi_deg);
    for (int round = 0; round < 6; ++round) {
      const double tlo = std::max(grid.theta_deg, ct - grid.coarse_theta_deg);
      const double thi = std::min(90.0, ct + grid.coarse_theta_deg);
      const double plo = std::max(0.0, cp - grid.coarse_phi_deg);
      const double phi_hi = std::min(180.0 - grid.phi_deg, cp + grid.coarse_phi_deg);
      detail::CellFit local;
      for (double th : detail::axis(snap(tlo, grid.theta_deg), thi, grid.theta_deg, true))
        for (double ph : detail::axis(snap(plo, grid.phi_deg), phi_hi, grid.phi_deg, true)) {
          const auto f = matcher.fine(th, ph);
          if (detail::better(f, local)) local = f;
        }
      if (detail::better(local, best)) best = local;
      const bool edge = (std::abs(local.theta - tlo) < 1e-9 && tlo > grid.theta_deg + 1e-9) ||
                        (std::abs(local.theta - thi) < 1e-9 && thi < 90.0 - 1e-9) ||
                        (std::abs(local.phi - plo) < 1e-9 && plo > 1e-9) ||
                        (std::abs(local.phi - phi_hi) < 1e-9 && phi_hi < 180.0 - grid.phi_deg - 1e-9);
      if (!edge) break;
      ct = local.theta;
      cp = local.phi;
    }
  }

  const orbit::PassShape shape(matcher.geometry(best.theta, best.phi));
  TrajectoryEstimate e;
  e.theta_max_deg = best.theta;
  e.phi_deg = best.phi;
  e.t_start_s = t0 + best.t_ca_offset - shape.duration() / 2.0;
  e.correlation_score = matcher.normalized_correlation(shape, best.t_ca_offset);
  e.theta_resolution_deg = grid.theta_deg;
  e.phi_resolution_deg = grid.phi_deg;
  e.residual_rms_hz = matcher.residual_rms(shape, best.t_ca_offset);
  require(std::isfinite(e.correlation_score), errc::ambiguity, "correlation score is not finite");
  require(spline.back() - spline.front() >= 0.5 * shape.duration() - 1.0, errc::insufficient_data,
          "record spans less than half of the estimated pass");
  return e;
}

struct DopplerPrediction {
  orbit::DopplerCurve curve;
  double error_bound_hz = 0.0;  // max deviation of neighbouring grid cells over the curve
};

/// Doppler of the estimated pass over [from_s, from_s + horizon_s), clipped to
/// the pass window, one sample per `step_s`.
inline DopplerPrediction predict_next_pass_doppler(const TrajectoryEstimate& est, const orbit::OrbitParams& orbit,
                                                   double from_s, double horizon_s, double step_s = 1.0) {
  require(horizon_s >= 0.0 && step_s > 0.0, errc::domain, "horizon must be >= 0 and step > 0");
  const auto g = est.geometry(orbit);
  const orbit::PassShape shape(g);
  DopplerPrediction out;
  const double lo = std::max(from_s, shape.t_start());
  const double hi = std::min(from_s + horizon_s, shape.t_end());
  for (double t = lo; t < hi; t += step_s) out.curve.times_s.push_back(t);
  out.curve = orbit::sample_doppler(g, out.curve.times_s);

  const double dt = std::max(est.theta_resolution_deg, 1e-6), dp = std::max(est.phi_resolution_deg, 1e-6);
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j) {
      const double th = std::clamp(est.theta_max_deg + i * dt, dt, 90.0);
      const double ph = std::clamp(est.phi_deg + j * dp, 0.0, 180.0);
      orbit::PassGeometry n = g;
      n.max_elevation_deg = th;
      n.orbit.inclination_deg = ph;
      const orbit::PassShape ns(n);
      for (std::size_t k = 0; k < out.curve.size(); ++k) {
        const double t = out.curve.times_s[k];
        out.error_bound_hz =
            std::max(out.error_bound_hz, std::abs(ns.doppler(t - shape.t_ca()) - out.curve.doppler_hz[k]));
      }
    }
  return out;
}

}  // namespace cubelora::trajectory
