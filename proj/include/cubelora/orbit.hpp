#pragma once

// Circular-LEO pass geometry over a spherical Earth.
//
// A pass is the arc of a great circle traced by the sub-satellite point in the
// Earth-fixed frame. The ground station sits at angular distance gamma from that
// circle; gamma is fixed by the maximum elevation of the pass. The arc is swept
// at the ground-track rate w_F = w_sat - w_earth * cos(inclination), which is
// where inclination shapes the Doppler curve. Range and Doppler are symmetric /
// antisymmetric about the closest-approach time t_ca.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <locale>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cubelora/core.hpp"

namespace cubelora::orbit {

struct OrbitParams {
  double altitude_m = 525e3;
  double inclination_deg = 97.52;
  double carrier_hz = 915.6e6;

  void validate() const {
    require(altitude_m >= 300e3 && altitude_m <= 2000e3, errc::domain,
            "altitude must lie in [300 km, 2000 km]");
    require(inclination_deg >= 0.0 && inclination_deg <= 180.0, errc::domain,
            "inclination must lie in [0, 180] deg");
    require(carrier_hz > 0.0, errc::domain, "carrier frequency must be positive");
  }
};

struct PassGeometry {
  OrbitParams orbit;
  double max_elevation_deg = 90.0;
  double t_start_s = 0.0;  // satellite at the horizon

  void validate() const {
    orbit.validate();
    require(max_elevation_deg > 0.0 && max_elevation_deg <= 90.0, errc::domain,
            "max elevation must lie in (0, 90] deg");
  }
};

struct DopplerCurve {
  std::vector<double> times_s;
  std::vector<double> doppler_hz;

  std::size_t size() const { return times_s.size(); }
  bool empty() const { return times_s.empty(); }

  void validate() const {
    require(times_s.size() == doppler_hz.size(), errc::framing,
            "doppler curve: time and value lengths differ");
    for (std::size_t i = 1; i < times_s.size(); ++i)
      require(times_s[i] > times_s[i - 1], errc::domain,
              "doppler curve: times must be strictly increasing");
  }
};

/// Speed of a circular orbit at `altitude_m` (no range check; h = 0 is the
/// surface-grazing limit).
inline double circular_velocity(double altitude_m) {
  return std::sqrt(constants::earth_mu / (constants::earth_radius + altitude_m));
}

inline double orbital_velocity(const OrbitParams& orbit) {
  orbit.validate();
  return circular_velocity(orbit.altitude_m);
}

inline double orbital_period(const OrbitParams& orbit) {
  return constants::two_pi * (constants::earth_radius + orbit.altitude_m) / orbital_velocity(orbit);
}

/// Inertial angular rate of the orbit, rad/s.
inline double mean_motion(const OrbitParams& orbit) {
  const double r = constants::earth_radius + orbit.altitude_m;
  return std::sqrt(constants::earth_mu / (r * r * r));
}

/// Angular rate of the sub-satellite point across the rotating Earth.
inline double ground_track_rate(const OrbitParams& orbit) {
  return mean_motion(orbit) - constants::earth_rotation_rate * std::cos(deg2rad(orbit.inclination_deg));
}

/// Precomputed closed-form pass. Functions of `tau` take time relative to t_ca
/// and are valid for any tau (beyond the horizon the geometry just continues);
/// the free functions below enforce the pass window.
class PassShape {
 public:
  explicit PassShape(const PassGeometry& pass) {
    pass.validate();
    const double R = constants::earth_radius;
    r_ = R + pass.orbit.altitude_m;
    rate_ = ground_track_rate(pass.orbit);
    carrier_ = pass.orbit.carrier_hz;
    const double el = deg2rad(pass.max_elevation_deg);
    const double gamma = std::acos(R * std::cos(el) / r_) - el;
    cos_gamma_ = std::cos(gamma);
    const double half_angle = std::acos(R / (r_ * cos_gamma_));
    half_duration_ = half_angle / rate_;
    t_ca_ = pass.t_start_s + half_duration_;
  }

  double t_ca() const { return t_ca_; }
  double t_start() const { return t_ca_ - half_duration_; }
  double t_end() const { return t_ca_ + half_duration_; }
  double duration() const { return 2.0 * half_duration_; }
  double track_rate() const { return rate_; }

  double range(double tau) const {
    const double R = constants::earth_radius;
    return std::sqrt(R * R + r_ * r_ - 2.0 * R * r_ * std::cos(rate_ * tau) * cos_gamma_);
  }

  double range_rate(double tau) const {
    const double R = constants::earth_radius;
    return R * r_ * cos_gamma_ * rate_ * std::sin(rate_ * tau) / range(tau);
  }

  double doppler(double tau) const {
    return -carrier_ / constants::speed_of_light * range_rate(tau);
  }

  double elevation_deg(double tau) const {
    const double c = std::cos(rate_ * tau) * cos_gamma_;
    return rad2deg(std::asin((r_ * c - constants::earth_radius) / range(tau)));
  }

 private:
  double r_ = 0.0;
  double rate_ = 0.0;
  double carrier_ = 0.0;
  double cos_gamma_ = 1.0;
  double half_duration_ = 0.0;
  double t_ca_ = 0.0;
};

namespace detail {
inline void require_in_pass(const PassShape& shape, double t) {
  // tolerate round-off at the horizon
  const double eps = 1e-9 * std::max(1.0, std::abs(shape.t_end()));
  require(t >= shape.t_start() - eps && t <= shape.t_end() + eps, errc::out_of_range,
          "time " + std::to_string(t) + " s is outside the pass");
}
}  // namespace detail

inline double pass_duration(const PassGeometry& pass) { return PassShape(pass).duration(); }
inline double closest_approach_time(const PassGeometry& pass) { return PassShape(pass).t_ca(); }

inline double slant_range(const PassGeometry& pass, double t) {
  const PassShape shape(pass);
  detail::require_in_pass(shape, t);
  return shape.range(t - shape.t_ca());
}

inline double elevation_deg(const PassGeometry& pass, double t) {
  const PassShape shape(pass);
  detail::require_in_pass(shape, t);
  return shape.elevation_deg(t - shape.t_ca());
}

/// Doppler shift in Hz; positive while the satellite approaches.
inline double doppler(const PassGeometry& pass, double t) {
  const PassShape shape(pass);
  detail::require_in_pass(shape, t);
  return shape.doppler(t - shape.t_ca());
}

/// Doppler at arbitrary in-pass instants.
inline DopplerCurve sample_doppler(const PassGeometry& pass, std::span<const double> times_s) {
  const PassShape shape(pass);
  DopplerCurve curve;
  curve.times_s.assign(times_s.begin(), times_s.end());
  curve.doppler_hz.reserve(times_s.size());
  for (double t : times_s) {
    detail::require_in_pass(shape, t);
    curve.doppler_hz.push_back(shape.doppler(t - shape.t_ca()));
  }
  curve.validate();
  return curve;
}

/// Doppler sampled at t_start, t_start + period, ... up to the end of the pass.
inline DopplerCurve emulate_doppler_curve(const PassGeometry& pass, double sample_period_s) {
  require(sample_period_s > 0.0, errc::domain, "sample period must be positive");
  const PassShape shape(pass);
  DopplerCurve curve;
  const auto n = static_cast<std::size_t>(std::floor(shape.duration() / sample_period_s)) + 1;
  curve.times_s.reserve(n);
  curve.doppler_hz.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = shape.t_start() + static_cast<double>(k) * sample_period_s;
    curve.times_s.push_back(t);
    curve.doppler_hz.push_back(shape.doppler(t - shape.t_ca()));
  }
  return curve;
}

/// Free-space path loss 20*log10(4*pi*d*f/c).
inline double path_loss_db(double range_m, double carrier_hz) {
  require(range_m > 0.0, errc::domain, "range must be positive");
  require(carrier_hz > 0.0, errc::domain, "frequency must be positive");
  return 20.0 * std::log10(4.0 * constants::pi * range_m * carrier_hz / constants::speed_of_light);
}

/// Loss equivalent to the time-averaged received power over the whole pass.
inline double pass_average_path_loss_db(const PassGeometry& pass, std::size_t samples = 20001) {
  require(samples >= 2, errc::domain, "need at least two samples");
  const PassShape shape(pass);
  double mean_gain = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double tau = -shape.duration() / 2.0 + shape.duration() * static_cast<double>(i) / static_cast<double>(samples - 1);
    mean_gain += std::pow(10.0, -path_loss_db(shape.range(tau), pass.orbit.carrier_hz) / 10.0);
  }
  return -10.0 * std::log10(mean_gain / static_cast<double>(samples));
}

// CSV: header `t_s,doppler_hz`, one row per sample.

inline void write_doppler_csv(std::ostream& out, const DopplerCurve& curve) {
  curve.validate();
  std::ostringstream buf;
  buf.imbue(std::locale::classic());
  buf.precision(17);
  buf << "t_s,doppler_hz\n";
  for (std::size_t i = 0; i < curve.size(); ++i) buf << curve.times_s[i] << ',' << curve.doppler_hz[i] << '\n';
  out << buf.str();
}

inline DopplerCurve read_doppler_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), errc::io, "doppler csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "t_s,doppler_hz", errc::io, "doppler csv: unexpected header '" + line + "'");
  DopplerCurve curve;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    row.imbue(std::locale::classic());
    double t = 0.0, f = 0.0;
    char comma = 0;
    require(static_cast<bool>(row >> t >> comma >> f) && comma == ',', errc::io,
            "doppler csv: malformed row '" + line + "'");
    curve.times_s.push_back(t);
    curve.doppler_hz.push_back(f);
  }
  curve.validate();
  return curve;
}

}  // namespace cubelora::orbit
