#pragma once

// Ground-network contact planning over a rotating spherical Earth.
//
// The orbit is circular. At t = 0 the Earth-fixed and inertial frames coincide,
// the ascending node sits at `node_lon_deg` and the satellite is `arg_lat0_deg`
// past it. Visibility is an elevation mask; rise/set instants are refined by
// bisection between time steps, so the schedule is continuous in time.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <istream>
#include <locale>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cubelora/core.hpp"
#include "cubelora/orbit.hpp"

namespace cubelora::netplan {

using Vec3 = std::array<double, 3>;

struct OrbitTrack {
  orbit::OrbitParams orbit;
  double node_lon_deg = 0.0;
  double arg_lat0_deg = 0.0;
};

struct GroundPoint {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
};

/// Longitude wrapped to (-180, 180].
inline double normalize_lon(double lon_deg) {
  double l = std::fmod(lon_deg, 360.0);
  if (l <= -180.0) l += 360.0;
  if (l > 180.0) l -= 360.0;
  return l;
}

namespace detail {

inline Vec3 unit(double lat_rad, double lon_rad) {
  return {std::cos(lat_rad) * std::cos(lon_rad), std::cos(lat_rad) * std::sin(lon_rad), std::sin(lat_rad)};
}

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

}  // namespace detail

/// Earth-fixed satellite position, metres.
inline Vec3 satellite_position(const OrbitTrack& track, double t) {
  const double r = constants::earth_radius + track.orbit.altitude_m;
  const double u = deg2rad(track.arg_lat0_deg) + orbit::mean_motion(track.orbit) * t;
  const double inc = deg2rad(track.orbit.inclination_deg);
  // node longitude drifts west with the Earth's rotation
  const double node = deg2rad(track.node_lon_deg) - constants::earth_rotation_rate * t;
  const double cu = std::cos(u), su = std::sin(u);
  const double cn = std::cos(node), sn = std::sin(node);
  return {r * (cn * cu - sn * su * std::cos(inc)), r * (sn * cu + cn * su * std::cos(inc)), r * su * std::sin(inc)};
}

inline GroundPoint ground_track(const OrbitTrack& track, double t) {
  track.orbit.validate();
  const Vec3 p = satellite_position(track, t);
  const double r = std::sqrt(detail::dot(p, p));
  return {rad2deg(std::asin(std::clamp(p[2] / r, -1.0, 1.0))), normalize_lon(rad2deg(std::atan2(p[1], p[0])))};
}

enum class Network { ttn, tinygs, satnogs, custom };

inline const char* to_string(Network n) {
  switch (n) {
    case Network::ttn: return "ttn";
    case Network::tinygs: return "tinygs";
    case Network::satnogs: return "satnogs";
    case Network::custom: return "custom";
  }
  return "custom";
}

inline Network network_from_string(const std::string& s) {
  if (s == "ttn") return Network::ttn;
  if (s == "tinygs") return Network::tinygs;
  if (s == "satnogs") return Network::satnogs;
  if (s == "custom") return Network::custom;
  throw error(errc::io, "unknown network tag '" + s + "'");
}

struct Station {
  std::string id;
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double alt_m = 0.0;
  Network network = Network::custom;

  Vec3 position() const {
    const Vec3 u = detail::unit(deg2rad(lat_deg), deg2rad(lon_deg));
    const double r = constants::earth_radius + alt_m;
    return {r * u[0], r * u[1], r * u[2]};
  }
};

struct GroundStationCatalog {
  std::vector<Station> stations;

  std::size_t size() const { return stations.size(); }
  bool empty() const { return stations.empty(); }

  void add(Station s) {
    require(std::abs(s.lat_deg) <= 90.0, errc::domain, "station " + s.id + ": |lat| > 90");
    require(std::isfinite(s.lon_deg) && std::isfinite(s.alt_m), errc::domain, "station " + s.id + ": non-finite position");
    s.lon_deg = normalize_lon(s.lon_deg);
    stations.push_back(std::move(s));
  }

  GroundStationCatalog filter(Network n) const {
    GroundStationCatalog out;
    for (const auto& s : stations)
      if (s.network == n) out.stations.push_back(s);
    return out;
  }
};

// CSV: header `id,lat_deg,lon_deg,alt_m,network`.

inline GroundStationCatalog read_catalog_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), errc::io, "catalog csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "id,lat_deg,lon_deg,alt_m,network", errc::io, "catalog csv: unexpected header '" + line + "'");
  GroundStationCatalog cat;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) f.push_back(cell);
    require(f.size() == 5, errc::io, "catalog csv: malformed row '" + line + "'");
    Station s;
    s.id = f[0];
    try {
      auto num = [&](const std::string& x) {
        std::istringstream is(x);
        is.imbue(std::locale::classic());
        double v = 0.0;
        require(static_cast<bool>(is >> v) && (is >> std::ws).eof(), errc::io, "bad number '" + x + "'");
        return v;
      };
      s.lat_deg = num(f[1]);
      s.lon_deg = num(f[2]);
      s.alt_m = num(f[3]);
    } catch (const error& e) {
      throw error(errc::io, "catalog csv: row '" + line + "': " + e.what());
    }
    s.network = network_from_string(f[4]);
    cat.add(std::move(s));
  }
  return cat;
}

inline void write_catalog_csv(std::ostream& out, const GroundStationCatalog& cat) {
  std::ostringstream buf;
  buf.imbue(std::locale::classic());
  buf.precision(10);
  buf << "id,lat_deg,lon_deg,alt_m,network\n";
  for (const auto& s : cat.stations)
    buf << s.id << ',' << s.lat_deg << ',' << s.lon_deg << ',' << s.alt_m << ',' << to_string(s.network) << '\n';
  out << buf.str();
}

inline double elevation_deg(const Station& station, const Vec3& sat) {
  const Vec3 g = station.position();
  const Vec3 d{sat[0] - g[0], sat[1] - g[1], sat[2] - g[2]};
  const Vec3 up = detail::unit(deg2rad(station.lat_deg), deg2rad(station.lon_deg));
  return rad2deg(std::asin(std::clamp(detail::dot(d, up) / std::sqrt(detail::dot(d, d)), -1.0, 1.0)));
}

inline bool visibility(const Station& station, const Vec3& sat, double min_elevation_deg) {
  return elevation_deg(station, sat) >= min_elevation_deg;
}

struct Contact {
  std::string station_id;
  double rise_s = 0.0;
  double set_s = 0.0;

  bool operator==(const Contact&) const = default;
};

struct ContactSchedule {
  double window_s = 0.0;
  std::vector<Contact> contacts;  // sorted by (rise, station id)

  /// Union of all contacts, sorted and disjoint.
  std::vector<std::pair<double, double>> merged() const {
    std::vector<std::pair<double, double>> iv;
    iv.reserve(contacts.size());
    for (const auto& c : contacts) iv.emplace_back(c.rise_s, c.set_s);
    std::sort(iv.begin(), iv.end());
    std::vector<std::pair<double, double>> out;
    for (const auto& i : iv) {
      if (!out.empty() && i.first <= out.back().second)
        out.back().second = std::max(out.back().second, i.second);
      else
        out.push_back(i);
    }
    return out;
  }
};

struct ScheduleOptions {
  double window_s = 86400.0;
  double step_s = 10.0;
  double min_elevation_deg = 10.0;

  void validate() const {
    require(window_s > 0.0, errc::domain, "window must be positive");
    require(step_s > 0.0 && step_s <= 10.0, errc::configuration, "time step must lie in (0, 10] s");
    require(min_elevation_deg >= -90.0 && min_elevation_deg <= 90.0, errc::domain, "elevation mask must lie in [-90, 90] deg");
  }
};

namespace detail {

// margin above the mask; sign change brackets a rise or set
inline double margin(const OrbitTrack& track, const Station& s, double t, double mask) {
  return elevation_deg(s, satellite_position(track, t)) - mask;
}

inline double crossing(const OrbitTrack& track, const Station& s, double a, double b, double mask) {
  const bool a_up = margin(track, s, a, mask) >= 0.0;
  for (int i = 0; i < 50 && b - a > 1e-6; ++i) {
    const double m = 0.5 * (a + b);
    if ((margin(track, s, m, mask) >= 0.0) == a_up) a = m;
    else b = m;
  }
  return 0.5 * (a + b);
}

}  // namespace detail

inline ContactSchedule contact_schedule(const OrbitTrack& track, const GroundStationCatalog& catalog,
                                        const ScheduleOptions& opt = {}) {
  track.orbit.validate();
  opt.validate();
  ContactSchedule sched;
  sched.window_s = opt.window_s;
  if (catalog.empty()) return sched;

  const auto n = static_cast<std::size_t>(std::ceil(opt.window_s / opt.step_s));
  std::vector<double> ts(n + 1);
  std::vector<Vec3> sat(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    ts[i] = std::min(opt.window_s, static_cast<double>(i) * opt.step_s);
    sat[i] = satellite_position(track, ts[i]);
  }

  for (const auto& st : catalog.stations) {
    bool up = false;
    double rise = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      const bool v = visibility(st, sat[i], opt.min_elevation_deg);
      if (i == 0) {
        up = v;
        rise = 0.0;
        continue;
      }
      if (v != up) {
        const double tc = detail::crossing(track, st, ts[i - 1], ts[i], opt.min_elevation_deg);
        if (v) rise = tc;
        else if (tc > rise) sched.contacts.push_back({st.id, rise, tc});
        up = v;
      }
    }
    if (up && opt.window_s > rise) sched.contacts.push_back({st.id, rise, opt.window_s});
  }
  std::sort(sched.contacts.begin(), sched.contacts.end(), [](const Contact& a, const Contact& b) {
    if (a.rise_s != b.rise_s) return a.rise_s < b.rise_s;
    if (a.station_id != b.station_id) return a.station_id < b.station_id;
    return a.set_s < b.set_s;
  });
  return sched;
}

struct LatencyStats {
  double window_s = 0.0;
  double coverage = 0.0;
  double p50_s = 0.0;
  double p90_s = 0.0;
  double max_s = 0.0;
  bool no_contacts = false;
  double censored_fraction = 0.0;  // capture instants with no later contact
  std::vector<double> t_s;
  std::vector<double> latency_s;
};

/// Capture instants are uniform over the window (sampled every `sample_step_s`).
/// An instant with no later contact start is censored at `window_s`.
inline LatencyStats latency_stats(const ContactSchedule& schedule, double sample_step_s = 1.0) {
  require(schedule.window_s > 0.0, errc::domain, "window must be positive");
  require(sample_step_s > 0.0, errc::domain, "sample step must be positive");
  for (const auto& c : schedule.contacts)
    require(c.rise_s < c.set_s && c.rise_s >= 0.0 && c.set_s <= schedule.window_s + 1e-9, errc::domain,
            "contact outside the window or empty");

  LatencyStats s;
  s.window_s = schedule.window_s;
  const auto iv = schedule.merged();
  double covered = 0.0;
  for (const auto& [a, b] : iv) covered += b - a;
  s.coverage = covered / schedule.window_s;
  s.no_contacts = iv.empty();

  const auto n = static_cast<std::size_t>(std::ceil(schedule.window_s / sample_step_s));
  s.t_s.reserve(n);
  s.latency_s.reserve(n);
  std::size_t j = 0, censored = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * sample_step_s;
    while (j < iv.size() && iv[j].second <= t) ++j;
    double lat = schedule.window_s;
    if (j < iv.size()) lat = std::max(0.0, iv[j].first - t);
    else ++censored;
    s.t_s.push_back(t);
    s.latency_s.push_back(lat);
  }
  s.censored_fraction = static_cast<double>(censored) / static_cast<double>(n);

  std::vector<double> sorted = s.latency_s;
  std::sort(sorted.begin(), sorted.end());
  auto pct = [&](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  s.p50_s = pct(0.5);
  s.p90_s = pct(0.9);
  s.max_s = sorted.back();
  return s;
}

inline nlohmann::json to_json(const LatencyStats& s) {
  return {{"window_s", s.window_s},     {"coverage", s.coverage},
          {"latency_p50_s", s.p50_s},   {"latency_p90_s", s.p90_s},
          {"latency_max_s", s.max_s},   {"no_contacts", s.no_contacts},
          {"censored_fraction", s.censored_fraction}};
}

// CSV: header `t_s,latency_s`.
inline void write_latency_csv(std::ostream& out, const LatencyStats& s) {
  std::ostringstream buf;
  buf.imbue(std::locale::classic());
  buf.precision(12);
  buf << "t_s,latency_s\n";
  for (std::size_t i = 0; i < s.t_s.size(); ++i) buf << s.t_s[i] << ',' << s.latency_s[i] << '\n';
  out << buf.str();
}

/// Independent check: fraction of whole seconds in the window at which any
/// station sees the satellite.
inline double brute_force_coverage(const OrbitTrack& track, const GroundStationCatalog& catalog, double window_s,
                                   double min_elevation_deg) {
  const auto n = static_cast<std::size_t>(std::floor(window_s));
  require(n > 0, errc::domain, "window shorter than one second");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 sat = satellite_position(track, static_cast<double>(i));
    for (const auto& s : catalog.stations)
      if (visibility(s, sat, min_elevation_deg)) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace cubelora::netplan
