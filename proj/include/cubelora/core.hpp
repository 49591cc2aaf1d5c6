#pragma once

#include <numbers>
#include <stdexcept>
#include <string>

namespace cubelora {

namespace constants {
inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double speed_of_light = 299792458.0;   // m/s
inline constexpr double earth_mu = 3.986004418e14;      // m^3/s^2
inline constexpr double earth_radius = 6.371e6;         // m, mean spherical
inline constexpr double earth_rotation_rate = 7.2921159e-5;  // rad/s, sidereal
inline constexpr double boltzmann = 1.380649e-23;       // J/K
inline constexpr double reference_temperature = 290.0;  // K
}  // namespace constants

inline constexpr double deg2rad(double deg) { return deg * constants::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / constants::pi; }

enum class errc {
  domain,            // argument outside its mathematical domain
  out_of_range,      // time outside the pass, index outside a buffer
  framing,           // buffer / bit length mismatch
  configuration,     // inconsistent parameter set
  precondition,      // operation called in the wrong state
  insufficient_data, // too few samples for the requested fit
  ambiguity,         // input does not determine a unique answer
  statistical_power, // too few outcomes for a meaningful statistic
  io,                // file read/write/parse failure
};

inline const char* to_string(errc code) {
  switch (code) {
    case errc::domain: return "domain";
    case errc::out_of_range: return "out_of_range";
    case errc::framing: return "framing";
    case errc::configuration: return "configuration";
    case errc::precondition: return "precondition";
    case errc::insufficient_data: return "insufficient_data";
    case errc::ambiguity: return "ambiguity";
    case errc::statistical_power: return "statistical_power";
    case errc::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library. `code()` tells callers (the CLI maps
/// configuration/domain errors to exit code 1, the rest to 2) what went wrong.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

inline void require(bool ok, errc code, const std::string& what) {
  if (!ok) throw error(code, what);
}

}  // namespace cubelora
