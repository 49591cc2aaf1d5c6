#pragma once

// Natural cubic spline over a Doppler curve (GSL cspline).

#include <memory>
#include <span>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_spline.h>

#include "cubelora/core.hpp"
#include "cubelora/orbit.hpp"

namespace cubelora {

class CubicSpline {
 public:
  CubicSpline(std::span<const double> x, std::span<const double> y) : x_(x.begin(), x.end()), y_(y.begin(), y.end()) {
    require(x.size() == y.size(), errc::framing, "spline: x and y lengths differ");
    require(x.size() >= 4, errc::insufficient_data, "spline needs at least 4 samples");
    for (std::size_t i = 1; i < x.size(); ++i)
      require(x[i] > x[i - 1], errc::domain, "spline: abscissae must be strictly increasing");
    gsl_set_error_handler_off();
    spline_.reset(gsl_spline_alloc(gsl_interp_cspline, x_.size()));
    accel_.reset(gsl_interp_accel_alloc());
    require(spline_ && accel_, errc::io, "spline: allocation failed");
    require(gsl_spline_init(spline_.get(), x_.data(), y_.data(), x_.size()) == GSL_SUCCESS, errc::domain,
            "spline: initialisation failed");
  }

  explicit CubicSpline(const orbit::DopplerCurve& c) : CubicSpline(c.times_s, c.doppler_hz) {}

  double front() const { return x_.front(); }
  double back() const { return x_.back(); }

  /// Value at t; t must lie inside [front, back].
  double operator()(double t) const {
    double v = 0.0;
    require(gsl_spline_eval_e(spline_.get(), t, accel_.get(), &v) == GSL_SUCCESS, errc::out_of_range,
            "spline evaluated outside its knots");
    return v;
  }

 private:
  struct SplineFree {
    void operator()(gsl_spline* s) const { gsl_spline_free(s); }
  };
  struct AccelFree {
    void operator()(gsl_interp_accel* a) const { gsl_interp_accel_free(a); }
  };
  std::vector<double> x_, y_;
  std::unique_ptr<gsl_spline, SplineFree> spline_;
  std::unique_ptr<gsl_interp_accel, AccelFree> accel_;
};

inline CubicSpline spline_doppler(const orbit::DopplerCurve& measured) {
  measured.validate();
  return CubicSpline(measured);
}

}  // namespace cubelora
