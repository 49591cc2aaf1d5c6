#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cubelora/spline.hpp"
#include "cubelora/trajectory.hpp"

using namespace cubelora;
using namespace cubelora::trajectory;

namespace {

orbit::PassGeometry pass(double theta, double phi, double t_start = 0.0) {
  orbit::PassGeometry p;
  p.max_elevation_deg = theta;
  p.orbit.inclination_deg = phi;
  p.t_start_s = t_start;
  return p;
}

}  // namespace

TEST(Spline, InterpolatesKnotsAndLines) {
  const auto c = orbit::emulate_doppler_curve(pass(90.0, 97.52), 30.0);
  const auto s = spline_doppler(c);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(s(c.times_s[i]), c.doppler_hz[i], 1e-9);

  orbit::DopplerCurve line;
  for (int i = 0; i < 7; ++i) {
    line.times_s.push_back(3.0 * i);
    line.doppler_hz.push_back(-5.0 + 2.5 * 3.0 * i);
  }
  const auto l = spline_doppler(line);
  for (double t = 0.0; t <= 18.0; t += 0.37) EXPECT_NEAR(l(t), -5.0 + 2.5 * t, 1e-9);
  EXPECT_THROW(l(18.5), error);

  orbit::DopplerCurve three{{0.0, 1.0, 2.0}, {1.0, 2.0, 3.0}};
  try {
    spline_doppler(three);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::insufficient_data);
  }
}

TEST(Spline, ZenithPassAtThirtySeconds) {
  const auto p = pass(90.0, 97.52);
  const auto c = orbit::emulate_doppler_curve(p, 30.0);
  const auto s = spline_doppler(c);
  double peak = 0.0, worst = 0.0;
  for (double t = c.times_s.front(); t <= c.times_s.back(); t += 0.25) {
    const double truth = orbit::doppler(p, t);
    peak = std::max(peak, std::abs(truth));
    worst = std::max(worst, std::abs(s(t) - truth));
  }
  EXPECT_LT(worst, 0.05 * peak);
}

TEST(Trajectory, NoiseFreeRecoveryWithinOneCell) {
  const auto truth = pass(90.0, 97.52, 12.0);
  const auto e = estimate_trajectory(orbit::emulate_doppler_curve(truth, 30.0), truth.orbit);
  EXPECT_LE(std::abs(e.theta_max_deg - 90.0), e.theta_resolution_deg);
  EXPECT_LE(std::abs(e.phi_deg - 97.52), e.phi_resolution_deg);
  EXPECT_NEAR(e.t_start_s, 12.0, 1.0);
  EXPECT_GE(e.correlation_score, 0.999);
  EXPECT_LE(e.correlation_score, 1.0 + 1e-12);
  // on the search grid
  EXPECT_NEAR(std::remainder(e.theta_max_deg, 0.25), 0.0, 1e-9);
  EXPECT_NEAR(std::remainder(e.phi_deg, 0.5), 0.0, 1e-9);
}

TEST(Trajectory, ShiftEquivariance) {
  const auto truth = pass(55.0, 40.0, 5.0);
  auto c = orbit::emulate_doppler_curve(truth, 10.0);
  const auto a = estimate_trajectory(c, truth.orbit);
  for (auto& t : c.times_s) t += 60.0;
  const auto b = estimate_trajectory(c, truth.orbit);
  EXPECT_EQ(a.theta_max_deg, b.theta_max_deg);
  EXPECT_EQ(a.phi_deg, b.phi_deg);
  EXPECT_NEAR(b.t_start_s - a.t_start_s, 60.0, 1e-6);
}

TEST(Trajectory, NormalizedScoreIsScaleInvariant) {
  const auto truth = pass(70.0, 120.0);
  auto c = orbit::emulate_doppler_curve(truth, 10.0);
  const auto a = estimate_trajectory(c, truth.orbit, {}, ScoreMode::normalized);
  for (auto& d : c.doppler_hz) d *= 2.5;
  const auto b = estimate_trajectory(c, truth.orbit, {}, ScoreMode::normalized);
  EXPECT_EQ(a.theta_max_deg, b.theta_max_deg);
  EXPECT_EQ(a.phi_deg, b.phi_deg);
  EXPECT_NEAR(a.t_start_s, b.t_start_s, 1e-4);
  EXPECT_NEAR(a.correlation_score, b.correlation_score, 1e-9);
  EXPECT_GE(a.correlation_score, 0.999);
}

TEST(Trajectory, FinerGridDoesNotIncreaseMisfit) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> th(35.0, 85.0), ph(15.0, 165.0);
  for (int i = 0; i < 3; ++i) {
    const auto truth = pass(th(rng), ph(rng));
    const auto c = orbit::emulate_doppler_curve(truth, 10.0);
    GridSpec coarse;
    coarse.theta_deg = 1.0;
    coarse.phi_deg = 2.0;
    const auto a = estimate_trajectory(c, truth.orbit, coarse);
    const auto b = estimate_trajectory(c, truth.orbit);
    // the fine grid contains the coarse one, so the misfit cannot grow
    EXPECT_LE(b.residual_rms_hz, a.residual_rms_hz + 1e-6);
    EXPECT_LE(std::abs(b.theta_max_deg - truth.max_elevation_deg), coarse.theta_deg);
    EXPECT_LE(std::abs(b.phi_deg - truth.orbit.inclination_deg), coarse.phi_deg);
  }
}

TEST(Trajectory, FlatRecordIsAmbiguous) {
  orbit::DopplerCurve flat;
  for (int i = 0; i < 40; ++i) {
    flat.times_s.push_back(10.0 * i);
    flat.doppler_hz.push_back(0.0);
  }
  try {
    estimate_trajectory(flat, {});
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::ambiguity);
  }
}

TEST(Trajectory, JsonRoundTrip) {
  TrajectoryEstimate e{61.25, 97.5, 12.5, 0.9995, 0.25, 0.5, 3.0};
  const auto back = estimate_from_json(nlohmann::json::parse(to_json(e).dump()));
  EXPECT_EQ(back.theta_max_deg, 61.25);
  EXPECT_EQ(back.phi_deg, 97.5);
  EXPECT_EQ(back.t_start_s, 12.5);
  EXPECT_EQ(back.phi_resolution_deg, 0.5);
}

TEST(Prediction, MatchesTruthAndBoundsNeighbours) {
  const auto truth = pass(60.0, 97.5, 0.0);
  const auto e = estimate_trajectory(orbit::emulate_doppler_curve(truth, 10.0), truth.orbit);
  const auto pred = predict_next_pass_doppler(e, truth.orbit, 0.0, 1e4);
  ASSERT_FALSE(pred.curve.empty());
  for (std::size_t i = 0; i < pred.curve.size(); ++i) {
    const double t = pred.curve.times_s[i];
    if (t < orbit::PassShape(truth).t_start() || t > orbit::PassShape(truth).t_end()) continue;
    EXPECT_NEAR(pred.curve.doppler_hz[i], orbit::doppler(truth, t), 24.4140625) << t;
  }
  EXPECT_TRUE(predict_next_pass_doppler(e, truth.orbit, 100.0, 0.0).curve.empty());

  // estimate one cell off, same closest approach: its error stays inside the reported bound
  TrajectoryEstimate off = e;
  off.theta_max_deg = 60.25;
  off.phi_deg = 98.0;
  const double tca = orbit::PassShape(truth).t_ca();
  off.t_start_s = tca - orbit::PassShape(off.geometry(truth.orbit)).duration() / 2.0;
  const auto p2 = predict_next_pass_doppler(off, truth.orbit, tca - 200.0, 400.0);
  EXPECT_GT(p2.error_bound_hz, 0.0);
  for (std::size_t i = 0; i < p2.curve.size(); ++i)
    EXPECT_LE(std::abs(p2.curve.doppler_hz[i] - orbit::PassShape(truth).doppler(p2.curve.times_s[i] - tca)),
              p2.error_bound_hz + 1e-9);
}
