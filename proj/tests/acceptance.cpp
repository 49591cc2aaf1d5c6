// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned here.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cubelora/channel.hpp"
#include "cubelora/detect.hpp"
#include "cubelora/errmodel.hpp"
#include "cubelora/netplan.hpp"
#include "cubelora/orbit.hpp"
#include "cubelora/phy.hpp"
#include "cubelora/trajectory.hpp"

using namespace cubelora;
using phy::cplx;
using phy::LoRaParams;

namespace {

int failures = 0;

void report(const char* name, bool pass, const std::string& detail, double seconds) {
  std::printf("%s  %-22s %s  (%.1f s)\n", pass ? "PASS" : "FAIL", name, detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++failures;
}

void criterion(const char* name, const std::function<bool(std::string&)>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = false;
  try {
    pass = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  report(name, pass, detail, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string f(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

std::vector<cplx> header_burst(const LoRaParams& p, double doppler_hz, double snr_db, std::uint64_t seed) {
  auto x = phy::modulate_symbols(detect::preamble_and_sync(p), p);
  channel::apply_frequency_offset(x, p.sample_rate_hz, doppler_hz);
  channel::add_awgn(x, snr_db, seed, p.sample_rate_hz, p.bw_hz);
  return x;
}

double mean_db(const std::vector<double>& db) {
  double acc = 0.0;
  for (double v : db) acc += std::pow(10.0, v / 10.0);
  return 10.0 * std::log10(acc / static_cast<double>(db.size()));
}

netplan::GroundStationCatalog fixture(const std::string& name) {
  std::ifstream in(std::string(CUBELORA_DATA_DIR) + "/catalogs/" + name + ".csv");
  return netplan::read_catalog_csv(in);
}

// ---- criteria ---------------------------------------------------------------

bool modem(std::string& d) {
  std::size_t errors = 0, symbols = 0;
  for (int sf = 7; sf <= 12; ++sf) {
    LoRaParams p;
    p.sf = sf;
    p.validate();
    phy::Demodulator dem(p);
    for (std::uint32_t b = 0; b < p.chips(); ++b) {
      const auto x = phy::to_double(phy::modulate_symbol(b, p).samples);
      errors += dem.demodulate(x).bin != b;
      ++symbols;
    }
  }
  d = f("%zu errors over %zu symbols (SF7-12, every bin)", errors, symbols);
  return errors == 0;
}

bool ser(std::string& d) {
  LoRaParams p;
  p.sample_rate_hz = p.bw_hz;  // noise is referenced to bw; os = 1 only saves time
  const std::size_t packets = 3907;  // x 256 symbols >= 1e6
  std::mt19937_64 rng(11);
  std::vector<errmodel::ErrorTrace> traces;
  traces.reserve(packets);
  channel::ChannelConfig cfg;
  cfg.snr_db = -10.0;
  cfg.doppler = false;
  for (std::size_t i = 0; i < packets; ++i) {
    cfg.seed = 500000 + i;
    traces.push_back(errmodel::simulate_packet_errors(cfg, p, errmodel::random_payload(256, rng)));
  }
  const double s = errmodel::measure_ser(traces);
  d = f("SER %.3g over %zu symbols at -10 dB (target 1e-4, x/÷3)", s, errmodel::symbol_count(traces));
  return s >= 1e-4 / 3.0 && s <= 3e-4;
}

struct WidebandSetup {
  LoRaParams p;
  detect::CorrelatorConfig wide;
  double th_narrow = 0.0;

  WidebandSetup() {
    wide.narrow = p;
    th_narrow = detect::calibrate_threshold(wide, detect::DetectorKind::narrowband, 0.01, 1000, 1);
    wide.detection_threshold = detect::calibrate_threshold(wide, detect::DetectorKind::wideband, 0.01, 1000, 2);
  }
};

const WidebandSetup& wb() {
  static const WidebandSetup s;
  return s;
}

bool wideband_penalty(std::string& d) {
  const auto& s = wb();
  std::vector<double> n, w;
  for (int t = 0; t < 300; ++t) {
    const auto x = header_burst(s.p, 0.0, -10.0, 10000 + t);
    n.push_back(detect::detect_narrowband(x, s.p, s.th_narrow).detection_snr_db);
    w.push_back(detect::detect_wideband(x, s.wide, 0, false).detection_snr_db);
  }
  const double pen = mean_db(n) - mean_db(w);
  d = f("zero-offset penalty %.2f dB (m=%d; target 3 +/- 1 dB)", pen, s.wide.ratio());
  return std::abs(pen - 3.0) <= 1.0;
}

// largest offset with detection rate >= 0.9, located within bw/4
double detection_limit(bool wide, double snr_db) {
  const auto& s = wb();
  auto rate_ok = [&](double fo) {
    const int trials = 50;
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
      const auto x = header_burst(s.p, fo, snr_db, 20000 + t + static_cast<std::uint64_t>(fo));
      const auto r = wide ? detect::detect_wideband(x, s.wide, 0, false) : detect::detect_narrowband(x, s.p, s.th_narrow);
      hits += r.detected && std::abs(r.coarse_doppler_hz - fo) < s.p.bw_hz / 4.0;
    }
    return hits >= 0.9 * trials;
  };
  const double step = s.p.bw_hz / 16.0;
  double lo = 0.0;
  while (rate_ok(lo + step)) lo += step;
  double hi = lo + step;
  while (hi - lo > 50.0) {
    const double mid = 0.5 * (lo + hi);
    (rate_ok(mid) ? lo : hi) = mid;
  }
  return lo;
}

bool wideband_range(std::string& d) {
  const double n = detection_limit(false, -10.0), w = detection_limit(true, -10.0);
  d = f("max Doppler narrow %.0f Hz, wide %.0f Hz, ratio %.2f (target >= 4) at -10 dB", n, w, w / n);
  return w >= 4.0 * n;
}

bool wideband_advantage(std::string& d) {
  const auto& s = wb();
  auto advantage = [&](double snr_db) {
    std::vector<double> n, w;
    for (int t = 0; t < 200; ++t) {
      const auto x = header_burst(s.p, s.p.bw_hz, snr_db, 30000 + t);
      n.push_back(detect::detect_narrowband(x, s.p, s.th_narrow).detection_snr_db);
      w.push_back(detect::detect_wideband(x, s.wide, 0, false).detection_snr_db);
    }
    return mean_db(w) - mean_db(n);
  };
  const double a0 = advantage(0.0), a10 = advantage(-10.0);
  d = f("advantage at Doppler = bw: %.1f dB at 0 dB input (%.1f dB at -10 dB); target >= 10", a0, a10);
  return a0 >= 10.0;
}

bool fine_estimator(std::string& d) {
  const auto& s = wb();
  const double truth = 1234.5;
  double full = 0.0, sync = 0.0;
  const int trials = 1000;
  int missed = 0;
  for (int t = 0; t < trials; ++t) {
    const auto x = header_burst(s.p, truth, -10.0, 40000 + t);
    const auto r = detect::detect_wideband(x, s.wide);
    if (!r.detected) {
      ++missed;
      continue;
    }
    full += std::pow(r.fine_doppler_hz - truth, 2);
    sync += std::pow(detect::estimate_doppler_sync_only(x, s.p, 0, r.coarse_doppler_hz) - truth, 2);
  }
  const double n = trials - missed;
  const double sf = std::sqrt(full / n), ss = std::sqrt(sync / n);
  d = f("std preamble+SYNC %.2f Hz, SYNC-only %.2f Hz, ratio %.1f (target >= 4), %d/%d detected at -10 dB", sf, ss, ss / sf,
        trials - missed, trials);
  return missed < trials && ss >= 4.0 * sf;
}

bool trajectory_recovery(std::string& d) {
  const orbit::OrbitParams o;
  const double sigma = detect::fine_bin_hz(LoRaParams{});
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> theta(30.0, 90.0), phi(10.0, 170.0), t0(0.0, 100.0);
  std::normal_distribution<double> noise(0.0, sigma);
  double et = 0.0, ep = 0.0, mt = 0.0, mp = 0.0;
  const int passes = 50;
  for (int i = 0; i < passes; ++i) {
    orbit::PassGeometry g;
    g.orbit = o;
    g.max_elevation_deg = theta(rng);
    g.orbit.inclination_deg = phi(rng);
    g.t_start_s = t0(rng);
    auto c = orbit::emulate_doppler_curve(g, 10.0);
    for (auto& v : c.doppler_hz) v += noise(rng);
    const auto e = trajectory::estimate_trajectory(c, o);
    const double dt = e.theta_max_deg - g.max_elevation_deg, dp = e.phi_deg - g.orbit.inclination_deg;
    et += dt * dt;
    ep += dp * dp;
    mt = std::max(mt, std::abs(dt));
    mp = std::max(mp, std::abs(dp));
  }
  const double rt = std::sqrt(et / passes), rp = std::sqrt(ep / passes);
  d = f("RMS error theta_max %.2f deg (<= 0.5), phi %.2f deg (<= 1.2); max %.2f / %.2f; %d passes, sigma %.2f Hz", rt, rp,
        mt, mp, passes, sigma);
  return rt <= 0.5 && rp <= 1.2;
}

bool error_asymmetry(std::string& d) {
  LoRaParams p;
  auto run = [&](double snr_db, bool doppler, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<errmodel::ErrorTrace> out;
    channel::ChannelConfig cfg;
    cfg.snr_db = snr_db;
    cfg.doppler = doppler;
    const orbit::PassShape shape(cfg.pass);
    cfg.packet_start_s = shape.t_ca() - phy::packet_airtime(p, 256) / 2.0;
    for (int i = 0; i < 50; ++i) {
      cfg.seed = seed * 1000 + i;
      out.push_back(errmodel::simulate_packet_errors(cfg, p, errmodel::random_payload(256, rng)));
    }
    return out;
  };
  const auto dop = run(-10.0, true, 61);
  const auto fit_d = errmodel::fit_bin_offset_distribution(dop);
  const auto bits_d = errmodel::bit_flip_probabilities(dop);
  bool monotone = true;
  for (std::size_t i = 1; i < bits_d.size(); ++i) monotone = monotone && bits_d[i] > bits_d[i - 1];

  const auto noi = run(-16.0, false, 62);
  const auto fit_n = errmodel::fit_bin_offset_distribution(noi);
  const auto bits_n = errmodel::bit_flip_probabilities(noi);
  const auto [lo, hi] = std::minmax_element(bits_n.begin(), bits_n.end());

  d = f("Doppler: LSB %.3g -> MSB %.3g monotone=%d, fit GOF p %.2f LR p %.2g accepted=%d; noise: LR p %.2f accepted=%d, "
        "bit spread x%.2f",
        bits_d.back(), bits_d.front(), monotone, fit_d.p_value, fit_d.lr_p_value, fit_d.exponential_accepted,
        fit_n.lr_p_value, fit_n.exponential_accepted, *hi / *lo);
  return monotone && fit_d.exponential_accepted && !fit_n.exponential_accepted && *hi / *lo < 2.0;
}

bool quantization(std::string& d) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  bool ok = true;
  std::string parts;
  for (int k : {1, 2, 4, 8}) {
    double mae = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
      const double x = u(rng);
      mae += std::abs(x - errmodel::dequantize(errmodel::quantize(x, k), k));
    }
    mae /= n;
    const double law = 1.0 / std::ldexp(1.0, k + 1);
    const double rel = mae / law - 1.0;
    ok = ok && std::abs(rel) <= 0.02;
    parts += f("k=%d %+.2f%% ", k, 100.0 * rel);
  }
  d = parts + "(MAE vs 1/2^(k+1), tolerance 2%, 1e6 draws)";
  return ok;
}

bool coverage(std::string& d) {
  const netplan::OrbitTrack track;
  netplan::ScheduleOptions opt;  // one day, 10 s steps, 10 deg mask
  double worst = 0.0;
  std::vector<netplan::LatencyStats> st;
  for (const char* n : {"ttn", "tinygs", "satnogs"}) {
    const auto cat = fixture(n);
    st.push_back(netplan::latency_stats(netplan::contact_schedule(track, cat, opt)));
    worst = std::max(worst, std::abs(st.back().coverage - netplan::brute_force_coverage(track, cat, opt.window_s, opt.min_elevation_deg)));
  }
  const bool ordered = st[0].coverage > st[1].coverage && st[1].coverage > st[2].coverage && st[0].p90_s < st[1].p90_s &&
                       st[1].p90_s < st[2].p90_s;

  // grow the sparsest catalog one station at a time
  const auto full = fixture("satnogs");
  netplan::GroundStationCatalog cat;
  bool monotone = true;
  double cov = -1.0, p90 = 1e300, mx = 1e300;
  for (const auto& s : full.stations) {
    cat.stations.push_back(s);
    const auto l = netplan::latency_stats(netplan::contact_schedule(track, cat, opt));
    monotone = monotone && l.coverage >= cov && l.p90_s <= p90 && l.max_s <= mx;
    cov = l.coverage, p90 = l.p90_s, mx = l.max_s;
  }
  d = f("coverage ttn %.2f%% tinygs %.2f%% satnogs %.2f%%; p90 %.0f/%.0f/%.0f s; max |schedule - brute force| %.3f pp; "
        "ordered=%d, monotone addition=%d",
        100 * st[0].coverage, 100 * st[1].coverage, 100 * st[2].coverage, st[0].p90_s, st[1].p90_s, st[2].p90_s, 100 * worst,
        ordered, monotone);
  return worst <= 0.005 && ordered && monotone;
}

bool determinism(std::string& d) {
  bool ok = true;
  LoRaParams p;
  std::mt19937_64 ra(3), rb(3);
  channel::ChannelConfig cfg;
  cfg.seed = 77;
  cfg.packet_start_s = 200.0;
  const auto ta = errmodel::simulate_packet_errors(cfg, p, errmodel::random_payload(64, ra));
  const auto tb = errmodel::simulate_packet_errors(cfg, p, errmodel::random_payload(64, rb));
  ok = ok && ta.symbols == tb.symbols;

  const auto x1 = phy::modulate_symbols(detect::preamble_and_sync(p), p);
  auto n1 = x1, n2 = x1;
  channel::add_awgn(n1, -5.0, 9, p.sample_rate_hz, p.bw_hz);
  channel::add_awgn(n2, -5.0, 9, p.sample_rate_hz, p.bw_hz);
  ok = ok && n1 == n2;

  detect::CorrelatorConfig c;
  ok = ok && detect::calibrate_threshold(c, detect::DetectorKind::wideband, 0.01, 200, 4) ==
                 detect::calibrate_threshold(c, detect::DetectorKind::wideband, 0.01, 200, 4);

  std::vector<errmodel::ErrorTrace> traces(40, ta);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    cfg.seed = 1000 + i;
    cfg.snr_db = -12.0;
    traces[i] = errmodel::simulate_packet_errors(cfg, p, errmodel::random_payload(256, ra));
  }
  const auto fit = errmodel::fit_bin_offset_distribution(traces);
  ok = ok && errmodel::sample_bit_masks(fit, 2048, 20, 8)[19].flips == errmodel::sample_bit_masks(fit, 2048, 20, 8)[19].flips;
  ok = ok && errmodel::sample_bit_masks(traces, 2048, 20, 8)[7].flips == errmodel::sample_bit_masks(traces, 2048, 20, 8)[7].flips;

  orbit::PassGeometry g;
  g.max_elevation_deg = 55.0;
  auto curve = orbit::emulate_doppler_curve(g, 10.0);
  std::mt19937_64 rn(1);
  std::normal_distribution<double> nz(0.0, 24.0);
  for (auto& v : curve.doppler_hz) v += nz(rn);
  const auto e1 = trajectory::estimate_trajectory(curve, g.orbit), e2 = trajectory::estimate_trajectory(curve, g.orbit);
  ok = ok && trajectory::to_json(e1) == trajectory::to_json(e2);

  d = "noise, packet traces, threshold calibration, mask sampling, trajectory fit repeat bit-for-bit under fixed seeds";
  return ok;
}

}  // namespace

int main() {
  std::printf("cubelora acceptance suite\n");
  criterion("modem-roundtrip", modem);
  criterion("ser-calibration", ser);
  criterion("wideband-penalty", wideband_penalty);
  criterion("wideband-range", wideband_range);
  criterion("wideband-advantage", wideband_advantage);
  criterion("fine-doppler", fine_estimator);
  criterion("trajectory", trajectory_recovery);
  criterion("error-asymmetry", error_asymmetry);
  criterion("quantization", quantization);
  criterion("coverage", coverage);
  criterion("determinism", determinism);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
