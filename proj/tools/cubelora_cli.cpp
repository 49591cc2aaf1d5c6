// cubelora command-line front end.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <locale>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cubelora/channel.hpp"
#include "cubelora/detect.hpp"
#include "cubelora/errmodel.hpp"
#include "cubelora/netplan.hpp"
#include "cubelora/orbit.hpp"
#include "cubelora/phy.hpp"
#include "cubelora/trajectory.hpp"

namespace fs = std::filesystem;
using namespace cubelora;
using nlohmann::json;
using phy::LoRaParams;

namespace {

struct Globals {
  bool json_out = false;
};

struct LinkFlags {
  int sf = 8;
  double bw_hz = 62500.0;
  double sample_rate_hz = 250000.0;
  double carrier_hz = 915.6e6;

  LoRaParams params() const {
    LoRaParams p;
    p.sf = sf;
    p.bw_hz = bw_hz;
    p.sample_rate_hz = sample_rate_hz;
    p.carrier_hz = carrier_hz;
    p.validate();
    return p;
  }
};

struct OrbitFlags {
  double altitude_m = 525e3;
  double inclination_deg = 97.52;

  orbit::OrbitParams params(double carrier_hz) const {
    orbit::OrbitParams o;
    o.altitude_m = altitude_m;
    o.inclination_deg = inclination_deg;
    o.carrier_hz = carrier_hz;
    o.validate();
    return o;
  }
};

void add_link(CLI::App* app, LinkFlags& f) {
  app->add_option("--sf", f.sf, "spreading factor")->capture_default_str();
  app->add_option("--bw-hz", f.bw_hz, "signal bandwidth")->capture_default_str();
  app->add_option("--sample-rate-hz", f.sample_rate_hz, "receiver sample rate")->capture_default_str();
  app->add_option("--carrier-hz", f.carrier_hz, "carrier frequency")->capture_default_str();
}

void add_orbit(CLI::App* app, OrbitFlags& f) {
  app->add_option("--altitude-m", f.altitude_m, "circular orbit altitude")->capture_default_str();
  app->add_option("--inclination-deg", f.inclination_deg, "orbit inclination")->capture_default_str();
}

double parse_snr(const std::string& s) {
  if (s == "inf" || s == "+inf") return channel::no_noise;
  std::istringstream is(s);
  is.imbue(std::locale::classic());
  double v = 0.0;
  require(static_cast<bool>(is >> v) && (is >> std::ws).eof(), errc::configuration, "bad --snr-db '" + s + "'");
  return v;
}

bool parse_switch(const std::string& s, const std::string& flag) {
  if (s == "on" || s == "true" || s == "1") return true;
  if (s == "off" || s == "false" || s == "0") return false;
  throw error(errc::configuration, "bad " + flag + " '" + s + "' (use on/off)");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), errc::io, "cannot create directory " + dir.string());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  require(static_cast<bool>(out), errc::io, "cannot open " + p.string());
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(12);
  os << v;
  return os.str();
}

void emit(const Globals& g, const json& summary, const std::string& text) {
  if (g.json_out) std::cout << summary.dump(2) << '\n';
  else std::cout << text;
}

// ---- simulate-pass ---------------------------------------------------------

struct SimulatePass {
  LinkFlags link;
  OrbitFlags orb;
  double max_elevation_deg = 90.0;
  double min_elevation_deg = 0.0;
  std::string snr = "-10";
  std::string doppler = "on";
  std::size_t payload_bytes = 256;
  double cadence_s = 30.0;
  std::uint64_t seed = 0;
  std::string out_dir;
  bool no_iq = false;
  double pfa = 0.01;
  std::size_t calibration_trials = 200;
};

int run_simulate_pass(const SimulatePass& c, const Globals& g) {
  const auto p = c.link.params();
  orbit::PassGeometry pass;
  pass.orbit = c.orb.params(p.carrier_hz);
  pass.max_elevation_deg = c.max_elevation_deg;
  pass.validate();
  require(c.cadence_s > 0.0, errc::configuration, "--cadence-s must be positive");
  require(c.payload_bytes > 0, errc::configuration, "--payload-bytes must be positive");
  const double snr_db = parse_snr(c.snr);
  const bool doppler = parse_switch(c.doppler, "--doppler");
  const orbit::PassShape shape(pass);
  const double airtime = phy::packet_airtime(p, c.payload_bytes);
  require(c.min_elevation_deg >= 0.0 && c.min_elevation_deg < pass.max_elevation_deg, errc::configuration,
          "--min-elevation-deg must lie in [0, max elevation)");
  // half-width of the arc above the mask
  double lo = 0.0, hi = shape.duration() / 2.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (shape.elevation_deg(mid) >= c.min_elevation_deg ? lo : hi) = mid;
  }
  const double first = shape.t_ca() - lo, last = shape.t_ca() + lo;
  require(airtime < last - first, errc::configuration, "packet longer than the visible pass");

  const fs::path dir(c.out_dir);
  ensure_dir(dir);

  // fixed-offset search needs the whole Doppler span inside the acceptance window
  const double max_doppler = std::max(std::abs(shape.doppler(-shape.duration() / 2.0)), p.bw_hz / 4.0);
  auto corr = detect::select_correlator(doppler ? max_doppler : 0.0, p);
  corr.detection_threshold = detect::calibrate_threshold(
      corr, corr.ratio() == 1 ? detect::DetectorKind::narrowband : detect::DetectorKind::wideband, c.pfa,
      c.calibration_trials, c.seed);

  std::mt19937_64 payload_rng(c.seed);
  const double preamble_mid = 0.5 * (p.preamble_len + p.sync_len) * p.symbol_duration();
  orbit::DopplerCurve measured;
  json packets = json::array();
  std::size_t slot = 0, errors = 0, symbols = 0;
  for (double t0 = first; t0 + airtime <= last; t0 += c.cadence_s, ++slot) {
    const auto payload = errmodel::random_payload(c.payload_bytes, payload_rng);
    channel::ChannelConfig cfg;
    cfg.snr_db = snr_db;
    cfg.pass = pass;
    cfg.packet_start_s = t0;
    cfg.seed = c.seed * 1000003ULL + slot;
    cfg.doppler = doppler;

    phy::PacketFrame frame;
    frame.params = p;
    frame.payload = payload;
    auto x = phy::modulate_symbols(phy::frame_symbols(frame), p);
    if (doppler) channel::apply_doppler_track(x, p.sample_rate_hz, pass, t0, 0.0);
    channel::add_awgn(x, snr_db, cfg.seed, p.sample_rate_hz, p.bw_hz);

    char stem[32];
    std::snprintf(stem, sizeof stem, "packet_%03zu", slot);
    if (!c.no_iq) phy::write_iq_file(dir / (std::string(stem) + ".iq"), phy::make_buffer(x, p.sample_rate_hz), p);

    const auto det = detect::detect_wideband(x, corr);
    double fine = std::numeric_limits<double>::quiet_NaN();
    if (det.detected) {
      fine = det.fine_doppler_hz;
      measured.times_s.push_back(t0 + preamble_mid);
      measured.doppler_hz.push_back(fine);
    }

    const auto trace = errmodel::simulate_packet_errors(cfg, p, payload);
    {
      auto out = open_out(dir / (std::string(stem) + ".trace.csv"));
      errmodel::write_trace_csv(out, trace);
    }
    errors += trace.errors();
    symbols += trace.symbols.size();
    json pk = {{"slot", slot}, {"t_start_s", t0}, {"detected", det.detected}, {"errors", trace.errors()},
               {"true_doppler_hz", doppler ? shape.doppler(t0 + preamble_mid - shape.t_ca()) : 0.0}};
    pk["measured_doppler_hz"] = det.detected ? json(fine) : json(nullptr);
    packets.push_back(pk);
  }
  {
    auto out = open_out(dir / "doppler.csv");
    orbit::write_doppler_csv(out, measured);
  }
  json summary = {{"command", "simulate-pass"},
                  {"out_dir", c.out_dir},
                  {"pass_duration_s", shape.duration()},
                  {"t_ca_s", shape.t_ca()},
                  {"packets", slot},
                  {"detected", measured.size()},
                  {"symbol_errors", errors},
                  {"symbols", symbols},
                  {"ser", symbols ? static_cast<double>(errors) / static_cast<double>(symbols) : 0.0},
                  {"detection_threshold", corr.detection_threshold},
                  {"correlator_bw_hz", corr.wide_bw_hz},
                  {"seed", c.seed},
                  {"packet_log", packets}};
  {
    auto out = open_out(dir / "pass.json");
    out << summary.dump(2) << '\n';
  }
  emit(g, summary,
       "simulate-pass: " + std::to_string(slot) + " packets, " + std::to_string(measured.size()) + " detected, SER " +
           fmt(summary["ser"].get<double>()) + " -> " + c.out_dir + "\n");
  return 0;
}

// ---- detect-sweep ----------------------------------------------------------

struct DetectSweep {
  LinkFlags link;
  double doppler_min_hz = 0.0;
  double doppler_max_hz = 125000.0;
  double doppler_step_hz = 5000.0;
  std::string snr = "-10";
  double wide_bw_hz = 250000.0;
  std::size_t trials = 50;
  double pfa = 0.01;
  std::size_t calibration_trials = 1000;
  std::uint64_t seed = 0;
  std::string out;
};

int run_detect_sweep(const DetectSweep& c, const Globals& g) {
  const auto p = c.link.params();
  require(c.doppler_step_hz > 0.0, errc::configuration, "--doppler-step-hz must be positive");
  require(c.trials > 0, errc::configuration, "--trials must be positive");
  const double snr_db = parse_snr(c.snr);
  detect::CorrelatorConfig wide;
  wide.narrow = p;
  wide.wide_bw_hz = c.wide_bw_hz;
  wide.validate();

  std::vector<double> offsets;
  for (double f = c.doppler_min_hz; f <= c.doppler_max_hz + 1e-9; f += c.doppler_step_hz) offsets.push_back(f);

  std::ostringstream csv;
  csv.imbue(std::locale::classic());
  csv.precision(10);
  csv << "doppler_hz,narrow_rate,narrow_snr_db,wide_rate,wide_snr_db\n";
  json rows = json::array();
  if (!offsets.empty()) {
    detect::CorrelatorConfig narrow_cfg = wide;
    const double th_n = detect::calibrate_threshold(narrow_cfg, detect::DetectorKind::narrowband, c.pfa, c.calibration_trials, c.seed);
    wide.detection_threshold = detect::calibrate_threshold(wide, detect::DetectorKind::wideband, c.pfa, c.calibration_trials, c.seed + 1);

    const auto ref = phy::modulate_symbols(detect::preamble_and_sync(p), p);
    std::size_t k = 0;
    for (double f : offsets) {
      std::size_t hn = 0, hw = 0;
      double sn = 0.0, sw = 0.0;
      for (std::size_t t = 0; t < c.trials; ++t) {
        auto x = ref;
        channel::apply_frequency_offset(x, p.sample_rate_hz, f);
        channel::add_awgn(x, snr_db, c.seed * 7919ULL + k * 100003ULL + t, p.sample_rate_hz, p.bw_hz);
        const auto a = detect::detect_narrowband(x, p, th_n);
        const auto b = detect::detect_wideband(x, wide, 0, false);
        // aliased or mis-resolved peaks do not count
        if (a.detected && std::abs(a.coarse_doppler_hz - f) < p.bw_hz / 4.0) ++hn, sn += a.detection_snr_db;
        if (b.detected && std::abs(b.coarse_doppler_hz - f) < p.bw_hz / 4.0) ++hw, sw += b.detection_snr_db;
      }
      ++k;
      const double n = static_cast<double>(c.trials);
      const double nan = std::numeric_limits<double>::quiet_NaN();
      const double msn = hn ? sn / static_cast<double>(hn) : nan, msw = hw ? sw / static_cast<double>(hw) : nan;
      csv << f << ',' << hn / n << ',' << msn << ',' << hw / n << ',' << msw << '\n';
      json r = {{"doppler_hz", f}, {"narrow_rate", hn / n}, {"wide_rate", hw / n}};
      r["narrow_snr_db"] = hn ? json(msn) : json(nullptr);
      r["wide_snr_db"] = hw ? json(msw) : json(nullptr);
      rows.push_back(r);
    }
  }
  if (!c.out.empty()) {
    auto out = open_out(c.out);
    out << csv.str();
  }
  json summary = {{"command", "detect-sweep"}, {"points", offsets.size()}, {"seed", c.seed}, {"rows", rows}};
  if (c.out.empty() && !g.json_out) std::cout << csv.str();
  else emit(g, summary, "detect-sweep: " + std::to_string(offsets.size()) + " offsets -> " + c.out + "\n");
  return 0;
}

// ---- estimate-trajectory ---------------------------------------------------

struct EstimateTrajectory {
  OrbitFlags orb;
  double carrier_hz = 915.6e6;
  std::string doppler_csv;
  std::string score_mode = "matched";
  trajectory::GridSpec grid;
  std::string out;
  double predict_from_s = std::numeric_limits<double>::quiet_NaN();
  double predict_horizon_s = 0.0;
};

int run_estimate_trajectory(const EstimateTrajectory& c, const Globals& g) {
  const auto o = c.orb.params(c.carrier_hz);
  trajectory::ScoreMode mode;
  if (c.score_mode == "matched") mode = trajectory::ScoreMode::matched;
  else if (c.score_mode == "normalized") mode = trajectory::ScoreMode::normalized;
  else throw error(errc::configuration, "bad --score-mode '" + c.score_mode + "'");
  c.grid.validate();
  std::ifstream in(c.doppler_csv);
  require(static_cast<bool>(in), errc::io, "cannot open " + c.doppler_csv);
  const auto curve = orbit::read_doppler_csv(in);
  const auto est = trajectory::estimate_trajectory(curve, o, c.grid, mode);
  json j = trajectory::to_json(est);
  if (!std::isnan(c.predict_from_s) && c.predict_horizon_s > 0.0) {
    const auto pred = trajectory::predict_next_pass_doppler(est, o, c.predict_from_s, c.predict_horizon_s);
    j["prediction"] = {{"error_bound_hz", pred.error_bound_hz}, {"samples", pred.curve.size()}};
  }
  if (!c.out.empty()) {
    auto out = open_out(c.out);
    out << j.dump(2) << '\n';
  }
  emit(g, j,
       "estimate-trajectory: theta_max " + fmt(est.theta_max_deg) + " deg, phi " + fmt(est.phi_deg) + " deg, t_start " +
           fmt(est.t_start_s) + " s, residual " + fmt(est.residual_rms_hz) + " Hz\n");
  return 0;
}

// ---- latency ---------------------------------------------------------------

struct Latency {
  OrbitFlags orb;
  std::vector<std::string> catalogs;
  double window_s = 86400.0;
  double step_s = 10.0;
  double min_elevation_deg = 10.0;
  double node_lon_deg = 0.0;
  double arg_lat0_deg = 0.0;
  double sample_step_s = 1.0;
  std::string out_dir;
};

int run_latency(const Latency& c, const Globals& g) {
  netplan::OrbitTrack track;
  track.orbit = c.orb.params(915.6e6);
  track.node_lon_deg = c.node_lon_deg;
  track.arg_lat0_deg = c.arg_lat0_deg;
  netplan::ScheduleOptions opt;
  opt.window_s = c.window_s;
  opt.step_s = c.step_s;
  opt.min_elevation_deg = c.min_elevation_deg;
  opt.validate();
  if (!c.out_dir.empty()) ensure_dir(c.out_dir);

  json results = json::array();
  std::string text;
  for (const auto& path : c.catalogs) {
    std::ifstream in(path);
    require(static_cast<bool>(in), errc::io, "cannot open " + path);
    const auto cat = netplan::read_catalog_csv(in);
    const auto sched = netplan::contact_schedule(track, cat, opt);
    const auto st = netplan::latency_stats(sched, c.sample_step_s);
    const std::string name = fs::path(path).stem().string();
    json j = netplan::to_json(st);
    j["catalog"] = name;
    j["stations"] = cat.size();
    j["contacts"] = sched.contacts.size();
    results.push_back(j);
    if (!c.out_dir.empty()) {
      auto out = open_out(fs::path(c.out_dir) / (name + "_latency.csv"));
      netplan::write_latency_csv(out, st);
    }
    text += "latency " + name + ": coverage " + fmt(100.0 * st.coverage) + "%, p50 " + fmt(st.p50_s) + " s, p90 " +
            fmt(st.p90_s) + " s, max " + fmt(st.max_s) + " s\n";
  }
  json summary = {{"command", "latency"}, {"window_s", c.window_s}, {"min_elevation_deg", c.min_elevation_deg}, {"catalogs", results}};
  if (!c.out_dir.empty()) {
    auto out = open_out(fs::path(c.out_dir) / "latency.json");
    out << summary.dump(2) << '\n';
  }
  emit(g, summary, text);
  return 0;
}

// ---- export-masks ----------------------------------------------------------

struct ExportMasks {
  std::vector<std::string> traces;
  std::string source = "model";
  std::size_t count = 10000;
  std::size_t payload_bytes = 256;
  std::uint64_t seed = 0;
  std::string out;
};

std::vector<errmodel::ErrorTrace> load_traces(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& s : inputs) {
    const fs::path p(s);
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p))
        if (e.path().filename().string().ends_with(".trace.csv")) files.push_back(e.path());
    } else {
      files.push_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<errmodel::ErrorTrace> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    require(static_cast<bool>(in), errc::io, "cannot open " + f.string());
    out.push_back(errmodel::read_trace_csv(in));
  }
  require(!out.empty(), errc::configuration, "no error traces found");
  return out;
}

int run_export_masks(const ExportMasks& c, const Globals& g) {
  require(c.source == "model" || c.source == "replay", errc::configuration, "bad --source '" + c.source + "'");
  require(c.payload_bytes > 0, errc::configuration, "--payload-bytes must be positive");
  const auto traces = load_traces(c.traces);
  const std::size_t bits = 8 * c.payload_bytes;
  std::vector<errmodel::BitMask> masks;
  json prov = {{"source", c.source}, {"seed", c.seed}, {"traces", traces.size()}};
  if (c.source == "model") {
    const auto fit = errmodel::fit_bin_offset_distribution(traces);
    masks = errmodel::sample_bit_masks(fit, bits, c.count, c.seed);
    prov["exponential_rate"] = fit.rate;
    prov["exponential_weight"] = fit.exponential_weight;
    prov["ser"] = 1.0 - fit.p_abs[0];
  } else {
    masks = errmodel::sample_bit_masks(traces, bits, c.count, c.seed);
  }
  errmodel::write_mask_file(c.out, masks, prov);
  std::size_t flips = 0;
  for (const auto& m : masks) flips += m.count();
  const double rate = masks.empty() ? 0.0 : static_cast<double>(flips) / static_cast<double>(masks.size() * bits);
  json summary = {{"command", "export-masks"}, {"out", c.out}, {"count", masks.size()}, {"bits_per_mask", bits},
                  {"bit_flip_rate", rate}, {"provenance", prov}};
  emit(g, summary, "export-masks: " + std::to_string(masks.size()) + " masks of " + std::to_string(bits) + " bits -> " + c.out + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cubelora: LoRa satellite downlink simulator"};
  app.require_subcommand(1);
  Globals g;
  app.add_flag("--json", g.json_out, "print a JSON summary on stdout");

  SimulatePass sp;
  auto* c_sp = app.add_subcommand("simulate-pass", "simulate packets across one pass; write IQ and error traces");
  add_link(c_sp, sp.link);
  add_orbit(c_sp, sp.orb);
  c_sp->add_option("--max-elevation-deg", sp.max_elevation_deg, "pass maximum elevation")->capture_default_str();
  c_sp->add_option("--min-elevation-deg", sp.min_elevation_deg, "packets only above this elevation")->capture_default_str();
  c_sp->add_option("--snr-db", sp.snr, "in-band SNR, or 'inf'")->capture_default_str();
  c_sp->add_option("--doppler", sp.doppler, "on/off")->capture_default_str();
  c_sp->add_option("--payload-bytes", sp.payload_bytes, "payload size")->capture_default_str();
  c_sp->add_option("--cadence-s", sp.cadence_s, "packet interval")->capture_default_str();
  c_sp->add_option("--pfa", sp.pfa, "detector false-alarm rate")->capture_default_str();
  c_sp->add_option("--calibration-trials", sp.calibration_trials, "noise trials for the threshold")->capture_default_str();
  c_sp->add_option("--seed", sp.seed, "RNG seed")->required();
  c_sp->add_option("--out-dir", sp.out_dir, "output directory")->required();
  c_sp->add_flag("--no-iq", sp.no_iq, "skip IQ files");

  DetectSweep ds;
  auto* c_ds = app.add_subcommand("detect-sweep", "detection rate and SNR versus Doppler offset");
  add_link(c_ds, ds.link);
  c_ds->add_option("--doppler-min-hz", ds.doppler_min_hz)->capture_default_str();
  c_ds->add_option("--doppler-max-hz", ds.doppler_max_hz)->capture_default_str();
  c_ds->add_option("--doppler-step-hz", ds.doppler_step_hz)->capture_default_str();
  c_ds->add_option("--snr-db", ds.snr, "in-band SNR, or 'inf'")->capture_default_str();
  c_ds->add_option("--wide-bw-hz", ds.wide_bw_hz, "wideband correlator bandwidth")->capture_default_str();
  c_ds->add_option("--trials", ds.trials, "trials per offset")->capture_default_str();
  c_ds->add_option("--pfa", ds.pfa)->capture_default_str();
  c_ds->add_option("--calibration-trials", ds.calibration_trials)->capture_default_str();
  c_ds->add_option("--seed", ds.seed, "RNG seed")->required();
  c_ds->add_option("--out", ds.out, "CSV path (stdout if omitted)");

  EstimateTrajectory et;
  auto* c_et = app.add_subcommand("estimate-trajectory", "fit pass geometry to a Doppler curve");
  add_orbit(c_et, et.orb);
  c_et->add_option("--carrier-hz", et.carrier_hz)->capture_default_str();
  c_et->add_option("--doppler-csv", et.doppler_csv, "t_s,doppler_hz input")->required();
  c_et->add_option("--score-mode", et.score_mode, "matched or normalized")->capture_default_str();
  c_et->add_option("--coarse-theta-deg", et.grid.coarse_theta_deg)->capture_default_str();
  c_et->add_option("--coarse-phi-deg", et.grid.coarse_phi_deg)->capture_default_str();
  c_et->add_option("--theta-step-deg", et.grid.theta_deg)->capture_default_str();
  c_et->add_option("--phi-step-deg", et.grid.phi_deg)->capture_default_str();
  c_et->add_option("--seeds", et.grid.seeds, "coarse cells refined")->capture_default_str();
  c_et->add_option("--predict-from-s", et.predict_from_s);
  c_et->add_option("--predict-horizon-s", et.predict_horizon_s);
  c_et->add_option("--out", et.out, "JSON output path");

  Latency la;
  auto* c_la = app.add_subcommand("latency", "coverage and latency for ground-station catalogs");
  add_orbit(c_la, la.orb);
  c_la->add_option("--catalog", la.catalogs, "catalog CSV (repeatable)")->required();
  c_la->add_option("--window-s", la.window_s)->capture_default_str();
  c_la->add_option("--step-s", la.step_s)->capture_default_str();
  c_la->add_option("--min-elevation-deg", la.min_elevation_deg)->capture_default_str();
  c_la->add_option("--node-lon-deg", la.node_lon_deg)->capture_default_str();
  c_la->add_option("--arg-lat0-deg", la.arg_lat0_deg)->capture_default_str();
  c_la->add_option("--sample-step-s", la.sample_step_s)->capture_default_str();
  c_la->add_option("--out-dir", la.out_dir, "directory for CSV series and JSON summary");

  ExportMasks em;
  auto* c_em = app.add_subcommand("export-masks", "bit-flip masks from error traces");
  c_em->add_option("--traces", em.traces, "trace CSV files or directories")->required();
  c_em->add_option("--source", em.source, "model or replay")->capture_default_str();
  c_em->add_option("--count", em.count)->capture_default_str();
  c_em->add_option("--payload-bytes", em.payload_bytes)->capture_default_str();
  c_em->add_option("--seed", em.seed, "RNG seed")->required();
  c_em->add_option("--out", em.out, "mask file (sidecar at <out>.json)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*c_sp) return run_simulate_pass(sp, g);
    if (*c_ds) return run_detect_sweep(ds, g);
    if (*c_et) return run_estimate_trajectory(et, g);
    if (*c_la) return run_latency(la, g);
    if (*c_em) return run_export_masks(em, g);
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == errc::configuration || e.code() == errc::domain ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
