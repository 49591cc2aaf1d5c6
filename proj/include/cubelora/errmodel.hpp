#pragma once

// Symbol and bit error characterization.
//
// A packet goes through modulate -> Doppler track -> AWGN -> demodulate. The
// receiver is assumed to have removed the offset seen at packet start (from
// the preamble), so only the drift accumulated across the packet remains.
// Each payload symbol is logged as (true bin, decoded bin, signed offset).
// Offsets are fitted to a uniform + exponential mixture and expanded into
// per-bit flip masks for codec training.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <locale>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <gsl/gsl_cdf.h>
#include <nlohmann/json.hpp>

#include "cubelora/channel.hpp"
#include "cubelora/core.hpp"
#include "cubelora/detect.hpp"
#include "cubelora/orbit.hpp"
#include "cubelora/phy.hpp"

namespace cubelora::errmodel {

using phy::LoRaParams;

struct SymbolOutcome {
  std::uint32_t symbol_index = 0;  // position within the payload
  std::uint32_t true_bin = 0;
  std::uint32_t decoded_bin = 0;
  std::int32_t offset = 0;  // (decoded - true) mod 2^sf, in [-2^sf/2, 2^sf/2)

  bool operator==(const SymbolOutcome&) const = default;
};

inline std::int32_t signed_offset(std::uint32_t true_bin, std::uint32_t decoded_bin, int sf) {
  const auto n = static_cast<std::int64_t>(1) << sf;
  auto d = (static_cast<std::int64_t>(decoded_bin) - static_cast<std::int64_t>(true_bin)) % n;
  if (d < 0) d += n;
  if (d >= n / 2) d -= n;
  return static_cast<std::int32_t>(d);
}

struct ErrorTrace {
  LoRaParams params;
  double snr_db = 0.0;
  bool doppler = false;
  orbit::PassGeometry pass;
  double packet_start_s = 0.0;
  std::uint64_t seed = 0;
  std::size_t payload_bytes = 0;
  bool detected = true;  // false: preamble below the detection threshold
  std::vector<SymbolOutcome> symbols;

  std::size_t errors() const {
    return static_cast<std::size_t>(std::count_if(symbols.begin(), symbols.end(), [](const auto& s) { return s.offset != 0; }));
  }
};

inline nlohmann::json header_json(const ErrorTrace& t) {
  nlohmann::json j;
  j["params"] = phy::params_to_json(t.params);
  j["snr_db"] = std::isfinite(t.snr_db) ? nlohmann::json(t.snr_db) : nlohmann::json("inf");
  j["doppler"] = t.doppler;
  j["pass"] = {{"altitude_m", t.pass.orbit.altitude_m},
               {"inclination_deg", t.pass.orbit.inclination_deg},
               {"carrier_hz", t.pass.orbit.carrier_hz},
               {"max_elevation_deg", t.pass.max_elevation_deg},
               {"t_start_s", t.pass.t_start_s}};
  j["packet_start_s"] = t.packet_start_s;
  j["seed"] = t.seed;
  j["payload_bytes"] = t.payload_bytes;
  j["detected"] = t.detected;
  return j;
}

/// One `# {json}` header line, then `symbol_index,true_bin,decoded_bin,offset`.
inline void write_trace_csv(std::ostream& out, const ErrorTrace& t) {
  out << "# " << header_json(t).dump() << '\n';
  out << "symbol_index,true_bin,decoded_bin,offset\n";
  for (const auto& s : t.symbols) out << s.symbol_index << ',' << s.true_bin << ',' << s.decoded_bin << ',' << s.offset << '\n';
}

inline ErrorTrace read_trace_csv(std::istream& in) {
  ErrorTrace t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line.rfind("# ", 0) == 0, errc::io, "trace: missing JSON header line");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line.substr(2));
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::io, std::string("trace: bad header: ") + e.what());
  }
  t.params = phy::params_from_json(h.at("params"));
  t.snr_db = h.at("snr_db").is_string() ? std::numeric_limits<double>::infinity() : h.at("snr_db").get<double>();
  t.doppler = h.at("doppler").get<bool>();
  const auto& p = h.at("pass");
  t.pass.orbit.altitude_m = p.at("altitude_m").get<double>();
  t.pass.orbit.inclination_deg = p.at("inclination_deg").get<double>();
  t.pass.orbit.carrier_hz = p.at("carrier_hz").get<double>();
  t.pass.max_elevation_deg = p.at("max_elevation_deg").get<double>();
  t.pass.t_start_s = p.at("t_start_s").get<double>();
  t.packet_start_s = h.at("packet_start_s").get<double>();
  t.seed = h.at("seed").get<std::uint64_t>();
  t.payload_bytes = h.at("payload_bytes").get<std::size_t>();
  t.detected = h.at("detected").get<bool>();
  require(static_cast<bool>(std::getline(in, line)) && line == "symbol_index,true_bin,decoded_bin,offset", errc::io,
          "trace: bad column header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ls.imbue(std::locale::classic());
    SymbolOutcome s;
    char c1 = 0, c2 = 0, c3 = 0;
    ls >> s.symbol_index >> c1 >> s.true_bin >> c2 >> s.decoded_bin >> c3 >> s.offset;
    require(!ls.fail() && c1 == ',' && c2 == ',' && c3 == ',', errc::io, "trace: malformed row: " + line);
    require(s.offset == signed_offset(s.true_bin, s.decoded_bin, t.params.sf), errc::io, "trace: offset inconsistent with bins");
    t.symbols.push_back(s);
  }
  return t;
}

struct SimulationOptions {
  double detection_threshold = 0.0;  // > 0: flag traces whose preamble misses this narrowband threshold
};

/// Runs one packet through the channel. Uses cfg.seed for the noise. With
/// cfg.doppler the Doppler at packet start is removed (preamble correction).
inline ErrorTrace simulate_packet_errors(const channel::ChannelConfig& cfg, const LoRaParams& params,
                                         std::span<const std::uint8_t> payload, const SimulationOptions& opt = {}) {
  params.validate();
  phy::PacketFrame frame;
  frame.params = params;
  frame.payload.assign(payload.begin(), payload.end());
  frame.validate();
  if (cfg.doppler) cfg.validate();

  const auto syms = phy::frame_symbols(frame);
  auto x = phy::modulate_symbols(syms, params);
  if (cfg.doppler) {
    const orbit::PassShape shape(cfg.pass);
    const double bias = shape.doppler(cfg.packet_start_s - shape.t_ca());
    channel::apply_doppler_track(x, params.sample_rate_hz, cfg.pass, cfg.packet_start_s, bias);
  }
  channel::add_awgn(x, cfg.snr_db, cfg.seed, params.sample_rate_hz, params.bw_hz);

  ErrorTrace t;
  t.params = params;
  t.snr_db = cfg.snr_db;
  t.doppler = cfg.doppler;
  t.pass = cfg.pass;
  t.packet_start_s = cfg.packet_start_s;
  t.seed = cfg.seed;
  t.payload_bytes = payload.size();
  if (opt.detection_threshold > 0.0) t.detected = detect::detect_narrowband(x, params, opt.detection_threshold).detected;

  const std::size_t header = static_cast<std::size_t>(params.preamble_len + params.sync_len);
  const std::size_t n = syms.size() - header;
  const auto decoded = phy::demodulate_symbols(x, params, n, 0.0, header * params.samples_per_symbol());
  t.symbols.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto tb = syms[header + i];
    t.symbols[i] = {static_cast<std::uint32_t>(i), tb, decoded[i], signed_offset(tb, decoded[i], params.sf)};
  }
  return t;
}

inline std::vector<std::uint8_t> random_payload(std::size_t bytes, std::mt19937_64& rng) {
  std::vector<std::uint8_t> p(bytes);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& b : p) b = static_cast<std::uint8_t>(d(rng));
  return p;
}

inline std::size_t symbol_count(std::span<const ErrorTrace> traces) {
  std::size_t n = 0;
  for (const auto& t : traces) n += t.symbols.size();
  return n;
}

inline double measure_ser(std::span<const ErrorTrace> traces) {
  std::size_t n = 0, e = 0;
  for (const auto& t : traces) {
    n += t.symbols.size();
    e += t.errors();
  }
  require(n > 0, errc::insufficient_data, "no symbols");
  return static_cast<double>(e) / static_cast<double>(n);
}

inline constexpr std::size_t min_outcomes = 10000;

namespace detail {
inline int common_sf(std::span<const ErrorTrace> traces) {
  require(!traces.empty(), errc::insufficient_data, "no traces");
  const int sf = traces.front().params.sf;
  for (const auto& t : traces) require(t.params.sf == sf, errc::configuration, "traces mix spreading factors");
  return sf;
}
}  // namespace detail

struct OffsetDistribution {
  int sf = 8;
  std::size_t outcomes = 0;
  std::vector<double> p_abs;     // P(|offset| = k), k = 0 .. 2^sf/2
  std::vector<double> p_signed;  // P(offset = k), index k + 2^sf/2
  // Errors (k >= 1) as w * exponential(rate) + (1 - w) * uniform over wrong bins.
  double rate = 0.0;
  double exponential_weight = 0.0;
  double chi2 = 0.0;  // goodness of fit of the mixture
  int dof = 0;
  double p_value = 0.0;
  double lr_p_value = 1.0;  // exponential component vs uniform-only errors
  bool exponential_accepted = false;
};

namespace detail {

// Truncated geometric on 1..h: g_k = q^k / sum q^j.
inline std::vector<double> geometric(double q, std::size_t h) {
  std::vector<double> g(h + 1, 0.0);
  double w = 0.0, qk = 1.0;
  for (std::size_t k = 1; k <= h; ++k) {
    qk *= q;
    g[k] = qk;
    w += qk;
  }
  for (auto& v : g) v /= w;
  return g;
}

// q whose truncated geometric has the given mean (>= 1).
inline double geometric_q_for_mean(double mean, std::size_t h) {
  if (mean <= 1.0 + 1e-12) return 1e-12;
  double lo = 1e-12, hi = 1.0 - 1e-12;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto g = geometric(mid, h);
    double m = 0.0;
    for (std::size_t k = 1; k <= h; ++k) m += static_cast<double>(k) * g[k];
    (m < mean ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Uniform decoded bin among the 2^sf - 1 wrong ones, folded to |offset|.
inline std::vector<double> uniform_abs(std::size_t n) {
  const std::size_t h = n / 2;
  std::vector<double> u(h + 1, 2.0 / static_cast<double>(n - 1));
  u[0] = 0.0;
  u[h] = 1.0 / static_cast<double>(n - 1);
  return u;
}

}  // namespace detail

/// Empirical offset tables plus a uniform + exponential mixture fitted to the
/// errors by EM. The exponential is accepted when the mixture passes a
/// chi-square goodness-of-fit test (cells pooled to expected >= 5) and the
/// exponential component is significant against uniform-only errors
/// (likelihood ratio), both at `alpha`.
inline OffsetDistribution fit_bin_offset_distribution(std::span<const ErrorTrace> traces, double alpha = 0.05) {
  const int sf = detail::common_sf(traces);
  OffsetDistribution d;
  d.sf = sf;
  d.outcomes = symbol_count(traces);
  require(d.outcomes >= min_outcomes, errc::statistical_power, "need at least 1e4 symbol outcomes");
  const std::size_t n = std::size_t{1} << sf, h = n / 2;
  std::vector<double> c(h + 1, 0.0);
  d.p_signed.assign(n, 0.0);
  for (const auto& t : traces)
    for (const auto& s : t.symbols) {
      c[static_cast<std::size_t>(std::abs(s.offset))] += 1.0;
      d.p_signed[static_cast<std::size_t>(s.offset + static_cast<std::int32_t>(h))] += 1.0;
    }
  d.p_abs = c;
  for (auto& p : d.p_abs) p /= static_cast<double>(d.outcomes);
  for (auto& p : d.p_signed) p /= static_cast<double>(d.outcomes);

  double errors = 0.0;
  for (std::size_t k = 1; k <= h; ++k) errors += c[k];
  if (errors == 0.0) return d;  // point mass at 0

  const auto u = detail::uniform_abs(n);
  double w = 0.5, q = 0.5;
  std::vector<double> g = detail::geometric(q, h);
  for (int it = 0; it < 2000; ++it) {
    double wsum = 0.0, ksum = 0.0;
    for (std::size_t k = 1; k <= h; ++k) {
      const double num = w * g[k], den = num + (1.0 - w) * u[k];
      const double r = den > 0.0 ? num / den : 0.0;
      wsum += c[k] * r;
      ksum += c[k] * r * static_cast<double>(k);
    }
    const double w_new = wsum / errors;
    const double q_new = wsum > 0.0 ? detail::geometric_q_for_mean(ksum / wsum, h) : q;
    const bool done = std::abs(w_new - w) < 1e-10 && std::abs(q_new - q) < 1e-10;
    w = w_new;
    q = q_new;
    g = detail::geometric(q, h);
    if (done) break;
  }
  d.exponential_weight = w;
  d.rate = -std::log(q);

  double ll_mix = 0.0, ll_uni = 0.0;
  std::vector<double> expected(h + 1, 0.0);
  for (std::size_t k = 1; k <= h; ++k) {
    const double pm = w * g[k] + (1.0 - w) * u[k];
    expected[k] = errors * pm;
    if (c[k] > 0.0) {
      ll_mix += c[k] * std::log(std::max(pm, 1e-300));
      ll_uni += c[k] * std::log(u[k]);
    }
  }
  d.lr_p_value = gsl_cdf_chisq_Q(std::max(0.0, 2.0 * (ll_mix - ll_uni)), 2.0);

  // pool consecutive cells until each has expected >= 5 (the remainder joins the last cell)
  std::vector<double> suffix(h + 2, 0.0);
  for (std::size_t k = h; k >= 1; --k) suffix[k] = suffix[k + 1] + expected[k];
  double eo = 0.0, oo = 0.0;
  int cells = 0;
  for (std::size_t k = 1; k <= h; ++k) {
    eo += expected[k];
    oo += c[k];
    if ((eo >= 5.0 && suffix[k + 1] >= 5.0) || k == h) {
      if (eo > 0.0) d.chi2 += (oo - eo) * (oo - eo) / eo;
      ++cells;
      eo = oo = 0.0;
    }
  }
  d.dof = cells - 3;  // total, weight, rate
  if (d.dof >= 1)
    d.p_value = gsl_cdf_chisq_Q(d.chi2, d.dof);
  else
    d.p_value = d.chi2 < 1e-9 ? 1.0 : 0.0;
  d.exponential_accepted = d.p_value >= alpha && d.lr_p_value < alpha;
  return d;
}

/// Probability that each bit of a symbol flips, MSB first.
inline std::vector<double> bit_flip_probabilities(std::span<const ErrorTrace> traces) {
  const int sf = detail::common_sf(traces);
  const std::size_t n = symbol_count(traces);
  require(n >= min_outcomes, errc::statistical_power, "need at least 1e4 symbol outcomes");
  std::vector<double> p(static_cast<std::size_t>(sf), 0.0);
  for (const auto& t : traces)
    for (const auto& s : t.symbols) {
      const auto x = s.true_bin ^ s.decoded_bin;
      for (int b = 0; b < sf; ++b)
        if ((x >> (sf - 1 - b)) & 1u) p[static_cast<std::size_t>(b)] += 1.0;
    }
  for (auto& v : p) v /= static_cast<double>(n);
  return p;
}

/// Per-bit flip probability implied by a signed offset distribution with
/// uniformly distributed true bins.
inline std::vector<double> expected_bit_flip_probabilities(const OffsetDistribution& d) {
  const std::size_t n = std::size_t{1} << d.sf, half = n / 2;
  std::vector<double> p(static_cast<std::size_t>(d.sf), 0.0);
  for (std::size_t idx = 0; idx < n; ++idx) {
    const double pk = d.p_signed[idx];
    if (pk == 0.0) continue;
    const auto k = static_cast<std::int64_t>(idx) - static_cast<std::int64_t>(half);
    for (std::size_t b = 0; b < n; ++b) {
      const auto dec = static_cast<std::uint32_t>(((static_cast<std::int64_t>(b) + k) % static_cast<std::int64_t>(n) + static_cast<std::int64_t>(n)) %
                                                  static_cast<std::int64_t>(n));
      const auto x = static_cast<std::uint32_t>(b) ^ dec;
      for (int j = 0; j < d.sf; ++j)
        if ((x >> (d.sf - 1 - j)) & 1u) p[static_cast<std::size_t>(j)] += pk / static_cast<double>(n);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Bit masks

struct BitMask {
  std::vector<std::uint8_t> flips;  // one entry (0/1) per payload bit, payload bit order
  std::uint64_t source_seed = 0;    // seed of the generating trace or sampler
  std::size_t source_index = 0;     // trace index (replay) or draw index (model)

  std::size_t size() const { return flips.size(); }
  std::size_t count() const { return static_cast<std::size_t>(std::count(flips.begin(), flips.end(), std::uint8_t{1})); }
};

/// bin_to_bits(true) XOR bin_to_bits(decoded), concatenated over the payload
/// symbols and cut to 8 * payload_bytes.
inline BitMask mask_from_trace(const ErrorTrace& t) {
  BitMask m;
  const auto nbits = 8 * t.payload_bytes;
  m.flips.reserve(t.symbols.size() * static_cast<std::size_t>(t.params.sf));
  for (const auto& s : t.symbols) {
    const auto x = s.true_bin ^ s.decoded_bin;
    for (int b = 0; b < t.params.sf; ++b) m.flips.push_back(static_cast<std::uint8_t>((x >> (t.params.sf - 1 - b)) & 1u));
  }
  require(m.flips.size() >= nbits, errc::framing, "trace shorter than its payload");
  m.flips.resize(nbits);
  m.source_seed = t.seed;
  return m;
}

/// Packed mask bytes: bit i goes to byte i/8 at bit position i%8 (LSB first).
inline std::vector<std::uint8_t> pack_mask(const BitMask& m) {
  std::vector<std::uint8_t> out((m.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.flips[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return out;
}

inline BitMask unpack_mask(std::span<const std::uint8_t> bytes, std::size_t bits) {
  require(bytes.size() * 8 >= bits, errc::framing, "mask: not enough bytes");
  BitMask m;
  m.flips.resize(bits);
  for (std::size_t i = 0; i < bits; ++i) m.flips[i] = (bytes[i / 8] >> (i % 8)) & 1u;
  return m;
}

/// Writes masks back to back to `path` and a `path.json` sidecar.
inline void write_mask_file(const std::filesystem::path& path, std::span<const BitMask> masks,
                            const nlohmann::json& provenance = nlohmann::json::object()) {
  const std::size_t bits = masks.empty() ? 0 : masks.front().size();
  for (const auto& m : masks) require(m.size() == bits, errc::framing, "mask file: masks differ in length");
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), errc::io, "cannot open " + path.string());
  nlohmann::json side = {{"format", "cubelora-bitmask"},
                         {"bit_order", "lsb-first"},
                         {"bits_per_mask", bits},
                         {"bytes_per_mask", (bits + 7) / 8},
                         {"count", masks.size()},
                         {"provenance", provenance}};
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& m : masks) {
    const auto b = pack_mask(m);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    sources.push_back({{"seed", m.source_seed}, {"index", m.source_index}});
  }
  side["sources"] = std::move(sources);
  require(static_cast<bool>(out), errc::io, "write failed: " + path.string());
  std::ofstream js(path.string() + ".json");
  require(static_cast<bool>(js), errc::io, "cannot open sidecar for " + path.string());
  js << side.dump(2) << '\n';
}

inline std::vector<BitMask> read_mask_file(const std::filesystem::path& path) {
  std::ifstream js(path.string() + ".json");
  require(static_cast<bool>(js), errc::io, "missing sidecar " + path.string() + ".json");
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::io, std::string("bad sidecar: ") + e.what());
  }
  require(side.value("bit_order", "") == "lsb-first", errc::io, "unsupported bit order");
  const auto bits = side.at("bits_per_mask").get<std::size_t>();
  const auto count = side.at("count").get<std::size_t>();
  const std::size_t per = (bits + 7) / 8;
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), errc::io, "cannot open " + path.string());
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(raw.size() == per * count, errc::framing, "mask file size does not match sidecar");
  std::vector<BitMask> masks;
  const auto& sources = side.value("sources", nlohmann::json::array());
  for (std::size_t i = 0; i < count; ++i) {
    auto m = unpack_mask(std::span(raw).subspan(i * per, per), bits);
    if (i < sources.size()) {
      m.source_seed = sources[i].value("seed", std::uint64_t{0});
      m.source_index = sources[i].value("index", std::size_t{0});
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

/// Masks by replaying traces: symbols of randomly chosen traces are chained
/// until `payload_bits` bits are filled.
inline std::vector<BitMask> sample_bit_masks(std::span<const ErrorTrace> traces, std::size_t payload_bits,
                                             std::size_t count, std::uint64_t seed) {
  std::vector<BitMask> out;
  if (count == 0) return out;
  require(!traces.empty() && symbol_count(traces) > 0, errc::insufficient_data, "no traces to replay");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, traces.size() - 1);
  for (std::size_t c = 0; c < count; ++c) {
    BitMask m;
    m.source_seed = seed;
    m.source_index = c;
    while (m.flips.size() < payload_bits) {
      const auto& t = traces[pick(rng)];
      for (const auto& s : t.symbols) {
        const auto x = s.true_bin ^ s.decoded_bin;
        for (int b = 0; b < t.params.sf; ++b) m.flips.push_back(static_cast<std::uint8_t>((x >> (t.params.sf - 1 - b)) & 1u));
      }
    }
    m.flips.resize(payload_bits);
    out.push_back(std::move(m));
  }
  return out;
}

/// Masks from the fitted offset model: uniform true bins, offsets drawn from
/// the signed distribution, expanded through the bit XOR.
inline std::vector<BitMask> sample_bit_masks(const OffsetDistribution& model, std::size_t payload_bits, std::size_t count,
                                             std::uint64_t seed) {
  std::vector<BitMask> out;
  if (count == 0) return out;
  const std::size_t n = std::size_t{1} << model.sf, half = n / 2;
  require(model.p_signed.size() == n, errc::configuration, "model does not match its spreading factor");
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> offset(model.p_signed.begin(), model.p_signed.end());
  std::uniform_int_distribution<std::uint32_t> bin(0, static_cast<std::uint32_t>(n - 1));
  for (std::size_t c = 0; c < count; ++c) {
    BitMask m;
    m.source_seed = seed;
    m.source_index = c;
    m.flips.reserve(payload_bits + static_cast<std::size_t>(model.sf));
    while (m.flips.size() < payload_bits) {
      const auto tb = bin(rng);
      const auto k = static_cast<std::int64_t>(offset(rng)) - static_cast<std::int64_t>(half);
      const auto dec = static_cast<std::uint32_t>(((static_cast<std::int64_t>(tb) + k) % static_cast<std::int64_t>(n) +
                                                   static_cast<std::int64_t>(n)) % static_cast<std::int64_t>(n));
      const auto x = tb ^ dec;
      for (int b = 0; b < model.sf; ++b) m.flips.push_back(static_cast<std::uint8_t>((x >> (model.sf - 1 - b)) & 1u));
    }
    m.flips.resize(payload_bits);
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// k-bit value quantization used for the codec signature

/// Level of x in 2^k uniform cells over [-1, 1]; values outside are clamped.
inline std::uint32_t quantize(double x, int k) {
  require(k >= 1 && k <= 24, errc::domain, "bits per value must be in [1, 24]");
  require(!std::isnan(x), errc::domain, "cannot quantize NaN");
  const double levels = std::ldexp(1.0, k);
  const double l = std::floor((x + 1.0) / 2.0 * levels);
  return static_cast<std::uint32_t>(std::clamp(l, 0.0, levels - 1.0));
}

/// Cell midpoint of `level`.
inline double dequantize(std::uint32_t level, int k) {
  require(k >= 1 && k <= 24, errc::domain, "bits per value must be in [1, 24]");
  const double levels = std::ldexp(1.0, k);
  require(level < levels, errc::domain, "level out of range");
  return -1.0 + (static_cast<double>(level) + 0.5) * 2.0 / levels;
}

}  // namespace cubelora::errmodel
