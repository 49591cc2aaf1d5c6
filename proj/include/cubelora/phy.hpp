#pragma once

// LoRa chirp-spread-spectrum baseband modem.
//
// Symbols are cyclically shifted upchirps. There is no Gray mapping, whitening,
// interleaving or FEC: bin index b carries the plain big-endian binary value of
// b, so a one-bin decoding slip mostly flips low-order bits.

#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cubelora/core.hpp"
#include "cubelora/fft.hpp"

namespace cubelora::phy {

using cplx = std::complex<double>;
using cplxf = std::complex<float>;

struct LoRaParams {
  int sf = 8;
  double bw_hz = 62500.0;
  double carrier_hz = 915.6e6;
  int preamble_len = 8;
  int sync_len = 2;
  double sample_rate_hz = 250000.0;  // 4x oversampling by default

  std::size_t chips() const { return std::size_t{1} << sf; }
  std::size_t oversampling() const { return static_cast<std::size_t>(std::llround(sample_rate_hz / bw_hz)); }
  std::size_t samples_per_symbol() const { return chips() * oversampling(); }
  double symbol_duration() const { return static_cast<double>(chips()) / bw_hz; }
  double bin_spacing() const { return bw_hz / static_cast<double>(chips()); }
  double chirp_slope() const { return bw_hz * bw_hz / static_cast<double>(chips()); }

  void validate() const {
    require(sf >= 7 && sf <= 12, errc::configuration, "spreading factor must be in [7, 12]");
    require(bw_hz == 62500.0 || bw_hz == 125000.0 || bw_hz == 250000.0, errc::configuration,
            "bandwidth must be 62.5, 125 or 250 kHz");
    require(carrier_hz > 0.0, errc::configuration, "carrier must be positive");
    require(preamble_len >= 1 && sync_len >= 0, errc::configuration, "bad preamble/sync length");
    const double ratio = sample_rate_hz / bw_hz;
    require(ratio >= 1.0 && std::abs(ratio - std::round(ratio)) < 1e-9, errc::configuration,
            "sample rate must be an integer multiple of the bandwidth");
  }
};

struct IqBuffer {
  std::vector<cplxf> samples;
  double sample_rate_hz = 0.0;
  double center_offset_hz = 0.0;

  std::size_t size() const { return samples.size(); }

  void validate() const {
    require(!samples.empty(), errc::framing, "iq buffer is empty");
    require(sample_rate_hz > 0.0, errc::configuration, "iq buffer needs a positive sample rate");
    for (const auto& s : samples)
      require(std::isfinite(s.real()) && std::isfinite(s.imag()), errc::domain, "iq buffer holds non-finite samples");
  }
};

struct PacketFrame {
  std::vector<std::uint8_t> payload;
  LoRaParams params;

  void validate() const {
    params.validate();
    require(payload.size() <= 256, errc::domain, "payload exceeds 256 bytes");
  }
};

/// Phase in cycles of a chirp with initial bin offset `shift` (fractional
/// shifts allowed), evaluated at chip position `u` in [0, chips).
inline double chirp_phase_cycles(double u, double shift, double chips) {
  const double wrap = chips - shift;  // chip at which the frequency wraps
  double phase = u * u / (2.0 * chips) + (shift / chips - 0.5) * u;
  if (u > wrap) phase -= (u - wrap);
  return phase;
}

/// One chirp at `sample_rate` for a `sf`/`bw` template. Not restricted to the
/// LoRa parameter ranges, so wideband correlator templates use it too.
inline std::vector<cplx> make_chirp(int sf, double bw_hz, double sample_rate_hz, double shift = 0.0, bool up = true) {
  const auto chips = static_cast<double>(std::size_t{1} << sf);
  const auto os = sample_rate_hz / bw_hz;
  const auto n = static_cast<std::size_t>(std::llround(chips * os));
  std::vector<cplx> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / os;
    const double ph = constants::two_pi * chirp_phase_cycles(u, shift, chips);
    out[i] = up ? std::polar(1.0, ph) : std::polar(1.0, -ph);
  }
  return out;
}

inline std::vector<cplx> to_double(std::span<const cplxf> in) {
  return {in.begin(), in.end()};
}

inline IqBuffer make_buffer(std::span<const cplx> samples, double sample_rate_hz, double center_offset_hz = 0.0) {
  IqBuffer buf;
  buf.samples.reserve(samples.size());
  for (const auto& s : samples) buf.samples.emplace_back(static_cast<float>(s.real()), static_cast<float>(s.imag()));
  buf.sample_rate_hz = sample_rate_hz;
  buf.center_offset_hz = center_offset_hz;
  return buf;
}

inline IqBuffer modulate_symbol(std::uint32_t symbol, const LoRaParams& params) {
  params.validate();
  require(symbol < params.chips(), errc::domain, "symbol " + std::to_string(symbol) + " outside [0, 2^sf)");
  const auto chirp = make_chirp(params.sf, params.bw_hz, params.sample_rate_hz, static_cast<double>(symbol));
  return make_buffer(chirp, params.sample_rate_hz);
}

/// SYNC bins are fixed at 2^sf/8 and 2^sf/4, alternating if sync_len > 2.
inline std::uint32_t sync_symbol(const LoRaParams& params, int index) {
  const auto n = static_cast<std::uint32_t>(params.chips());
  return index % 2 == 0 ? n / 8 : n / 4;
}

inline std::vector<std::uint8_t> bin_to_bits(std::uint32_t bin, int sf) {
  require(sf >= 1 && sf <= 30, errc::domain, "bad spreading factor");
  require(bin < (std::uint32_t{1} << sf), errc::domain, "bin outside [0, 2^sf)");
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(sf));
  for (int i = 0; i < sf; ++i) bits[static_cast<std::size_t>(i)] = (bin >> (sf - 1 - i)) & 1u;
  return bits;
}

inline std::uint32_t bits_to_bin(std::span<const std::uint8_t> bits) {
  require(!bits.empty() && bits.size() <= 30, errc::domain, "bit vector length must be in [1, 30]");
  std::uint32_t bin = 0;
  for (auto b : bits) {
    require(b <= 1, errc::domain, "bits must be 0 or 1");
    bin = (bin << 1) | b;
  }
  return bin;
}

inline std::size_t payload_symbol_count(std::size_t payload_bytes, int sf) {
  return (8 * payload_bytes + static_cast<std::size_t>(sf) - 1) / static_cast<std::size_t>(sf);
}

/// Payload bytes -> bins: bits MSB-first per byte, sf bits per symbol, zero padded.
inline std::vector<std::uint32_t> pack_payload(std::span<const std::uint8_t> payload, int sf) {
  const std::size_t nsym = payload_symbol_count(payload.size(), sf);
  std::vector<std::uint32_t> bins(nsym, 0);
  const std::size_t nbits = 8 * payload.size();
  for (std::size_t i = 0; i < nsym * static_cast<std::size_t>(sf); ++i) {
    const std::uint32_t bit = i < nbits ? (payload[i / 8] >> (7 - i % 8)) & 1u : 0u;
    bins[i / sf] = (bins[i / sf] << 1) | bit;
  }
  return bins;
}

inline std::vector<std::uint8_t> unpack_payload(std::span<const std::uint32_t> bins, int sf, std::size_t payload_bytes) {
  require(bins.size() >= payload_symbol_count(payload_bytes, sf), errc::framing, "too few symbols for payload");
  std::vector<std::uint8_t> out(payload_bytes, 0);
  for (std::size_t i = 0; i < 8 * payload_bytes; ++i) {
    const std::uint32_t bit = (bins[i / sf] >> (sf - 1 - static_cast<int>(i % sf))) & 1u;
    out[i / 8] = static_cast<std::uint8_t>(out[i / 8] | (bit << (7 - i % 8)));
  }
  return out;
}

/// Full symbol sequence of a frame: preamble (bin 0), SYNC, payload.
inline std::vector<std::uint32_t> frame_symbols(const PacketFrame& frame) {
  frame.validate();
  const auto& p = frame.params;
  std::vector<std::uint32_t> syms(static_cast<std::size_t>(p.preamble_len), 0u);
  for (int i = 0; i < p.sync_len; ++i) syms.push_back(sync_symbol(p, i));
  const auto data = pack_payload(frame.payload, p.sf);
  syms.insert(syms.end(), data.begin(), data.end());
  return syms;
}

inline double packet_airtime(const LoRaParams& params, std::size_t payload_bytes) {
  const auto n = static_cast<std::size_t>(params.preamble_len + params.sync_len) + payload_symbol_count(payload_bytes, params.sf);
  return static_cast<double>(n) * params.symbol_duration();
}

/// Samples of the concatenated symbol sequence.
inline std::vector<cplx> modulate_symbols(std::span<const std::uint32_t> symbols, const LoRaParams& params) {
  std::vector<cplx> out;
  out.reserve(symbols.size() * params.samples_per_symbol());
  for (auto s : symbols) {
    require(s < params.chips(), errc::domain, "symbol outside [0, 2^sf)");
    const auto c = make_chirp(params.sf, params.bw_hz, params.sample_rate_hz, static_cast<double>(s));
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

inline IqBuffer modulate_packet(const PacketFrame& frame) {
  const auto syms = frame_symbols(frame);
  return make_buffer(modulate_symbols(syms, frame.params), frame.params.sample_rate_hz);
}

struct SymbolDecision {
  std::uint32_t bin = 0;
  double peak_magnitude = 0.0;
};

/// Dechirp-FFT demodulator working on double samples; `samples` is exactly one
/// symbol at params.sample_rate_hz. The frequency correction is removed first,
/// then the symbol is band-limited to +/-bw/2 and decimated to bw before the
/// 2^sf-point dechirp FFT.
class Demodulator {
 public:
  explicit Demodulator(const LoRaParams& params)
      : params_(params),
        downchirp_(make_chirp(params.sf, params.bw_hz, params.bw_hz, 0.0, false)),
        work_(params.chips()) {
    params.validate();
  }

  const LoRaParams& params() const { return params_; }

  SymbolDecision demodulate(std::span<const cplx> samples, double freq_correction_hz = 0.0) {
    const std::size_t n = params_.chips();
    const std::size_t os = params_.oversampling();
    require(samples.size() == n * os, errc::framing, "demodulate: buffer must hold exactly one symbol");
    decimate(samples, freq_correction_hz);
    for (std::size_t i = 0; i < n; ++i) work_[i] *= downchirp_[i];
    spectrum_ = fft::forward(work_);
    SymbolDecision best;
    for (std::size_t k = 0; k < n; ++k) {
      const double mag = std::abs(spectrum_[k]);
      if (mag > best.peak_magnitude) {
        best.peak_magnitude = mag;
        best.bin = static_cast<std::uint32_t>(k);
      }
    }
    return best;
  }

  /// Spectrum of the last demodulated symbol.
  std::span<const cplx> spectrum() const { return spectrum_; }

 private:
  void decimate(std::span<const cplx> samples, double correction_hz) {
    const std::size_t n = params_.chips();
    const std::size_t os = params_.oversampling();
    const double fs = params_.sample_rate_hz;
    if (os == 1) {
      for (std::size_t i = 0; i < n; ++i) {
        work_[i] = samples[i];
        if (correction_hz != 0.0)
          work_[i] *= std::polar(1.0, -constants::two_pi * correction_hz * static_cast<double>(i) / fs);
      }
      return;
    }
    wide_.assign(samples.begin(), samples.end());
    if (correction_hz != 0.0)
      for (std::size_t i = 0; i < wide_.size(); ++i)
        wide_[i] *= std::polar(1.0, -constants::two_pi * correction_hz * static_cast<double>(i) / fs);
    const auto spec = fft::forward(wide_);
    // keep bins in [-n/2, n/2)
    std::vector<cplx> narrow(n);
    const std::size_t m = wide_.size();
    for (std::size_t k = 0; k < n / 2; ++k) narrow[k] = spec[k];
    for (std::size_t k = n / 2; k < n; ++k) narrow[k] = spec[m - n + k];
    work_ = fft::inverse(narrow);
    const double scale = 1.0 / static_cast<double>(m);
    for (auto& v : work_) v *= scale;
  }

  LoRaParams params_;
  std::vector<cplx> downchirp_;
  std::vector<cplx> work_;
  std::vector<cplx> wide_;
  std::vector<cplx> spectrum_;
};

inline SymbolDecision demodulate_symbol(const IqBuffer& iq, const LoRaParams& params, double freq_correction_hz = 0.0) {
  Demodulator demod(params);
  require(iq.size() == params.samples_per_symbol(), errc::framing, "demodulate_symbol: buffer must hold exactly one symbol");
  const auto x = to_double(iq.samples);
  return demod.demodulate(x, freq_correction_hz);
}

/// Demodulates every symbol of a frame-aligned buffer starting at `start`.
inline std::vector<std::uint32_t> demodulate_symbols(std::span<const cplx> samples, const LoRaParams& params,
                                                     std::size_t count, double freq_correction_hz = 0.0,
                                                     std::size_t start = 0) {
  Demodulator demod(params);
  const std::size_t sps = params.samples_per_symbol();
  require(start + count * sps <= samples.size(), errc::framing, "buffer shorter than requested symbols");
  std::vector<std::uint32_t> out(count);
  const double fs = params.sample_rate_hz;
  for (std::size_t i = 0; i < count; ++i) {
    // correction phase continues across symbols
    const double t0 = static_cast<double>(start + i * sps) / fs;
    auto sym = samples.subspan(start + i * sps, sps);
    std::vector<cplx> tmp(sym.begin(), sym.end());
    if (freq_correction_hz != 0.0) {
      const cplx rot = std::polar(1.0, -constants::two_pi * freq_correction_hz * t0);
      for (auto& v : tmp) v *= rot;
    }
    out[i] = demod.demodulate(tmp, freq_correction_hz).bin;
  }
  return out;
}

/// Decodes the payload of a frame-aligned packet buffer.
inline std::vector<std::uint8_t> demodulate_packet(const IqBuffer& iq, const LoRaParams& params, std::size_t payload_bytes,
                                                   double freq_correction_hz = 0.0) {
  params.validate();
  const auto x = to_double(iq.samples);
  const std::size_t header = static_cast<std::size_t>(params.preamble_len + params.sync_len);
  const std::size_t nsym = payload_symbol_count(payload_bytes, params.sf);
  const auto bins = demodulate_symbols(x, params, nsym, freq_correction_hz, header * params.samples_per_symbol());
  return unpack_payload(bins, params.sf, payload_bytes);
}

// IQ file: little-endian interleaved float32 I,Q; JSON sidecar with metadata.

inline nlohmann::json params_to_json(const LoRaParams& p) {
  return {{"sf", p.sf}, {"bw_hz", p.bw_hz}, {"carrier_hz", p.carrier_hz},
          {"preamble_len", p.preamble_len}, {"sync_len", p.sync_len}, {"sample_rate_hz", p.sample_rate_hz}};
}

inline LoRaParams params_from_json(const nlohmann::json& j, double sample_rate_hz = 0.0) {
  LoRaParams p;
  p.sf = j.at("sf").get<int>();
  p.bw_hz = j.at("bw_hz").get<double>();
  p.carrier_hz = j.at("carrier_hz").get<double>();
  p.preamble_len = j.value("preamble_len", 8);
  p.sync_len = j.value("sync_len", 2);
  p.sample_rate_hz = j.value("sample_rate_hz", sample_rate_hz > 0.0 ? sample_rate_hz : 4.0 * p.bw_hz);
  p.validate();
  return p;
}

inline void write_iq_file(const std::filesystem::path& path, const IqBuffer& iq, const LoRaParams& params) {
  static_assert(std::endian::native == std::endian::little, "IQ writer assumes a little-endian host");
  iq.validate();
  {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), errc::io, "cannot open " + path.string());
    out.write(reinterpret_cast<const char*>(iq.samples.data()),
              static_cast<std::streamsize>(iq.samples.size() * sizeof(cplxf)));
  }
  nlohmann::json meta = {{"sample_rate_hz", iq.sample_rate_hz},
                         {"center_offset_hz", iq.center_offset_hz},
                         {"params", params_to_json(params)}};
  std::ofstream side(path.string() + ".json");
  require(static_cast<bool>(side), errc::io, "cannot open sidecar for " + path.string());
  side << meta.dump(2) << '\n';
}

struct IqFile {
  IqBuffer iq;
  LoRaParams params;
};

inline IqFile read_iq_file(const std::filesystem::path& path) {
  std::ifstream side(path.string() + ".json");
  require(static_cast<bool>(side), errc::io, "missing sidecar " + path.string() + ".json");
  nlohmann::json meta;
  try {
    side >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::io, std::string("bad sidecar json: ") + e.what());
  }
  IqFile f;
  f.iq.sample_rate_hz = meta.at("sample_rate_hz").get<double>();
  f.iq.center_offset_hz = meta.value("center_offset_hz", 0.0);
  f.params = params_from_json(meta.at("params"), f.iq.sample_rate_hz);
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  require(static_cast<bool>(in), errc::io, "cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  require(bytes % sizeof(cplxf) == 0, errc::io, "iq file size is not a whole number of samples");
  in.seekg(0);
  f.iq.samples.resize(bytes / sizeof(cplxf));
  in.read(reinterpret_cast<char*>(f.iq.samples.data()), static_cast<std::streamsize>(bytes));
  f.iq.validate();
  return f;
}

}  // namespace cubelora::phy
