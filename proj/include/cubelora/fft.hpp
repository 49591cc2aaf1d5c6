#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "cubelora/core.hpp"

namespace cubelora::fft {

using cplx = std::complex<double>;

namespace detail {

struct Plan {
  std::size_t n = 0;
  fftw_complex* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  Plan(std::size_t size, int sign) : n(size) {
    in = fftw_alloc_complex(n);
    out = fftw_alloc_complex(n);
    plan = fftw_plan_dft_1d(static_cast<int>(n), in, out, sign, FFTW_ESTIMATE);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  ~Plan() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
};

// FFTW planning is not thread-safe; each thread keeps its own plans.
inline Plan& plan_for(std::size_t n, int sign) {
  thread_local std::map<std::pair<std::size_t, int>, std::unique_ptr<Plan>> cache;
  auto& slot = cache[{n, sign}];
  if (!slot) slot = std::make_unique<Plan>(n, sign);
  return *slot;
}

inline void run(std::span<const cplx> input, std::span<cplx> output, int sign) {
  require(input.size() == output.size() && !input.empty(), errc::framing, "fft: size mismatch");
  Plan& p = plan_for(input.size(), sign);
  for (std::size_t i = 0; i < p.n; ++i) {
    p.in[i][0] = input[i].real();
    p.in[i][1] = input[i].imag();
  }
  fftw_execute(p.plan);
  for (std::size_t i = 0; i < p.n; ++i) output[i] = cplx(p.out[i][0], p.out[i][1]);
}

}  // namespace detail

/// Unnormalized forward DFT, X[k] = sum x[n] exp(-j 2 pi k n / N).
inline std::vector<cplx> forward(std::span<const cplx> x) {
  std::vector<cplx> out(x.size());
  detail::run(x, out, FFTW_FORWARD);
  return out;
}

inline void forward(std::span<const cplx> x, std::span<cplx> out) { detail::run(x, out, FFTW_FORWARD); }

/// Unnormalized inverse DFT.
inline std::vector<cplx> inverse(std::span<const cplx> x) {
  std::vector<cplx> out(x.size());
  detail::run(x, out, FFTW_BACKWARD);
  return out;
}

/// Signed frequency of bin k for an N-point DFT at `sample_rate`.
inline double bin_frequency(std::size_t k, std::size_t n, double sample_rate) {
  const auto ki = static_cast<double>(k);
  const auto ni = static_cast<double>(n);
  return (k < (n + 1) / 2 ? ki : ki - ni) * sample_rate / ni;
}

}  // namespace cubelora::fft
