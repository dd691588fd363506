#pragma once

#include <fftw3.h>

#include <complex>
#include <cstring>
#include <memory>
#include <mutex>

#include "pnp/image.hpp"

namespace pnp {

namespace detail {

// FFTW planning is not thread-safe; execution is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

inline FftwBuffer fftw_buffer(std::size_t n) {
  auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (p == nullptr) throw std::bad_alloc();
  return FftwBuffer(p);
}

// Transforms `buf` in place. Buffers always come from fftw_malloc so the
// codelet choice (and therefore rounding) does not depend on where the
// allocator happened to place the data.
inline void execute_c2c(fftw_complex* buf, int height, int width, int sign) {
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_2d(height, width, buf, buf, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard lock(fftw_planner_mutex());
  fftw_destroy_plan(plan);
}

}  // namespace detail

/// Unnormalized forward 2D DFT.
inline ComplexPlane dft2(const Image& img) {
  const int h = img.height(), w = img.width();
  const std::size_t n = img.size();
  auto buf = detail::fftw_buffer(n);
  for (std::size_t i = 0; i < n; ++i) {
    buf[i][0] = img[i];
    buf[i][1] = 0.0;
  }
  detail::execute_c2c(buf.get(), h, w, FFTW_FORWARD);
  ComplexPlane out(h, w);
  std::memcpy(static_cast<void*>(out.bins().data()), buf.get(), sizeof(fftw_complex) * n);
  return out;
}

/// Complex inverse DFT, divided by H*W.
inline ComplexPlane idft2_complex(const ComplexPlane& p) {
  const int h = p.height(), w = p.width();
  const std::size_t n = p.size();
  auto buf = detail::fftw_buffer(n);
  std::memcpy(buf.get(), p.bins().data(), sizeof(fftw_complex) * n);
  detail::execute_c2c(buf.get(), h, w, FFTW_BACKWARD);
  ComplexPlane out(h, w);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {buf[i][0] * scale, buf[i][1] * scale};
  return out;
}

/// Inverse DFT keeping the real part (the spectrum of a real image is Hermitian).
inline Image idft2(const ComplexPlane& p) {
  const ComplexPlane c = idft2_complex(p);
  Image out(p.height(), p.width());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return out;
}

}  // namespace pnp
