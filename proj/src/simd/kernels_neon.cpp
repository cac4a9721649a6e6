#include "sonopipe/simd/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace sonopipe::simd::detail {
namespace {

constexpr std::size_t kLanes = 2;

double sum_neon(const double* x, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
    acc0 = vaddq_f64(acc0, vld1q_f64(x + i));
    acc1 = vaddq_f64(acc1, vld1q_f64(x + i + kLanes));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

Moments centered_moments_neon(const double* x, double mx, const double* y,
                              double my, std::size_t n) {
  const float64x2_t vmx = vdupq_n_f64(mx);
  const float64x2_t vmy = vdupq_n_f64(my);
  float64x2_t sxx = vdupq_n_f64(0.0);
  float64x2_t syy = vdupq_n_f64(0.0);
  float64x2_t sxy = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const float64x2_t dx = vsubq_f64(vld1q_f64(x + i), vmx);
    const float64x2_t dy = vsubq_f64(vld1q_f64(y + i), vmy);
    sxx = vfmaq_f64(sxx, dx, dx);
    syy = vfmaq_f64(syy, dy, dy);
    sxy = vfmaq_f64(sxy, dx, dy);
  }
  Moments m{vaddvq_f64(sxx), vaddvq_f64(syy), vaddvq_f64(sxy)};
  for (; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    m.sxx += dx * dx;
    m.syy += dy * dy;
    m.sxy += dx * dy;
  }
  return m;
}

void accumulate_neon(double* dst, const double* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    vst1q_f64(dst + i, vaddq_f64(vld1q_f64(dst + i), vld1q_f64(src + i)));
  }
  for (; i < n; ++i) dst[i] += src[i];
}

void scale_neon(double* dst, double s, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    vst1q_f64(dst + i, vmulq_n_f64(vld1q_f64(dst + i), s));
  }
  for (; i < n; ++i) dst[i] *= s;
}

void luma_neon(const double* r, const double* g, const double* b, double* out,
               std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  const float64x2_t one = vdupq_n_f64(1.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const float64x2_t gb = vaddq_f64(vmulq_n_f64(vld1q_f64(g + i), 0.587),
                                     vmulq_n_f64(vld1q_f64(b + i), 0.114));
    const float64x2_t v = vaddq_f64(vmulq_n_f64(vld1q_f64(r + i), 0.299), gb);
    vst1q_f64(out + i, vminq_f64(vmaxq_f64(v, zero), one));
  }
  for (; i < n; ++i) {
    const double v = r[i] * 0.299 + (g[i] * 0.587 + b[i] * 0.114);
    out[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  }
}

}  // namespace

const KernelTable* neon_table() {
  static const KernelTable table{Isa::Neon,      sum_neon, centered_moments_neon,
                                 accumulate_neon, scale_neon, luma_neon};
  return &table;
}

}  // namespace sonopipe::simd::detail

#else

namespace sonopipe::simd::detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace sonopipe::simd::detail

#endif
