#include <algorithm>

#include "sonopipe/simd/kernels.hpp"

namespace sonopipe::simd::detail {
namespace {

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

Moments centered_moments_scalar(const double* x, double mx, const double* y,
                                double my, std::size_t n) {
  Moments m;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    m.sxx += dx * dx;
    m.syy += dy * dy;
    m.sxy += dx * dy;
  }
  return m;
}

void accumulate_scalar(double* dst, const double* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

void scale_scalar(double* dst, double s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] *= s;
}

void luma_scalar(const double* r, const double* g, const double* b, double* out,
                 std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v = r[i] * 0.299 + (g[i] * 0.587 + b[i] * 0.114);
    out[i] = std::clamp(v, 0.0, 1.0);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::Scalar,       sum_scalar,
                                 centered_moments_scalar, accumulate_scalar,
                                 scale_scalar,      luma_scalar};
  return table;
}

}  // namespace sonopipe::simd::detail
