#include "sonopipe/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

#define SONOPIPE_AVX2 __attribute__((target("avx2,fma")))

namespace sonopipe::simd::detail {
namespace {

constexpr std::size_t kLanes = 4;

SONOPIPE_AVX2 double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

SONOPIPE_AVX2 double sum_avx2(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + kLanes));
  }
  if (i + kLanes <= n) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    i += kLanes;
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

SONOPIPE_AVX2 Moments centered_moments_avx2(const double* x, double mx,
                                            const double* y, double my,
                                            std::size_t n) {
  const __m256d vmx = _mm256_set1_pd(mx);
  const __m256d vmy = _mm256_set1_pd(my);
  __m256d sxx = _mm256_setzero_pd();
  __m256d syy = _mm256_setzero_pd();
  __m256d sxy = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(x + i), vmx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(y + i), vmy);
    sxx = _mm256_fmadd_pd(dx, dx, sxx);
    syy = _mm256_fmadd_pd(dy, dy, syy);
    sxy = _mm256_fmadd_pd(dx, dy, sxy);
  }
  Moments m{hsum(sxx), hsum(syy), hsum(sxy)};
  for (; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    m.sxx += dx * dx;
    m.syy += dy * dy;
    m.sxy += dx * dy;
  }
  return m;
}

SONOPIPE_AVX2 void accumulate_avx2(double* dst, const double* src,
                                   std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i),
                                            _mm256_loadu_pd(src + i)));
  }
  for (; i < n; ++i) dst[i] += src[i];
}

SONOPIPE_AVX2 void scale_avx2(double* dst, double s, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(dst + i), vs));
  }
  for (; i < n; ++i) dst[i] *= s;
}

SONOPIPE_AVX2 void luma_avx2(const double* r, const double* g, const double* b,
                             double* out, std::size_t n) {
  const __m256d wr = _mm256_set1_pd(0.299);
  const __m256d wg = _mm256_set1_pd(0.587);
  const __m256d wb = _mm256_set1_pd(0.114);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    // Same association as the scalar path, without fusing.
    const __m256d gb = _mm256_add_pd(_mm256_mul_pd(_mm256_loadu_pd(g + i), wg),
                                     _mm256_mul_pd(_mm256_loadu_pd(b + i), wb));
    const __m256d v = _mm256_add_pd(_mm256_mul_pd(_mm256_loadu_pd(r + i), wr), gb);
    _mm256_storeu_pd(out + i, _mm256_min_pd(_mm256_max_pd(v, zero), one));
  }
  for (; i < n; ++i) {
    const double v = r[i] * 0.299 + (g[i] * 0.587 + b[i] * 0.114);
    out[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  }
}

bool cpu_has_avx2_fma() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::Avx2,      sum_avx2, centered_moments_avx2,
                                 accumulate_avx2, scale_avx2, luma_avx2};
  static const bool supported = cpu_has_avx2_fma();
  return supported ? &table : nullptr;
}

}  // namespace sonopipe::simd::detail

#else

namespace sonopipe::simd::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace sonopipe::simd::detail

#endif
