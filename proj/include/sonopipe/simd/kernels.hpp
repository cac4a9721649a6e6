#pragma once

// Data-parallel inner loops behind the image and correlation code.
//
// Each kernel has a scalar reference implementation plus optional AVX2+FMA
// (x86-64) and NEON (aarch64) variants. The active table is picked once at
// startup from the CPU's capabilities; setting SONOPIPE_SIMD=scalar in the
// environment forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace sonopipe::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

/// Centered second moments of two equally sized sample vectors.
struct Moments {
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
};

struct KernelTable {
  Isa isa;
  /// Sum of n values.
  double (*sum)(const double* x, std::size_t n);
  /// sum (x-mx)^2, sum (y-my)^2, sum (x-mx)(y-my).
  Moments (*centered_moments)(const double* x, double mx, const double* y,
                              double my, std::size_t n);
  /// dst[i] += src[i].
  void (*accumulate)(double* dst, const double* src, std::size_t n);
  /// dst[i] *= s.
  void (*scale)(double* dst, double s, std::size_t n);
  /// out[i] = clamp(0.299 r + (0.587 g + 0.114 b), 0, 1). Bitwise identical
  /// across variants (no fused multiply-add).
  void (*luma)(const double* r, const double* g, const double* b, double* out,
               std::size_t n);
};

/// Table for a specific ISA, or nullptr when this build or CPU lacks it.
const KernelTable* kernels_for(Isa isa);

/// The dispatched table used by the library.
const KernelTable& kernels();

inline double sum(std::span<const double> x) {
  return kernels().sum(x.data(), x.size());
}

inline Moments centered_moments(std::span<const double> x, double mx,
                                std::span<const double> y, double my) {
  return kernels().centered_moments(x.data(), mx, y.data(), my, x.size());
}

namespace detail {
// Per-ISA tables; defined in their own translation units.
const KernelTable& scalar_table();
const KernelTable* avx2_table();
const KernelTable* neon_table();
}  // namespace detail

}  // namespace sonopipe::simd
