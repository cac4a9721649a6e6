#include "sonopipe/features.hpp"

#include <cmath>

#include <fmt/format.h>

#include "sonopipe/error.hpp"
#include "sonopipe/simd/kernels.hpp"
#include "sonopipe/templates.hpp"

namespace sonopipe {

namespace {
// A constant frame leaves rounding residue in the centered sums, so variance
// below an RMS deviation of 1e-12 counts as zero.
constexpr double kMinMeanSquare = 1e-24;
}  // namespace

double pearson_unclamped(const Frame& a, const Frame& b) {
  if (!a.same_dims(b)) {
    throw DimensionError(fmt::format("pearson: {}x{} vs {}x{}", a.width(),
                                     a.height(), b.width(), b.height()));
  }
  const auto n = static_cast<double>(a.size());
  const double ma = simd::sum(a.pixels()) / n;
  const double mb = simd::sum(b.pixels()) / n;
  const simd::Moments m = simd::centered_moments(a.pixels(), ma, b.pixels(), mb);
  if (!(m.sxx > kMinMeanSquare * n) || !(m.syy > kMinMeanSquare * n)) {
    throw ZeroVarianceError(fmt::format(
        "pearson: zero pixel variance (frame seq {} / {})", a.seq(), b.seq()));
  }
  // sqrt of the product keeps self-correlation exactly 1: sqrt(fl(s*s)) == s.
  return m.sxy / std::sqrt(m.sxx * m.syy);
}

double pearson(const Frame& a, const Frame& b) {
  const double r = pearson_unclamped(a, b);
  return r > 1.0 ? 1.0 : (r < -1.0 ? -1.0 : r);
}

CorrelationVector extract_features(const Frame& f, const TemplateStore& store) {
  if (f.width() != store.width() || f.height() != store.height()) {
    throw DimensionError(fmt::format(
        "frame {}x{} does not match template store {}x{}", f.width(),
        f.height(), store.width(), store.height()));
  }
  CorrelationVector v;
  v.frame_seq = f.seq();
  v.timestamp_us = f.timestamp_us();
  for (GestureLabel g : kAllGestures) {
    v.r[ordinal(g)] = pearson(f, store.at(g).image);
  }
  return v;
}

std::pair<GestureLabel, double> argmax_classify(const CorrelationVector& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumGestures; ++i) {
    if (v.r[i] > v.r[best]) best = i;
  }
  return {static_cast<GestureLabel>(best), v.r[best]};
}

}  // namespace sonopipe
