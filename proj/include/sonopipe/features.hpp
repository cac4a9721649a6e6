#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "sonopipe/frame.hpp"
#include "sonopipe/gesture.hpp"

namespace sonopipe {

class TemplateStore;

/// Per-gesture correlation of one live frame against the template store.
struct CorrelationVector {
  std::array<double, kNumGestures> r{};
  std::uint64_t frame_seq = 0;
  std::uint64_t timestamp_us = 0;

  double operator[](GestureLabel g) const { return r[ordinal(g)]; }
};

/// Pixel-wise Pearson correlation of two equally sized frames.
///
/// Two-pass: per-image means first, then centered moments. The result is
/// clamped to [-1, 1] and is exactly symmetric in its arguments. Throws
/// DimensionError on a size mismatch and ZeroVarianceError when either image
/// is constant; a blank frame is a fault, not a zero correlation.
double pearson(const Frame& a, const Frame& b);

/// Same as pearson() but reports the unclamped ratio.
double pearson_unclamped(const Frame& a, const Frame& b);

CorrelationVector extract_features(const Frame& f, const TemplateStore& store);

/// Label with the largest correlation; ties go to the lowest ordinal.
std::pair<GestureLabel, double> argmax_classify(const CorrelationVector& v);

}  // namespace sonopipe
