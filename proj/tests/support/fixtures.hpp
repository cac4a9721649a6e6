#pragma once

#include "sonopipe/pipeline.hpp"

namespace test {

/// Labeled phantom frames rendered in memory (phase 1, draw = index).
inline std::vector<sonopipe::synth::LabeledFrame> render_set(
    const sonopipe::synth::PhantomSpec& spec, std::size_t per_class) {
  using namespace sonopipe;
  const Frame base = synth::make_phantom(spec);
  std::vector<synth::LabeledFrame> out;
  std::uint64_t seq = 0;
  for (GestureLabel g : kAllGestures) {
    for (std::size_t i = 0; i < per_class; ++i) {
      out.push_back({synth::render_gesture(base, g, 1.0, spec, i).restamped(0, seq++), g});
    }
  }
  return out;
}

/// A pipeline config and trained model at a small image size.
struct Trained {
  sonopipe::PipelineConfig config;
  sonopipe::TrainResult result;
};

inline Trained train_small(std::size_t size = 64, double sigma = 0.01,
                           std::size_t per_class = 12) {
  sonopipe::PipelineConfig c;
  c.width = c.height = size;
  c.source.phantom.width = c.source.phantom.height = size;
  c.source.phantom.noise_sigma = sigma;
  c.serve = false;
  auto frames = render_set(c.source.phantom, per_class);
  return Trained{c, sonopipe::train(c, frames)};
}

}  // namespace test
