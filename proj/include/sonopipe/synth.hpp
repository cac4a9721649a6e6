#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sonopipe/frame.hpp"
#include "sonopipe/gesture.hpp"

namespace sonopipe::synth {

/// Parameters of the synthetic forearm phantom.
struct PhantomSpec {
  std::uint64_t seed = 42;
  std::size_t width = 480;
  std::size_t height = 480;
  std::size_t n_bands = 4;
  double speckle_strength = 0.5;
  double noise_sigma = 0.0;

  /// Throws ArgumentError when dims are below 32x32, n_bands is zero or a
  /// parameter is negative.
  void validate() const;
};

/// Displacement applied to one band at full phase.
struct BandDeformation {
  double shift;        // fraction of the band slot height, positive = deeper
  double compression;  // thickness factor about the band centre
};

/// The deformation of band `band` for a gesture. Rest is the identity.
BandDeformation gesture_deformation(GestureLabel label, std::size_t band);

/// Smooth layered band structure times seeded multiplicative speckle,
/// min-max normalized to [0, 1].
Frame make_phantom(const PhantomSpec& spec);

/// Deforms `base` toward `label` by `phase` in [0, 1], then adds Gaussian
/// noise of spec.noise_sigma drawn from (seed, label, draw) and clamps.
Frame render_gesture(const Frame& base, GestureLabel label, double phase,
                     const PhantomSpec& spec, std::uint64_t draw = 0);

struct DatasetEntry {
  std::string file;
  GestureLabel label;
  std::uint64_t seq;
};

struct DatasetManifest {
  PhantomSpec spec;
  std::size_t per_class = 0;
  std::vector<DatasetEntry> entries;
};

/// Writes per_class frames per gesture (phase 1, fresh noise each) plus
/// manifest.json into out_dir.
DatasetManifest generate_dataset(const PhantomSpec& spec, std::size_t per_class,
                                 const std::filesystem::path& out_dir);

struct LabeledFrame {
  Frame frame;
  GestureLabel label;
};

/// Reads a dataset directory written by generate_dataset (or any directory
/// with a manifest of the same shape).
std::vector<LabeledFrame> load_dataset(const std::filesystem::path& dir);

}  // namespace sonopipe::synth
