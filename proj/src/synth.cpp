#include "sonopipe/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>

#include "json.hpp"
#include "sonopipe/error.hpp"
#include "sonopipe/rng.hpp"

namespace sonopipe::synth {

using nlohmann::json;

namespace {

// RNG stream ids. Changing any of these changes every generated image.
constexpr std::uint64_t kStreamBands = 1;
constexpr std::uint64_t kStreamSpeckle = 2;
constexpr std::uint64_t kStreamNoise = 16;  // + ordinal

struct Band {
  double center;
  double half_thickness;
  double intensity;
  double amplitude;
  double frequency;  // cycles across the image width
  double phase;
};

struct Geometry {
  double slot;
  double edge;
  std::vector<Band> bands;
};

Geometry band_geometry(const PhantomSpec& spec) {
  const rng::CounterRng gen(spec.seed, kStreamBands);
  const auto h = static_cast<double>(spec.height);
  const double top = 0.08 * h;
  const double slot = (0.95 * h - top) / static_cast<double>(spec.n_bands);
  Geometry geo{slot, std::max(1.0, 0.01 * h), {}};
  std::uint64_t c = 0;
  for (std::size_t k = 0; k < spec.n_bands; ++k) {
    Band b;
    b.center = top + (static_cast<double>(k) + 0.5) * slot +
               (gen.uniform(c++) - 0.5) * 0.2 * slot;
    b.half_thickness = slot * (0.28 + 0.1 * gen.uniform(c++));
    b.intensity = 0.45 + 0.45 * gen.uniform(c++);
    b.amplitude = slot * (0.04 + 0.08 * gen.uniform(c++));
    b.frequency = 1.0 + 2.0 * gen.uniform(c++);
    b.phase = 2.0 * std::numbers::pi * gen.uniform(c++);
    geo.bands.push_back(b);
  }
  return geo;
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Per-gesture, per-band deformation; bands beyond four reuse the table.
constexpr std::array<std::array<BandDeformation, 4>, kNumGestures> kDeformations = {{
    {{{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}}},
    {{{0.06, 0.96}, {0.09, 0.95}, {0.05, 0.97}, {0.03, 1.00}}},
    {{{-0.08, 1.00}, {0.03, 1.03}, {-0.06, 0.97}, {0.08, 0.96}}},
    {{{0.04, 0.97}, {0.08, 0.96}, {0.03, 1.00}, {0.00, 1.00}}},
}};

}  // namespace

void PhantomSpec::validate() const {
  if (width < 32 || height < 32) {
    throw ArgumentError(fmt::format("phantom dims {}x{} below 32x32", width, height));
  }
  if (n_bands == 0) throw ArgumentError("phantom needs at least one band");
  if (!(speckle_strength >= 0.0) || !(noise_sigma >= 0.0)) {
    throw ArgumentError("phantom speckle and noise must be non-negative");
  }
}

BandDeformation gesture_deformation(GestureLabel label, std::size_t band) {
  return kDeformations[ordinal(label)][band % 4];
}

namespace {

// Separable Gaussian blur with edge clamping.
std::vector<double> blur(const std::vector<double>& in, std::size_t w, std::size_t h,
                         double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    norm += v;
  }
  for (double& v : kernel) v /= norm;

  const auto sw = static_cast<std::ptrdiff_t>(w);
  const auto sh = static_cast<std::ptrdiff_t>(h);
  std::vector<double> tmp(in.size()), out(in.size());
  for (std::ptrdiff_t y = 0; y < sh; ++y) {
    for (std::ptrdiff_t x = 0; x < sw; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const std::ptrdiff_t xx = std::clamp<std::ptrdiff_t>(x + i, 0, sw - 1);
        acc += kernel[static_cast<std::size_t>(i + radius)] * in[static_cast<std::size_t>(y * sw + xx)];
      }
      tmp[static_cast<std::size_t>(y * sw + x)] = acc;
    }
  }
  for (std::ptrdiff_t y = 0; y < sh; ++y) {
    for (std::ptrdiff_t x = 0; x < sw; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const std::ptrdiff_t yy = std::clamp<std::ptrdiff_t>(y + i, 0, sh - 1);
        acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(yy * sw + x)];
      }
      out[static_cast<std::size_t>(y * sw + x)] = acc;
    }
  }
  return out;
}

// Fully developed speckle: intensity of a smoothed circular complex Gaussian
// field, rescaled to unit mean. Marginally exponential, spatially correlated
// over about one grain.
std::vector<double> speckle_field(const PhantomSpec& spec) {
  const std::size_t n = spec.width * spec.height;
  const rng::CounterRng gen(spec.seed, kStreamSpeckle);
  std::vector<double> re(n), im(n);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = gen.normal(2 * i);
    im[i] = gen.normal(2 * i + 1);
  }
  const double grain = std::max(0.8, static_cast<double>(spec.width) / 160.0);
  re = blur(re, spec.width, spec.height, grain);
  im = blur(im, spec.width, spec.height, grain);
  std::vector<double> intensity(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    intensity[i] = re[i] * re[i] + im[i] * im[i];
    mean += intensity[i];
  }
  mean /= static_cast<double>(n);
  for (double& v : intensity) v /= mean;
  return intensity;
}

}  // namespace

Frame make_phantom(const PhantomSpec& spec) {
  spec.validate();
  const Geometry geo = band_geometry(spec);
  const std::size_t w = spec.width;
  const std::size_t h = spec.height;
  std::vector<double> grain;
  if (spec.speckle_strength > 0.0) grain = speckle_field(spec);

  std::vector<double> px(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / static_cast<double>(w);
      const auto fy = static_cast<double>(y);
      double v = 0.08;
      for (const Band& b : geo.bands) {
        const double wave = b.amplitude * std::sin(2.0 * std::numbers::pi * b.frequency * fx + b.phase);
        const double upper = b.center - b.half_thickness + wave;
        const double lower = b.center + b.half_thickness - 0.5 * wave;
        v += b.intensity * logistic((fy - upper) / geo.edge) * logistic((lower - fy) / geo.edge);
      }
      if (!grain.empty()) {
        v *= std::max(0.0, 1.0 + spec.speckle_strength * (grain[y * w + x] - 1.0));
      }
      px[y * w + x] = v;
    }
  }
  const auto [lo, hi] = std::minmax_element(px.begin(), px.end());
  const double min = *lo;
  const double range = *hi - *lo;
  for (double& v : px) v = range > 0.0 ? (v - min) / range : 0.0;
  return Frame(w, h, std::move(px));
}

Frame render_gesture(const Frame& base, GestureLabel label, double phase,
                     const PhantomSpec& spec, std::uint64_t draw) {
  spec.validate();
  if (!(phase >= 0.0 && phase <= 1.0)) {
    throw ArgumentError(fmt::format("render_gesture: phase {} outside [0, 1]", phase));
  }
  if (base.width() != spec.width || base.height() != spec.height) {
    throw DimensionError("render_gesture: base does not match the phantom spec");
  }
  const std::size_t w = spec.width;
  const std::size_t h = spec.height;
  const Geometry geo = band_geometry(spec);

  // Vertical displacement per row: each band moves and compresses about its
  // centre, blended with Gaussian weights.
  std::vector<double> disp(h, 0.0);
  if (label != GestureLabel::Rest && phase > 0.0) {
    const double reach = 0.6 * geo.slot;
    for (std::size_t y = 0; y < h; ++y) {
      const auto fy = static_cast<double>(y);
      double d = 0.0;
      for (std::size_t k = 0; k < geo.bands.size(); ++k) {
        const Band& b = geo.bands[k];
        const BandDeformation def = gesture_deformation(label, k);
        const double z = (fy - b.center) / reach;
        const double wgt = std::exp(-z * z);
        d += wgt * (def.shift * geo.slot + (fy - b.center) * (1.0 - 1.0 / def.compression));
      }
      disp[y] = phase * d;
    }
  }

  std::vector<double> px(w * h);
  const auto src = base.pixels();
  for (std::size_t y = 0; y < h; ++y) {
    if (disp[y] == 0.0) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(y * w), w,
                  px.begin() + static_cast<std::ptrdiff_t>(y * w));
      continue;
    }
    const double sy = std::clamp(static_cast<double>(y) - disp[y], 0.0,
                                 static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double t = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      px[y * w + x] = src[y0 * w + x] * (1.0 - t) + src[y1 * w + x] * t;
    }
  }

  if (spec.noise_sigma > 0.0) {
    const rng::CounterRng noise(spec.seed ^ rng::mix64(draw + 1),
                                kStreamNoise + ordinal(label));
    for (std::size_t i = 0; i < px.size(); ++i) {
      px[i] = std::clamp(px[i] + spec.noise_sigma * noise.normal(i), 0.0, 1.0);
    }
  }
  return Frame(w, h, std::move(px), base.timestamp_us(), base.seq());
}

namespace {

json spec_to_json(const PhantomSpec& s) {
  return {{"seed", s.seed},           {"width", s.width},
          {"height", s.height},       {"n_bands", s.n_bands},
          {"speckle_strength", s.speckle_strength},
          {"noise_sigma", s.noise_sigma}};
}

}  // namespace

DatasetManifest generate_dataset(const PhantomSpec& spec, std::size_t per_class,
                                 const std::filesystem::path& out_dir) {
  spec.validate();
  if (per_class < 1) throw ArgumentError("generate_dataset: per_class must be at least 1");
  std::filesystem::create_directories(out_dir);

  DatasetManifest manifest{spec, per_class, {}};
  const Frame base = make_phantom(spec);
  std::uint64_t seq = 0;
  json frames = json::array();
  for (GestureLabel g : kAllGestures) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::string file = fmt::format("{}_{:04}.pgm", gesture_name(g), i);
      save_pgm(render_gesture(base, g, 1.0, spec, i), out_dir / file);
      manifest.entries.push_back({file, g, seq});
      frames.push_back({{"file", file}, {"label", gesture_name(g)}, {"seq", seq}});
      ++seq;
    }
  }
  const json doc = {{"spec", spec_to_json(spec)},
                    {"per_class", per_class},
                    {"frames", std::move(frames)}};
  std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", (out_dir / "manifest.json").string()));
  out << doc.dump(2) << '\n';
  if (!out) throw Error("short write of dataset manifest");
  return manifest;
}

std::vector<LabeledFrame> load_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  std::vector<LabeledFrame> out;
  try {
    const json doc = json::parse(in);
    std::uint64_t next_seq = 0;
    for (const json& e : doc.at("frames")) {
      const auto name = e.at("label").get<std::string>();
      const auto label = parse_gesture(name);
      if (!label) throw FormatError(fmt::format("{}: unknown label '{}'", path.string(), name));
      const std::uint64_t seq = e.value("seq", next_seq);
      next_seq = seq + 1;
      Frame f = load_pgm(dir / e.at("file").get<std::string>()).restamped(0, seq);
      out.push_back({std::move(f), *label});
    }
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return out;
}

}  // namespace sonopipe::synth
