#include "sonopipe/templates.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <optional>

#include <fmt/format.h>
#include "json.hpp"

#include "sonopipe/error.hpp"
#include "sonopipe/features.hpp"
#include "sonopipe/simd/kernels.hpp"

namespace sonopipe {

using nlohmann::json;

TemplateStore::TemplateStore(std::array<GestureTemplate, kNumGestures> templates)
    : templates_(std::move(templates)) {
  for (std::size_t i = 0; i < kNumGestures; ++i) {
    const GestureTemplate& t = templates_[i];
    if (ordinal(t.label) != i) {
      throw ArgumentError(fmt::format("template slot {} holds label {}", i,
                                      gesture_name(t.label)));
    }
    if (!t.image.same_dims(templates_[0].image)) {
      throw DimensionError(fmt::format("template {} is {}x{}, expected {}x{}",
                                       gesture_name(t.label), t.image.width(),
                                       t.image.height(), width(), height()));
    }
    if (t.n_frames < 1 || t.n_frames != t.source_ids.size()) {
      throw ArgumentError(fmt::format(
          "template {}: n_frames {} with {} source ids", gesture_name(t.label),
          t.n_frames, t.source_ids.size()));
    }
  }
}

Frame mean_image(std::span<const Frame> frames) {
  if (frames.empty()) throw ArgumentError("mean_image of an empty list");
  const Frame& first = frames.front();
  for (const Frame& f : frames) {
    if (!f.same_dims(first)) {
      throw DimensionError(fmt::format("mean_image: {}x{} vs {}x{}", f.width(),
                                       f.height(), first.width(), first.height()));
    }
  }
  const auto& k = simd::kernels();
  const std::size_t n = first.size();
  std::vector<double> acc(n, 0.0);
  std::vector<double> lo(first.pixels().begin(), first.pixels().end());
  std::vector<double> hi = lo;
  for (const Frame& f : frames) {
    const auto px = f.pixels();
    k.accumulate(acc.data(), px.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      lo[i] = std::min(lo[i], px[i]);
      hi[i] = std::max(hi[i], px[i]);
    }
  }
  k.scale(acc.data(), 1.0 / static_cast<double>(frames.size()), n);
  // Rounding may leave the mean an ulp outside the inputs' range.
  for (std::size_t i = 0; i < n; ++i) acc[i] = std::clamp(acc[i], lo[i], hi[i]);
  const Frame& last = frames.back();
  return Frame(first.width(), first.height(), std::move(acc), last.timestamp_us(),
               last.seq());
}

namespace {

bool has_variance(const Frame& f) {
  const auto px = f.pixels();
  return std::adjacent_find(px.begin(), px.end(), std::not_equal_to<>()) != px.end();
}

}  // namespace

std::vector<Frame> select_stable_frames(std::span<const Frame> frames, std::size_t n) {
  if (n < 1) throw ArgumentError("select_stable_frames: n must be at least 1");
  if (frames.empty()) throw ArgumentError("select_stable_frames: no frames");
  for (const Frame& f : frames) {
    if (!f.same_dims(frames.front())) {
      throw DimensionError("select_stable_frames: frames differ in size");
    }
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (has_variance(frames[i])) candidates.push_back(i);
  }
  if (candidates.empty()) {
    throw ZeroVarianceError("select_stable_frames: every frame is constant");
  }

  const std::size_t m = candidates.size();
  std::vector<double> score(m, 0.0);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      const double r = pearson(frames[candidates[a]], frames[candidates[b]]);
      score[a] += r;
      score[b] += r;
    }
  }
  if (m > 1) {
    for (double& s : score) s /= static_cast<double>(m - 1);
  }

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return frames[candidates[a]].seq() < frames[candidates[b]].seq();
  });
  order.resize(std::min(n, m));
  std::sort(order.begin(), order.end());

  std::vector<Frame> picked;
  picked.reserve(order.size());
  for (std::size_t o : order) picked.push_back(frames[candidates[o]]);
  return picked;
}

GestureTemplate build_template(std::span<const Frame> frames, GestureLabel label,
                               std::size_t n) {
  std::vector<Frame> picked = select_stable_frames(frames, n);
  std::vector<std::uint64_t> ids;
  ids.reserve(picked.size());
  for (const Frame& f : picked) ids.push_back(f.seq());
  return GestureTemplate{label, mean_image(picked), picked.size(), std::move(ids)};
}

std::string template_filename(GestureLabel g) {
  return fmt::format("{}.pgm", gesture_name(g));
}

void save_store(const TemplateStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["width"] = store.width();
  manifest["height"] = store.height();
  json entries = json::object();
  for (GestureLabel g : kAllGestures) {
    const GestureTemplate& t = store.at(g);
    save_pgm(t.image, dir / template_filename(g));
    entries[std::string(gesture_name(g))] = {{"file", template_filename(g)},
                                             {"n_frames", t.n_frames},
                                             {"source_ids", t.source_ids}};
  }
  manifest["templates"] = std::move(entries);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", (dir / "manifest.json").string()));
  out << manifest.dump(2) << '\n';
}

TemplateStore load_store(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw Error(fmt::format("cannot open {}", manifest_path.string()));
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("{}: {}", manifest_path.string(), e.what()));
  }

  try {
    const auto width = manifest.at("width").get<std::size_t>();
    const auto height = manifest.at("height").get<std::size_t>();
    const json& entries = manifest.at("templates");
    std::array<std::optional<GestureTemplate>, kNumGestures> slots;
    for (GestureLabel g : kAllGestures) {
      const std::string name{gesture_name(g)};
      if (!entries.contains(name)) {
        throw FormatError(fmt::format("template manifest is missing '{}'", name));
      }
      const json& e = entries.at(name);
      Frame image = load_pgm(dir / e.at("file").get<std::string>());
      if (image.width() != width || image.height() != height) {
        throw FormatError(fmt::format(
            "template '{}' is {}x{} but manifest says {}x{}", name, image.width(),
            image.height(), width, height));
      }
      auto ids = e.at("source_ids").get<std::vector<std::uint64_t>>();
      const auto n_frames = e.at("n_frames").get<std::size_t>();
      if (n_frames < 1 || n_frames != ids.size()) {
        throw FormatError(fmt::format("template '{}': n_frames {} but {} source ids",
                                      name, n_frames, ids.size()));
      }
      slots[ordinal(g)] = GestureTemplate{g, std::move(image), n_frames, std::move(ids)};
    }
    return TemplateStore({std::move(*slots[0]), std::move(*slots[1]),
                          std::move(*slots[2]), std::move(*slots[3])});
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("{}: {}", manifest_path.string(), e.what()));
  }
}

TemplateStore quantized(const TemplateStore& store) {
  auto requant = [&](GestureLabel g) {
    const GestureTemplate& t = store.at(g);
    Frame q = decode_pgm(encode_pgm(t.image)).restamped(t.image.timestamp_us(),
                                                        t.image.seq());
    return GestureTemplate{g, std::move(q), t.n_frames, t.source_ids};
  };
  return TemplateStore({requant(GestureLabel::Rest), requant(GestureLabel::PowerGrip),
                        requant(GestureLabel::WristPronation),
                        requant(GestureLabel::Point)});
}

}  // namespace sonopipe
