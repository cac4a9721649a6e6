#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sonopipe/frame.hpp"
#include "sonopipe/gesture.hpp"

namespace sonopipe {

/// Averaged representative image for one gesture.
struct GestureTemplate {
  GestureLabel label;
  Frame image;
  std::size_t n_frames;
  std::vector<std::uint64_t> source_ids;
};

/// Exactly one template per gesture, all with the same dimensions.
class TemplateStore {
 public:
  /// Templates must be given in ordinal order.
  explicit TemplateStore(std::array<GestureTemplate, kNumGestures> templates);

  const GestureTemplate& at(GestureLabel g) const { return templates_[ordinal(g)]; }
  std::size_t width() const { return templates_[0].image.width(); }
  std::size_t height() const { return templates_[0].image.height(); }

 private:
  std::array<GestureTemplate, kNumGestures> templates_;
};

inline constexpr std::size_t kDefaultTemplateFrames = 10;

/// Per-pixel arithmetic mean. Timestamp and seq come from the last input.
Frame mean_image(std::span<const Frame> frames);

/// The n frames with the highest mean correlation against the other
/// candidates, returned in input order. Constant frames are never chosen.
std::vector<Frame> select_stable_frames(std::span<const Frame> frames, std::size_t n);

GestureTemplate build_template(std::span<const Frame> frames, GestureLabel label,
                               std::size_t n = kDefaultTemplateFrames);

/// Filename of a gesture's image inside a template directory.
std::string template_filename(GestureLabel g);

void save_store(const TemplateStore& store, const std::filesystem::path& dir);
TemplateStore load_store(const std::filesystem::path& dir);

/// The store as it reads back from disk (pixels quantized to 8 bits).
TemplateStore quantized(const TemplateStore& store);

}  // namespace sonopipe
