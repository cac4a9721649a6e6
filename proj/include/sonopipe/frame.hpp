#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace sonopipe {

/// One grayscale image. Pixels are row-major and normalized to [0, 1].
///
/// A Frame is immutable once built; every constructor path checks the pixel
/// count and range, so holders never re-validate.
class Frame {
 public:
  Frame(std::size_t width, std::size_t height, std::vector<double> pixels,
        std::uint64_t timestamp_us = 0, std::uint64_t seq = 0);

  /// Frame filled with a single value.
  static Frame filled(std::size_t width, std::size_t height, double value,
                      std::uint64_t timestamp_us = 0, std::uint64_t seq = 0);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }
  std::span<const double> pixels() const { return pixels_; }
  double at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }
  std::uint64_t timestamp_us() const { return timestamp_us_; }
  std::uint64_t seq() const { return seq_; }

  bool same_dims(const Frame& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  /// Copy with a new timestamp and sequence number.
  Frame restamped(std::uint64_t timestamp_us, std::uint64_t seq) const;

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  std::size_t width_;
  std::size_t height_;
  std::vector<double> pixels_;
  std::uint64_t timestamp_us_;
  std::uint64_t seq_;
};

/// Crop rectangle; (x, y) is the top-left corner.
struct Roi {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t w = 0;
  std::size_t h = 0;

  bool fits(std::size_t width, std::size_t height) const {
    return w >= 1 && h >= 1 && x + w <= width && y + h <= height;
  }
  friend bool operator==(const Roi&, const Roi&) = default;
};

/// BT.601 luma of three channel planes, each in [0, 1].
Frame to_grayscale(std::span<const double> r, std::span<const double> g,
                   std::span<const double> b, std::size_t width,
                   std::size_t height, std::uint64_t timestamp_us = 0,
                   std::uint64_t seq = 0);

Frame crop(const Frame& f, const Roi& roi);

/// Bilinear resize with corner-aligned sampling. Same-size resize is exact.
Frame resize(const Frame& f, std::size_t out_w, std::size_t out_h);

/// Binary PGM (P5) with maxval 255.
Frame load_pgm(const std::filesystem::path& path);
void save_pgm(const Frame& f, const std::filesystem::path& path);

/// In-memory PGM codec used by the file functions.
Frame decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const Frame& f);

/// round(v * 255) for a normalized pixel.
std::uint8_t quantize_pixel(double v);

}  // namespace sonopipe
