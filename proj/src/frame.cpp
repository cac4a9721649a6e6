#include "sonopipe/frame.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include <fmt/format.h>

#include "sonopipe/error.hpp"
#include "sonopipe/simd/kernels.hpp"

namespace sonopipe {

Frame::Frame(std::size_t width, std::size_t height, std::vector<double> pixels,
             std::uint64_t timestamp_us, std::uint64_t seq)
    : width_(width),
      height_(height),
      pixels_(std::move(pixels)),
      timestamp_us_(timestamp_us),
      seq_(seq) {
  if (width_ == 0 || height_ == 0) {
    throw DimensionError(fmt::format("frame dims must be positive, got {}x{}",
                                     width_, height_));
  }
  if (pixels_.size() != width_ * height_) {
    throw DimensionError(fmt::format("frame {}x{} needs {} pixels, got {}",
                                     width_, height_, width_ * height_,
                                     pixels_.size()));
  }
  for (double v : pixels_) {
    // Negated form so NaN is rejected too.
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ArgumentError(fmt::format("pixel value {} outside [0, 1]", v));
    }
  }
}

Frame Frame::filled(std::size_t width, std::size_t height, double value,
                    std::uint64_t timestamp_us, std::uint64_t seq) {
  return Frame(width, height, std::vector<double>(width * height, value),
               timestamp_us, seq);
}

Frame Frame::restamped(std::uint64_t timestamp_us, std::uint64_t seq) const {
  Frame copy = *this;
  copy.timestamp_us_ = timestamp_us;
  copy.seq_ = seq;
  return copy;
}

Frame to_grayscale(std::span<const double> r, std::span<const double> g,
                   std::span<const double> b, std::size_t width,
                   std::size_t height, std::uint64_t timestamp_us,
                   std::uint64_t seq) {
  const std::size_t n = width * height;
  if (r.size() != n || g.size() != n || b.size() != n) {
    throw DimensionError(fmt::format(
        "channel sizes {}/{}/{} do not match {}x{}", r.size(), g.size(),
        b.size(), width, height));
  }
  for (auto channel : {r, g, b}) {
    for (double v : channel) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ArgumentError(fmt::format("channel value {} outside [0, 1]", v));
      }
    }
  }
  std::vector<double> out(n);
  simd::kernels().luma(r.data(), g.data(), b.data(), out.data(), n);
  return Frame(width, height, std::move(out), timestamp_us, seq);
}

Frame crop(const Frame& f, const Roi& roi) {
  if (!roi.fits(f.width(), f.height())) {
    throw ArgumentError(fmt::format("roi ({},{},{},{}) does not fit {}x{}",
                                    roi.x, roi.y, roi.w, roi.h, f.width(),
                                    f.height()));
  }
  std::vector<double> out;
  out.reserve(roi.w * roi.h);
  const auto src = f.pixels();
  for (std::size_t j = 0; j < roi.h; ++j) {
    const auto row = src.subspan((roi.y + j) * f.width() + roi.x, roi.w);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Frame(roi.w, roi.h, std::move(out), f.timestamp_us(), f.seq());
}

namespace {

struct Tap {
  std::size_t i0;
  std::size_t i1;
  double w;  // weight of i1
};

// Corner-aligned sample positions: output index k maps to k*(n_in-1)/(n_out-1).
std::vector<Tap> make_taps(std::size_t n_in, std::size_t n_out) {
  std::vector<Tap> taps(n_out);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double pos =
        n_out == 1 ? 0.0
                   : static_cast<double>(k * (n_in - 1)) /
                         static_cast<double>(n_out - 1);
    std::size_t i0 = static_cast<std::size_t>(std::floor(pos));
    if (i0 >= n_in - 1) i0 = n_in - 1;
    const std::size_t i1 = i0 + 1 < n_in ? i0 + 1 : i0;
    taps[k] = Tap{i0, i1, pos - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Frame resize(const Frame& f, std::size_t out_w, std::size_t out_h) {
  if (out_w == 0 || out_h == 0) {
    throw ArgumentError(
        fmt::format("resize target must be positive, got {}x{}", out_w, out_h));
  }
  if (out_w == f.width() && out_h == f.height()) return f;

  const auto xs = make_taps(f.width(), out_w);
  const auto ys = make_taps(f.height(), out_h);
  std::vector<double> out(out_w * out_h);
  for (std::size_t j = 0; j < out_h; ++j) {
    const Tap& ty = ys[j];
    for (std::size_t i = 0; i < out_w; ++i) {
      const Tap& tx = xs[i];
      // lerp is exact on flat regions.
      const double top = std::lerp(f.at(tx.i0, ty.i0), f.at(tx.i1, ty.i0), tx.w);
      const double bot = std::lerp(f.at(tx.i0, ty.i1), f.at(tx.i1, ty.i1), tx.w);
      const double v = std::lerp(top, bot, ty.w);
      out[j * out_w + i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }
  }
  return Frame(out_w, out_h, std::move(out), f.timestamp_us(), f.seq());
}

std::uint8_t quantize_pixel(double v) {
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

std::vector<std::uint8_t> encode_pgm(const Frame& f) {
  const std::string header = fmt::format("P5\n{} {}\n255\n", f.width(), f.height());
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(header.size() + f.size());
  for (double v : f.pixels()) bytes.push_back(quantize_pixel(v));
  return bytes;
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      ++pos_;
      if (++digits > 9) throw FormatError("pgm header number too large");
    }
    if (digits == 0) throw FormatError("malformed pgm header: expected number");
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("malformed pgm header: missing separator");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

Frame decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("not a binary pgm (missing P5 magic)");
  }
  HeaderReader reader(bytes);
  const std::size_t width = reader.number();
  const std::size_t height = reader.number();
  const std::size_t maxval = reader.number();
  reader.single_space();
  if (maxval != 255) {
    throw FormatError(fmt::format("unsupported pgm maxval {}", maxval));
  }
  if (width == 0 || height == 0) throw FormatError("pgm with zero dimension");
  const std::size_t n = width * height;
  const std::size_t have = bytes.size() - reader.pos();
  if (have < n) {
    throw FormatError(fmt::format("truncated pgm payload: {} of {} bytes", have, n));
  }
  if (have > n) {
    throw FormatError(fmt::format("pgm has {} trailing bytes", have - n));
  }
  std::vector<double> pixels(n);
  for (std::size_t i = 0; i < n; ++i) {
    pixels[i] = static_cast<double>(bytes[reader.pos() + i]) / 255.0;
  }
  return Frame(width, height, std::move(pixels));
}

Frame load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  try {
    return decode_pgm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void save_pgm(const Frame& f, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(fmt::format("short write to {}", path.string()));
}

}  // namespace sonopipe
