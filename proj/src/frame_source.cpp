#include "sonopipe/frame_source.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include <boost/asio.hpp>
#include <fmt/format.h>

namespace sonopipe {

namespace {

// Sleeps until `deadline` in short slices so interrupt() stays responsive.
bool sleep_until(std::chrono::steady_clock::time_point deadline,
                 const std::atomic<bool>& stop) {
  using namespace std::chrono_literals;
  while (!stop) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) return true;
    std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(deadline - now, 20ms));
  }
  return false;
}

std::uint64_t scheduled_us(std::uint64_t index, double rate_hz) {
  return static_cast<std::uint64_t>(std::llround(static_cast<double>(index) * 1e6 / rate_hz));
}

}  // namespace

// ---------------------------------------------------------------------------

DirectoryReplaySource::DirectoryReplaySource(const std::filesystem::path& dir,
                                             double rate_hz, PipelineClock clock)
    : rate_hz_(rate_hz), clock_(clock) {
  if (!(rate_hz_ >= 0.0)) throw ArgumentError("replay rate must be non-negative");
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      files_.push_back(entry.path());
    }
  }
  if (ec) throw SourceError(fmt::format("cannot list {}: {}", dir.string(), ec.message()));
  std::sort(files_.begin(), files_.end());
}

std::optional<Frame> DirectoryReplaySource::next() {
  if (stop_ || index_ >= files_.size()) {
    index_ = files_.size();
    return std::nullopt;
  }
  std::uint64_t ts;
  if (rate_hz_ > 0.0) {
    ts = scheduled_us(index_, rate_hz_);
    if (!sleep_until(clock_.at(ts), stop_)) {
      index_ = files_.size();
      return std::nullopt;
    }
  } else {
    ts = std::max(last_ts_, clock_.now_us());
  }
  Frame raw = [&] {
    try {
      return load_pgm(files_[index_]);
    } catch (const Error& e) {
      throw SourceError(e.what());
    }
  }();
  last_ts_ = ts;
  const auto seq = static_cast<std::uint64_t>(index_++);
  return raw.restamped(ts, seq);
}

// ---------------------------------------------------------------------------

SyntheticSource::SyntheticSource(synth::PhantomSpec spec, std::vector<ScriptStep> script,
                                 double rate_hz, PipelineClock clock,
                                 std::size_t frame_limit, double ramp_s)
    : spec_(spec),
      base_(synth::make_phantom(spec)),
      script_(std::move(script)),
      rate_hz_(rate_hz),
      clock_(clock),
      frame_limit_(frame_limit),
      ramp_s_(ramp_s) {
  if (!(rate_hz_ >= 0.0)) throw ArgumentError("synthetic rate must be non-negative");
  if (!(ramp_s_ > 0.0)) throw ArgumentError("gesture ramp must be positive");
}

void SyntheticSource::set_target(GestureLabel g) {
  std::lock_guard lock(target_mu_);
  target_ = g;
}

GestureLabel SyntheticSource::target() const {
  std::lock_guard lock(target_mu_);
  return target_;
}

std::pair<GestureLabel, double> SyntheticSource::live_pose(std::uint64_t t_us) {
  const GestureLabel want = target();
  const double dt = last_live_us_ ? static_cast<double>(t_us - *last_live_us_) * 1e-6 : 0.0;
  last_live_us_ = t_us;
  // Out of the old gesture, then into the new one: 2 phase units per ramp.
  double budget = dt * 2.0 / ramp_s_;
  if (shown_ != want) {
    const double down = std::min(budget, shown_phase_);
    shown_phase_ -= down;
    budget -= down;
    if (shown_phase_ <= 0.0 || shown_ == GestureLabel::Rest) {
      shown_ = want;
      shown_phase_ = 0.0;
    }
  }
  if (shown_ == want) shown_phase_ = std::min(1.0, shown_phase_ + budget);
  return {shown_, shown_phase_};
}

std::optional<Frame> SyntheticSource::next() {
  if (ended_ || stop_ || (frame_limit_ != 0 && seq_ >= frame_limit_)) {
    ended_ = true;
    return std::nullopt;
  }
  if (rate_hz_ > 0.0 && !sleep_until(clock_.at(scheduled_us(seq_, rate_hz_)), stop_)) {
    ended_ = true;
    return std::nullopt;
  }

  GestureLabel label;
  double phase = 1.0;
  if (!script_.empty()) {
    while (step_ < script_.size() && step_frames_ >= script_[step_].frames) {
      ++step_;
      step_frames_ = 0;
    }
    if (step_ >= script_.size()) {
      ended_ = true;
      return std::nullopt;
    }
    label = script_[step_].gesture;
    ++step_frames_;
  } else {
    const std::uint64_t t = rate_hz_ > 0.0 ? scheduled_us(seq_, rate_hz_) : clock_.now_us();
    std::tie(label, phase) = live_pose(t);
  }

  Frame f = synth::render_gesture(base_, label, phase, spec_, seq_);
  const std::uint64_t ts = std::max(last_ts_, clock_.now_us());
  last_ts_ = ts;
  last_truth_ = label;
  return f.restamped(ts, seq_++);
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_frame_message(const Frame& f) {
  std::vector<std::uint8_t> out(kFrameHeaderBytes + f.size());
  auto put = [&](std::size_t off, std::uint64_t v, std::size_t bytes) {
    for (std::size_t i = 0; i < bytes; ++i) out[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
  };
  put(0, f.width(), 4);
  put(4, f.height(), 4);
  put(8, f.timestamp_us(), 8);
  std::transform(f.pixels().begin(), f.pixels().end(), out.begin() + kFrameHeaderBytes,
                 quantize_pixel);
  return out;
}

namespace asio = boost::asio;
using asio::ip::tcp;

struct TcpFrameSource::Impl {
  asio::io_context io;
  tcp::acceptor acceptor{io};
  tcp::socket socket{io};
  PipelineClock clock;
  std::atomic<bool> connected{false};
  bool ended = false;
  std::atomic<bool> stop{false};
  std::uint64_t seq = 0;
  std::uint64_t last_ts = 0;
  std::optional<std::uint64_t> last_producer_ts;
};

TcpFrameSource::TcpFrameSource(const std::string& host, std::uint16_t port,
                               PipelineClock clock)
    : impl_(std::make_unique<Impl>()) {
  impl_->clock = clock;
  try {
    const tcp::endpoint ep(asio::ip::make_address(host), port);
    impl_->acceptor.open(ep.protocol());
    impl_->acceptor.set_option(tcp::acceptor::reuse_address(true));
    impl_->acceptor.bind(ep);
    impl_->acceptor.listen(1);
  } catch (const boost::system::system_error& e) {
    throw SourceError(fmt::format("frame source cannot listen on {}:{}: {}", host, port,
                                  e.what()));
  }
}

TcpFrameSource::~TcpFrameSource() = default;

std::uint16_t TcpFrameSource::port() const { return impl_->acceptor.local_endpoint().port(); }

void TcpFrameSource::interrupt() {
  impl_->stop = true;
  // shutdown() on the raw descriptors wakes blocking accept/read calls.
  ::shutdown(impl_->acceptor.native_handle(), SHUT_RDWR);
  if (impl_->connected) ::shutdown(impl_->socket.native_handle(), SHUT_RDWR);
}

std::optional<Frame> TcpFrameSource::next() {
  Impl& s = *impl_;
  if (s.ended) return std::nullopt;
  boost::system::error_code ec;
  if (!s.connected) {
    s.acceptor.accept(s.socket, ec);
    if (ec || s.stop) {
      s.ended = true;
      if (s.stop) return std::nullopt;
      throw SourceError(fmt::format("frame source accept failed: {}", ec.message()));
    }
    s.connected = true;
  }

  std::array<std::uint8_t, kFrameHeaderBytes> header{};
  const std::size_t got = asio::read(s.socket, asio::buffer(header), ec);
  if (got == 0 && (ec == asio::error::eof || s.stop)) {
    s.ended = true;
    return std::nullopt;
  }
  if (ec) {
    s.ended = true;
    throw SourceError(fmt::format("frame source: truncated header ({} bytes): {}", got,
                                  ec.message()));
  }
  auto get = [&](std::size_t off, std::size_t bytes) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bytes; ++i) v |= std::uint64_t{header[off + i]} << (8 * i);
    return v;
  };
  const auto width = static_cast<std::uint32_t>(get(0, 4));
  const auto height = static_cast<std::uint32_t>(get(4, 4));
  const std::uint64_t producer_ts = get(8, 8);
  if (width == 0 || height == 0 || width > kMaxWireDim || height > kMaxWireDim) {
    s.ended = true;
    throw SourceError(fmt::format("frame source: bad dims {}x{}", width, height));
  }
  if (s.last_producer_ts && producer_ts < *s.last_producer_ts) {
    s.ended = true;
    throw SourceError("frame source: producer timestamp went backwards");
  }
  s.last_producer_ts = producer_ts;

  std::vector<std::uint8_t> raw(std::size_t{width} * height);
  asio::read(s.socket, asio::buffer(raw), ec);
  if (ec) {
    s.ended = true;
    throw SourceError(fmt::format("frame source: truncated payload: {}", ec.message()));
  }
  std::vector<double> px(raw.size());
  std::transform(raw.begin(), raw.end(), px.begin(),
                 [](std::uint8_t b) { return static_cast<double>(b) / 255.0; });
  const std::uint64_t ts = std::max(s.last_ts, s.clock.now_us());
  s.last_ts = ts;
  return Frame(width, height, std::move(px), ts, s.seq++);
}

}  // namespace sonopipe
