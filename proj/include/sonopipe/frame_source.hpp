#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sonopipe/clock.hpp"
#include "sonopipe/error.hpp"
#include "sonopipe/frame.hpp"
#include "sonopipe/gesture.hpp"
#include "sonopipe/synth.hpp"

namespace sonopipe {

/// A source failed (I/O error, malformed input). Terminates the stream.
class SourceError : public Error {
 public:
  using Error::Error;
};

/// Single-consumer stream of frames.
///
/// next() returns a frame, or nullopt at end of stream, or throws
/// SourceError. Once it has returned nullopt it never yields a frame again.
/// Sequence numbers strictly increase and timestamps never decrease.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::optional<Frame> next() = 0;
  /// Unblocks a pending next() from another thread; the source then ends.
  virtual void interrupt() {}
};

/// Replays *.pgm files from a directory in lexicographic order.
///
/// With rate_hz > 0 frame i is stamped i/rate_hz seconds after the epoch
/// and released no earlier than that; with rate_hz == 0 frames are released
/// immediately and stamped with the release time.
class DirectoryReplaySource final : public FrameSource {
 public:
  DirectoryReplaySource(const std::filesystem::path& dir, double rate_hz,
                        PipelineClock clock = {});

  std::optional<Frame> next() override;
  void interrupt() override { stop_ = true; }
  std::size_t size() const { return files_.size(); }

 private:
  std::vector<std::filesystem::path> files_;
  double rate_hz_;
  PipelineClock clock_;
  std::size_t index_ = 0;
  std::uint64_t last_ts_ = 0;
  std::atomic<bool> stop_{false};
};

/// One segment of a scripted synthetic session.
struct ScriptStep {
  GestureLabel gesture;
  std::size_t frames;
};

/// Renders phantom frames on demand.
///
/// Scripted mode plays the steps in order (each gesture at full phase) and
/// then ends. Live mode (empty script) runs until `frame_limit` frames (0 =
/// unbounded) and follows set_target(), ramping the deformation out of the
/// old gesture and into the new one over `ramp_s` seconds.
class SyntheticSource final : public FrameSource {
 public:
  SyntheticSource(synth::PhantomSpec spec, std::vector<ScriptStep> script,
                  double rate_hz, PipelineClock clock = {}, std::size_t frame_limit = 0,
                  double ramp_s = 0.5);

  std::optional<Frame> next() override;
  void interrupt() override { stop_ = true; }

  /// Thread-safe; takes effect on the next frame.
  void set_target(GestureLabel g);
  GestureLabel target() const;

  /// Ground-truth gesture of the most recently produced frame.
  GestureLabel last_truth() const { return last_truth_; }

 private:
  std::pair<GestureLabel, double> live_pose(std::uint64_t t_us);

  synth::PhantomSpec spec_;
  Frame base_;
  std::vector<ScriptStep> script_;
  double rate_hz_;
  PipelineClock clock_;
  std::size_t frame_limit_;
  double ramp_s_;

  std::size_t step_ = 0;
  std::size_t step_frames_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t last_ts_ = 0;
  GestureLabel last_truth_ = GestureLabel::Rest;
  bool ended_ = false;
  std::atomic<bool> stop_{false};

  // Live-mode ramp state.
  mutable std::mutex target_mu_;
  GestureLabel target_ = GestureLabel::Rest;
  GestureLabel shown_ = GestureLabel::Rest;
  double shown_phase_ = 1.0;
  std::optional<std::uint64_t> last_live_us_;
};

/// Wire header of one frame message: little-endian u32 width, u32 height,
/// u64 timestamp_us, followed by width*height 8-bit pixels.
inline constexpr std::size_t kFrameHeaderBytes = 16;
inline constexpr std::uint32_t kMaxWireDim = 8192;

std::vector<std::uint8_t> encode_frame_message(const Frame& f);

/// Listens on a TCP port, accepts one producer and decodes frame messages.
///
/// Frames are stamped with the pipeline receive time; the producer's
/// timestamp must not decrease. A clean close at a message boundary ends
/// the stream; anything else is a SourceError.
class TcpFrameSource final : public FrameSource {
 public:
  TcpFrameSource(const std::string& host, std::uint16_t port, PipelineClock clock = {});
  ~TcpFrameSource() override;

  std::optional<Frame> next() override;
  void interrupt() override;
  std::uint16_t port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sonopipe
