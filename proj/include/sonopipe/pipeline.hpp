#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sonopipe/classifier.hpp"
#include "sonopipe/clock.hpp"
#include "sonopipe/features.hpp"
#include "sonopipe/frame.hpp"
#include "sonopipe/frame_source.hpp"
#include "sonopipe/kinematics.hpp"
#include "sonopipe/streamwire.hpp"
#include "sonopipe/synth.hpp"
#include "sonopipe/templates.hpp"

namespace sonopipe {

/// Inconsistent or malformed configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct SourceConfig {
  std::string kind = "synthetic";  // synthetic | replay | tcp
  double rate_hz = 30.0;           // 0 = as fast as possible
  std::filesystem::path dir;       // replay
  std::string host = "127.0.0.1";  // tcp listen address
  std::uint16_t port = 7070;       // tcp listen port
  std::size_t frames = 0;          // synthetic live mode limit, 0 = unbounded
  std::vector<ScriptStep> script;  // synthetic scripted mode
  synth::PhantomSpec phantom;
};

struct PipelineConfig {
  SourceConfig source;
  std::optional<Roi> roi;
  std::size_t width = 480;
  std::size_t height = 480;

  std::filesystem::path templates = "templates";
  std::filesystem::path model = "model.json";
  std::optional<std::filesystem::path> poses;  // default presets when unset
  std::size_t k = kDefaultK;
  std::size_t template_frames = kDefaultTemplateFrames;
  std::size_t folds = 5;
  std::uint64_t seed = 42;

  std::size_t debounce = 5;
  double transition_s = kDefaultTransitionSeconds;
  std::size_t queue_capacity = 4;

  bool serve = true;
  std::string bind = "127.0.0.1";
  std::uint16_t tcp_port = 7071;
  std::uint16_t ws_port = 7072;
  std::uint16_t command_port = 7073;
  bool allow_commands = false;
  std::size_t subscriber_queue = 64;

  std::filesystem::path metrics_out = "metrics.json";
  std::optional<std::filesystem::path> capture;  // NDJSON copy of every message

  /// Throws ConfigError.
  void validate() const;
};

/// Parses a JSON config; absent keys keep their defaults.
PipelineConfig parse_config(std::string_view json_text);
PipelineConfig load_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

/// Majority vote over the last `window` raw predictions.
///
/// The output switches to a label only when it holds a strict majority of
/// the window, and at most once per `window` frames. Window 1 passes raw
/// predictions through.
class Debouncer {
 public:
  explicit Debouncer(std::size_t window, GestureLabel initial = GestureLabel::Rest);

  GestureLabel update(GestureLabel raw);
  GestureLabel current() const { return current_; }
  /// Whether the last update() changed the output.
  bool changed() const { return changed_; }
  std::size_t changes() const { return changes_; }

 private:
  std::size_t window_;
  std::vector<GestureLabel> history_;
  std::size_t head_ = 0;
  std::size_t filled_ = 0;
  std::size_t since_change_;
  GestureLabel current_;
  bool changed_ = false;
  std::size_t changes_ = 0;
};

/// Joint-space motion toward the pose of the current gesture.
class MotionPlanner {
 public:
  MotionPlanner(const PosePresets& presets, double transition_s,
                GestureLabel initial = GestureLabel::Rest);

  /// Starts a linear move from the present joints to `g`'s pose at `t_us`.
  void retarget(GestureLabel g, std::uint64_t t_us);
  JointState at(std::uint64_t t_us) const;

 private:
  const PosePresets& presets_;
  double transition_s_;
  JointState from_;
  JointState to_;
  std::uint64_t start_us_ = 0;
};

/// Per-frame stage durations in microseconds.
struct StageTimes {
  std::uint64_t preprocess_us = 0;
  std::uint64_t features_us = 0;
  std::uint64_t classify_us = 0;
};

struct ClassifiedFrame {
  std::uint64_t seq = 0;
  std::uint64_t timestamp_us = 0;
  CorrelationVector features;
  GestureLabel predicted = GestureLabel::Rest;
  StageTimes times;
};

/// Preprocess (crop, resize) + correlate + kNN for single frames.
class FrameProcessor {
 public:
  FrameProcessor(std::optional<Roi> roi, std::size_t width, std::size_t height,
                 const TemplateStore& store, const KnnModel& model);

  Frame preprocess(const Frame& f) const;
  /// Throws ZeroVarianceError for blank frames and DimensionError / ArgumentError
  /// when the frame cannot be brought to the template size.
  ClassifiedFrame process(const Frame& f) const;

 private:
  std::optional<Roi> roi_;
  std::size_t width_;
  std::size_t height_;
  const TemplateStore& store_;
  const KnnModel& model_;
};

// ---------------------------------------------------------------------------

/// Log-bucketed latency histogram (about 1% resolution, 1 us .. ~100 s).
class LatencyHistogram {
 public:
  LatencyHistogram();

  void record(std::uint64_t us);
  std::uint64_t count() const { return count_; }
  std::uint64_t min() const { return count_ ? min_ : 0; }
  std::uint64_t max() const { return max_; }
  double mean() const { return count_ ? static_cast<double>(sum_) / static_cast<double>(count_) : 0.0; }
  /// Upper edge of the bucket holding the p-quantile, capped at max().
  std::uint64_t percentile(double p) const;
  /// Non-empty buckets as [upper_edge_us, count] pairs.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> buckets() const;

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t count_ = 0;
  std::uint64_t sum_ = 0;
  std::uint64_t min_ = 0;
  std::uint64_t max_ = 0;
};

struct Metrics {
  std::uint64_t frames_in = 0;
  std::uint64_t processed = 0;
  std::uint64_t dropped = 0;
  std::uint64_t invalid = 0;  // zero-variance or unusable frames
  std::uint64_t prediction_changes = 0;
  std::uint64_t raw_prediction_changes = 0;
  std::uint64_t subscriber_drops = 0;
  LatencyHistogram preprocess;
  LatencyHistogram features;
  LatencyHistogram classify;
  LatencyHistogram end_to_end;  // frame timestamp -> publication
  double wall_seconds = 0.0;
  double achieved_fps = 0.0;  // processed / wall time
  double compute_fps = 0.0;   // processed / (preprocess+features+classify) time
  std::string simd_isa;
  std::string source_error;

  std::string to_json() const;
  std::string summary() const;
};

struct RunHooks {
  PipelineClock clock;
  /// Called on the publisher thread for every message, after publication.
  std::function<void(const PoseMessage&)> on_publish;
  /// Set to request shutdown (e.g. from a signal handler).
  const std::atomic<bool>* stop = nullptr;
};

/// Runs source -> preprocess/features/classify -> debounce/motion/publish
/// until the source ends or a stop is requested. A source error ends the
/// run and is reported in Metrics::source_error.
Metrics run_pipeline(const PipelineConfig& config, FrameSource& source,
                     const TemplateStore& store, const KnnModel& model,
                     const PosePresets& presets, StreamServer* server, RunHooks hooks = {});

// ---------------------------------------------------------------------------
// Offline commands

struct TrainResult {
  TemplateStore store;
  KnnModel model;
  std::array<std::size_t, kNumGestures> per_class{};
};

/// Builds templates from each gesture's frames, re-reads them at disk
/// precision, extracts features of every frame and fits the kNN model.
TrainResult train(const PipelineConfig& config, std::span<const synth::LabeledFrame> frames);

std::vector<LabeledSample> extract_samples(const PipelineConfig& config,
                                           const TemplateStore& store,
                                           std::span<const synth::LabeledFrame> frames);

struct EvalResult {
  CvReport full;
  CvReport without_rest;
};

EvalResult evaluate(std::span<const LabeledSample> samples, std::size_t k, std::size_t folds,
                    std::uint64_t seed);

std::string report_to_json(const CvReport& r);

}  // namespace sonopipe
