#include "sonopipe/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <fmt/format.h>

#include "sonopipe/bounded_queue.hpp"
#include "sonopipe/simd/kernels.hpp"

namespace sonopipe {

namespace {

using SteadyClock = std::chrono::steady_clock;

std::uint64_t micros_since(SteadyClock::time_point start) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::microseconds>(SteadyClock::now() - start).count());
}

}  // namespace

// ---------------------------------------------------------------------------

Debouncer::Debouncer(std::size_t window, GestureLabel initial)
    : window_(window), history_(window), since_change_(window), current_(initial) {
  if (window_ < 1) throw ArgumentError("debounce window must be at least 1");
}

GestureLabel Debouncer::update(GestureLabel raw) {
  history_[head_] = raw;
  head_ = (head_ + 1) % window_;
  filled_ = std::min(filled_ + 1, window_);
  if (since_change_ < window_) ++since_change_;
  changed_ = false;

  std::array<std::size_t, kNumGestures> votes{};
  for (std::size_t i = 0; i < filled_; ++i) ++votes[ordinal(history_[i])];
  for (GestureLabel g : kAllGestures) {
    if (g != current_ && 2 * votes[ordinal(g)] > window_ && since_change_ >= window_) {
      current_ = g;
      changed_ = true;
      ++changes_;
      since_change_ = 0;
      break;
    }
  }
  return current_;
}

// ---------------------------------------------------------------------------

MotionPlanner::MotionPlanner(const PosePresets& presets, double transition_s,
                             GestureLabel initial)
    : presets_(presets),
      transition_s_(transition_s),
      from_(pose_for(initial, presets)),
      to_(from_) {
  if (!(transition_s_ > 0.0)) throw ArgumentError("transition duration must be positive");
}

void MotionPlanner::retarget(GestureLabel g, std::uint64_t t_us) {
  from_ = at(t_us);
  to_ = pose_for(g, presets_);
  start_us_ = t_us;
}

JointState MotionPlanner::at(std::uint64_t t_us) const {
  if (t_us <= start_us_) return from_;
  const double t = static_cast<double>(t_us - start_us_) * 1e-6 / transition_s_;
  return interpolate(from_, to_, std::min(t, 1.0));
}

// ---------------------------------------------------------------------------

FrameProcessor::FrameProcessor(std::optional<Roi> roi, std::size_t width, std::size_t height,
                               const TemplateStore& store, const KnnModel& model)
    : roi_(roi), width_(width), height_(height), store_(store), model_(model) {
  if (store.width() != width || store.height() != height) {
    throw ConfigError(fmt::format("pipeline size {}x{} does not match templates {}x{}", width,
                                  height, store.width(), store.height()));
  }
}

Frame FrameProcessor::preprocess(const Frame& f) const {
  if (roi_) return resize(crop(f, *roi_), width_, height_);
  return resize(f, width_, height_);
}

ClassifiedFrame FrameProcessor::process(const Frame& f) const {
  ClassifiedFrame out;
  out.seq = f.seq();
  out.timestamp_us = f.timestamp_us();

  auto t0 = SteadyClock::now();
  const Frame ready = preprocess(f);
  out.times.preprocess_us = micros_since(t0);

  t0 = SteadyClock::now();
  out.features = extract_features(ready, store_);
  out.times.features_us = micros_since(t0);

  t0 = SteadyClock::now();
  out.predicted = knn_predict(model_, out.features.r);
  out.times.classify_us = micros_since(t0);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kBucketGrowth = 1.01;
const double kLogGrowth = std::log(kBucketGrowth);
constexpr std::size_t kBuckets = 1900;  // 1.01^1900 > 1.6e8 us

std::size_t bucket_of(std::uint64_t us) {
  if (us == 0) return 0;
  const auto b = static_cast<std::size_t>(std::log(static_cast<double>(us)) / kLogGrowth) + 1;
  return std::min(b, kBuckets - 1);
}

std::uint64_t bucket_upper(std::size_t b) {
  if (b == 0) return 0;
  return static_cast<std::uint64_t>(std::ceil(std::pow(kBucketGrowth, static_cast<double>(b))));
}

}  // namespace

LatencyHistogram::LatencyHistogram() : counts_(kBuckets, 0) {}

void LatencyHistogram::record(std::uint64_t us) {
  ++counts_[bucket_of(us)];
  min_ = count_ == 0 ? us : std::min(min_, us);
  max_ = std::max(max_, us);
  sum_ += us;
  ++count_;
}

std::uint64_t LatencyHistogram::percentile(double p) const {
  if (count_ == 0) return 0;
  const auto rank = std::max<std::uint64_t>(
      1, static_cast<std::uint64_t>(std::ceil(p * static_cast<double>(count_))));
  std::uint64_t seen = 0;
  for (std::size_t b = 0; b < counts_.size(); ++b) {
    seen += counts_[b];
    if (seen >= rank) return std::clamp(bucket_upper(b), min_, max_);
  }
  return max_;
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> LatencyHistogram::buckets() const {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
  for (std::size_t b = 0; b < counts_.size(); ++b) {
    if (counts_[b]) out.emplace_back(bucket_upper(b), counts_[b]);
  }
  return out;
}

// ---------------------------------------------------------------------------

Metrics run_pipeline(const PipelineConfig& config, FrameSource& source,
                     const TemplateStore& store, const KnnModel& model,
                     const PosePresets& presets, StreamServer* server, RunHooks hooks) {
  config.validate();
  const PipelineClock clock = hooks.clock;
  const FrameProcessor processor(config.roi, config.width, config.height, store, model);

  BoundedQueue<Frame> frames(config.queue_capacity);
  BoundedQueue<ClassifiedFrame> classified(config.queue_capacity);

  Metrics m;
  m.simd_isa = std::string(simd::isa_name(simd::kernels().isa));
  std::atomic<std::uint64_t> frames_in{0};
  std::atomic<std::uint64_t> invalid{0};
  std::mutex error_mu;
  std::atomic<bool> finished{false};
  const auto wall_start = SteadyClock::now();

  std::optional<std::ofstream> capture;
  if (config.capture) {
    capture.emplace(*config.capture, std::ios::binary | std::ios::trunc);
    if (!*capture) throw Error(fmt::format("cannot write {}", config.capture->string()));
  }

  std::thread reader([&] {
    try {
      while (auto f = source.next()) {
        ++frames_in;
        frames.push(std::move(*f));
      }
    } catch (const Error& e) {
      std::lock_guard lock(error_mu);
      m.source_error = e.what();
    }
    frames.close();
  });

  std::thread worker([&] {
    while (auto f = frames.pop()) {
      try {
        classified.push(processor.process(*f));
      } catch (const ZeroVarianceError&) {
        ++invalid;
      } catch (const DimensionError&) {
        ++invalid;
      } catch (const ArgumentError&) {
        ++invalid;
      }
    }
    classified.close();
  });

  std::thread publisher([&] {
    Debouncer debounce(config.debounce);
    MotionPlanner motion(presets, config.transition_s);
    std::optional<GestureLabel> last_raw;
    std::uint64_t msg_seq = 0;
    while (auto c = classified.pop()) {
      if (last_raw && *last_raw != c->predicted) ++m.raw_prediction_changes;
      last_raw = c->predicted;

      const GestureLabel shown = debounce.update(c->predicted);
      if (debounce.changed()) motion.retarget(shown, c->timestamp_us);

      PoseMessage msg;
      msg.seq = msg_seq++;
      msg.timestamp_us = clock.epoch_unix_us + c->timestamp_us;
      msg.gesture = shown;
      msg.confidence = c->features[shown];
      msg.features = c->features.r;
      msg.joints = motion.at(c->timestamp_us);

      const std::string line = encode_message(msg);
      if (server) server->publish_line(line);
      const std::uint64_t now = clock.now_us();
      m.end_to_end.record(now > c->timestamp_us ? now - c->timestamp_us : 0);
      m.preprocess.record(c->times.preprocess_us);
      m.features.record(c->times.features_us);
      m.classify.record(c->times.classify_us);
      ++m.processed;
      if (capture) *capture << line;
      if (hooks.on_publish) hooks.on_publish(msg);
    }
    m.prediction_changes = debounce.changes();
    finished = true;
  });

  // Watch for a stop request; give the stages one second to drain.
  bool stop_sent = false;
  std::optional<SteadyClock::time_point> drain_deadline;
  while (!finished) {
    if (!stop_sent && hooks.stop && hooks.stop->load()) {
      source.interrupt();
      stop_sent = true;
      drain_deadline = SteadyClock::now() + std::chrono::seconds(1);
    }
    if (drain_deadline && SteadyClock::now() > *drain_deadline) {
      frames.abandon();
      classified.abandon();
      drain_deadline.reset();
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  reader.join();
  worker.join();
  publisher.join();

  m.frames_in = frames_in;
  m.invalid = invalid;
  m.dropped = frames.dropped() + classified.dropped();
  m.wall_seconds = static_cast<double>(micros_since(wall_start)) * 1e-6;
  if (m.wall_seconds > 0.0) m.achieved_fps = static_cast<double>(m.processed) / m.wall_seconds;
  const double compute_s =
      (m.preprocess.mean() + m.features.mean() + m.classify.mean()) * 1e-6;
  if (compute_s > 0.0) m.compute_fps = 1.0 / compute_s;
  if (server) m.subscriber_drops = server->total_dropped();
  return m;
}

}  // namespace sonopipe
