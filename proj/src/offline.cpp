#include <fmt/format.h>

#include "json.hpp"
#include "sonopipe/pipeline.hpp"

namespace sonopipe {

using nlohmann::json;

namespace {

Frame prepare(const PipelineConfig& config, const Frame& f) {
  const Frame cropped = config.roi ? crop(f, *config.roi) : f;
  return resize(cropped, config.width, config.height);
}

}  // namespace

std::vector<LabeledSample> extract_samples(const PipelineConfig& config,
                                           const TemplateStore& store,
                                           std::span<const synth::LabeledFrame> frames) {
  std::vector<LabeledSample> samples;
  samples.reserve(frames.size());
  for (const auto& lf : frames) {
    const CorrelationVector v = extract_features(prepare(config, lf.frame), store);
    samples.push_back({v.r, lf.label, "synthetic", fmt::format("frame-{}", lf.frame.seq())});
  }
  return samples;
}

TrainResult train(const PipelineConfig& config, std::span<const synth::LabeledFrame> frames) {
  std::array<std::vector<Frame>, kNumGestures> by_label;
  for (const auto& lf : frames) by_label[ordinal(lf.label)].push_back(prepare(config, lf.frame));

  std::array<std::size_t, kNumGestures> counts{};
  for (GestureLabel g : kAllGestures) {
    counts[ordinal(g)] = by_label[ordinal(g)].size();
    if (by_label[ordinal(g)].empty()) {
      throw ConfigError(fmt::format("no training frames for gesture '{}'", gesture_name(g)));
    }
  }
  auto make = [&](GestureLabel g) {
    return build_template(by_label[ordinal(g)], g, config.template_frames);
  };
  // Features are computed against the templates as they will read back from disk.
  TemplateStore store = quantized(TemplateStore({make(GestureLabel::Rest),
                                                 make(GestureLabel::PowerGrip),
                                                 make(GestureLabel::WristPronation),
                                                 make(GestureLabel::Point)}));
  std::vector<LabeledSample> samples = extract_samples(config, store, frames);
  KnnModel model = knn_fit(std::move(samples), config.k);
  return TrainResult{std::move(store), std::move(model), counts};
}

EvalResult evaluate(std::span<const LabeledSample> samples, std::size_t k, std::size_t folds,
                    std::uint64_t seed) {
  const auto without_rest = exclude_class(samples, GestureLabel::Rest);
  return EvalResult{cross_validate(samples, k, folds, seed),
                    cross_validate(without_rest, k, folds, seed)};
}

std::string report_to_json(const CvReport& r) {
  auto matrix = [](const ConfusionMatrix& m) {
    json rows = json::array();
    for (const auto& row : m.counts) rows.push_back(row);
    return rows;
  };
  json folds = json::array();
  for (std::size_t i = 0; i < r.fold_confusion.size(); ++i) {
    folds.push_back({{"accuracy", r.fold_accuracy[i]}, {"confusion", matrix(r.fold_confusion[i])}});
  }
  json labels = json::array();
  for (GestureLabel g : kAllGestures) labels.push_back(gesture_name(g));
  const json doc = {{"folds", r.folds},       {"k", r.k},
                    {"seed", r.seed},         {"accuracy", r.accuracy},
                    {"labels", labels},       {"confusion", matrix(r.confusion)},
                    {"per_fold", folds}};
  return doc.dump(2) + "\n";
}

std::string Metrics::to_json() const {
  auto hist = [](const LatencyHistogram& h) {
    json buckets = json::array();
    for (const auto& [edge, n] : h.buckets()) buckets.push_back({edge, n});
    return json{{"count", h.count()},          {"min_us", h.min()},
                {"max_us", h.max()},           {"mean_us", h.mean()},
                {"p50_us", h.percentile(0.5)}, {"p99_us", h.percentile(0.99)},
                {"buckets", buckets}};
  };
  const json doc = {{"frames_in", frames_in},
                    {"processed", processed},
                    {"dropped", dropped},
                    {"invalid", invalid},
                    {"prediction_changes", prediction_changes},
                    {"raw_prediction_changes", raw_prediction_changes},
                    {"subscriber_drops", subscriber_drops},
                    {"wall_seconds", wall_seconds},
                    {"achieved_fps", achieved_fps},
                    {"compute_fps", compute_fps},
                    {"simd_isa", simd_isa},
                    {"source_error", source_error},
                    {"latency_us",
                     {{"preprocess", hist(preprocess)},
                      {"features", hist(features)},
                      {"classify", hist(classify)},
                      {"end_to_end", hist(end_to_end)}}}};
  return doc.dump(2) + "\n";
}

std::string Metrics::summary() const {
  std::string out = fmt::format(
      "frames in {}  processed {}  dropped {}  invalid {}\n"
      "achieved {:.1f} fps  compute {:.1f} fps  ({})\n"
      "end-to-end latency p50 {:.1f} ms  p99 {:.1f} ms  max {:.1f} ms\n"
      "gesture changes {} (raw {})  subscriber drops {}\n",
      frames_in, processed, dropped, invalid, achieved_fps, compute_fps, simd_isa,
      static_cast<double>(end_to_end.percentile(0.5)) / 1e3,
      static_cast<double>(end_to_end.percentile(0.99)) / 1e3,
      static_cast<double>(end_to_end.max()) / 1e3, prediction_changes, raw_prediction_changes,
      subscriber_drops);
  if (!source_error.empty()) out += fmt::format("source error: {}\n", source_error);
  return out;
}

}  // namespace sonopipe
