#include "sonopipe/classifier.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "sonopipe/error.hpp"
#include "sonopipe/rng.hpp"

namespace sonopipe {

using nlohmann::json;

namespace {

void check_features(const FeatureVector& f) {
  for (double v : f) {
    if (!(v >= -1.0 && v <= 1.0)) {
      throw ArgumentError(fmt::format("feature value {} outside [-1, 1]", v));
    }
  }
}

double squared_distance(const FeatureVector& a, const FeatureVector& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < kNumGestures; ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

}  // namespace

KnnModel::KnnModel(std::vector<LabeledSample> samples, std::size_t k)
    : samples_(std::move(samples)), k_(k) {
  if (samples_.empty()) throw ArgumentError("knn: no training samples");
  if (k_ < 1 || k_ > samples_.size()) {
    throw ArgumentError(
        fmt::format("knn: k={} outside [1, {}]", k_, samples_.size()));
  }
  for (const auto& s : samples_) check_features(s.features);
}

KnnModel knn_fit(std::vector<LabeledSample> samples, std::size_t k) {
  return KnnModel(std::move(samples), k);
}

GestureLabel knn_predict(const KnnModel& model, const FeatureVector& features) {
  const auto& samples = model.samples();
  const std::size_t k = model.k();

  struct Neighbor {
    double dist;
    std::size_t index;
  };
  std::vector<Neighbor> all(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    all[i] = {squared_distance(features, samples[i].features), i};
  }
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k),
                    all.end(), [](const Neighbor& a, const Neighbor& b) {
                      return a.dist < b.dist || (a.dist == b.dist && a.index < b.index);
                    });

  std::array<std::size_t, kNumGestures> votes{};
  std::array<double, kNumGestures> nearest;
  nearest.fill(std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t c = ordinal(samples[all[i].index].label);
    ++votes[c];
    nearest[c] = std::min(nearest[c], all[i].dist);
  }

  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumGestures; ++c) {
    if (votes[c] > votes[best] ||
        (votes[c] == votes[best] && nearest[c] < nearest[best])) {
      best = c;
    }
  }
  return static_cast<GestureLabel>(best);
}

std::uint64_t ConfusionMatrix::row_sum(GestureLabel truth) const {
  const auto& row = counts[ordinal(truth)];
  return std::accumulate(row.begin(), row.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (GestureLabel g : kAllGestures) t += row_sum(g);
  return t;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < kNumGestures; ++i) t += counts[i][i];
  return t;
}

double ConfusionMatrix::accuracy() const {
  const std::uint64_t n = total();
  return n == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(n);
}

ConfusionMatrix aggregate_confusion(std::span<const ConfusionMatrix> matrices) {
  ConfusionMatrix sum;
  for (const auto& m : matrices) {
    for (std::size_t i = 0; i < kNumGestures; ++i) {
      for (std::size_t j = 0; j < kNumGestures; ++j) sum.counts[i][j] += m.counts[i][j];
    }
  }
  return sum;
}

std::string confusion_to_csv(const ConfusionMatrix& m) {
  std::string out = "true\\predicted";
  for (GestureLabel g : kAllGestures) fmt::format_to(std::back_inserter(out), ",{}", gesture_name(g));
  out += '\n';
  for (GestureLabel t : kAllGestures) {
    out += gesture_name(t);
    for (std::uint64_t c : m.counts[ordinal(t)]) fmt::format_to(std::back_inserter(out), ",{}", c);
    out += '\n';
  }
  return out;
}

FoldPartition stratified_folds(std::span<const LabeledSample> samples,
                               std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ArgumentError(fmt::format("need at least 2 folds, got {}", folds));

  std::array<std::vector<std::size_t>, kNumGestures> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    by_class[ordinal(samples[i].label)].push_back(i);
  }

  FoldPartition partition(folds);
  std::size_t next_fold = 0;
  for (std::size_t c = 0; c < kNumGestures; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < folds) {
      throw ArgumentError(fmt::format("class {} has {} samples, fewer than {} folds",
                                      gesture_name(static_cast<GestureLabel>(c)),
                                      idx.size(), folds));
    }
    const rng::CounterRng gen(seed, 0x5F01D000 + c);
    for (std::size_t i = idx.size() - 1; i > 0; --i) {
      std::swap(idx[i], idx[gen.below(i, i + 1)]);
    }
    // Continue the round-robin across classes so fold sizes stay balanced.
    for (std::size_t i : idx) {
      partition[next_fold].push_back(i);
      next_fold = (next_fold + 1) % folds;
    }
  }
  for (auto& fold : partition) std::sort(fold.begin(), fold.end());
  return partition;
}

CvReport cross_validate(std::span<const LabeledSample> samples, std::size_t k,
                        std::size_t folds, std::uint64_t seed) {
  const FoldPartition partition = stratified_folds(samples, folds, seed);

  CvReport report;
  report.folds = folds;
  report.k = k;
  report.seed = seed;

  std::vector<char> in_fold(samples.size());
  for (const auto& fold : partition) {
    std::fill(in_fold.begin(), in_fold.end(), 0);
    for (std::size_t i : fold) in_fold[i] = 1;
    std::vector<LabeledSample> train;
    train.reserve(samples.size() - fold.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!in_fold[i]) train.push_back(samples[i]);
    }
    if (k < 1 || k > train.size()) {
      throw ArgumentError(fmt::format(
          "k={} is invalid for a training split of {} samples", k, train.size()));
    }
    const KnnModel model = knn_fit(std::move(train), k);
    ConfusionMatrix m;
    for (std::size_t i : fold) {
      m.add(samples[i].label, knn_predict(model, samples[i].features));
    }
    report.fold_accuracy.push_back(m.accuracy());
    report.fold_confusion.push_back(m);
  }
  report.confusion = aggregate_confusion(report.fold_confusion);
  report.accuracy = report.confusion.accuracy();
  return report;
}

std::vector<LabeledSample> exclude_class(std::span<const LabeledSample> samples,
                                         GestureLabel label) {
  std::vector<LabeledSample> kept;
  kept.reserve(samples.size());
  std::copy_if(samples.begin(), samples.end(), std::back_inserter(kept),
               [&](const LabeledSample& s) { return s.label != label; });
  if (kept.empty()) {
    throw ArgumentError(fmt::format("no samples left after excluding {}", gesture_name(label)));
  }
  return kept;
}

std::string model_to_json(const KnnModel& model) {
  json samples = json::array();
  for (const auto& s : model.samples()) {
    samples.push_back({{"features", s.features},
                       {"label", gesture_name(s.label)},
                       {"subject_id", s.subject_id},
                       {"trial_id", s.trial_id}});
  }
  json doc = {{"k", model.k()}, {"samples", std::move(samples)}};
  return doc.dump(2) + "\n";
}

KnnModel model_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    const auto k = doc.at("k").get<std::size_t>();
    std::vector<LabeledSample> samples;
    for (const json& s : doc.at("samples")) {
      const auto feats = s.at("features").get<std::vector<double>>();
      if (feats.size() != kNumGestures) {
        throw FormatError(fmt::format("sample has {} features, expected {}",
                                      feats.size(), kNumGestures));
      }
      const auto name = s.at("label").get<std::string>();
      const auto label = parse_gesture(name);
      if (!label) throw FormatError(fmt::format("unknown gesture label '{}'", name));
      LabeledSample sample;
      std::copy(feats.begin(), feats.end(), sample.features.begin());
      sample.label = *label;
      sample.subject_id = s.value("subject_id", "");
      sample.trial_id = s.value("trial_id", "");
      samples.push_back(std::move(sample));
    }
    return KnnModel(std::move(samples), k);
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("model file: {}", e.what()));
  } catch (const ArgumentError& e) {
    throw FormatError(fmt::format("model file: {}", e.what()));
  }
}

void save_model(const KnnModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << model_to_json(model);
}

KnnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace sonopipe
