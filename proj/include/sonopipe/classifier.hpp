#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sonopipe/gesture.hpp"

namespace sonopipe {

using FeatureVector = std::array<double, kNumGestures>;

struct LabeledSample {
  FeatureVector features{};
  GestureLabel label = GestureLabel::Rest;
  std::string subject_id;
  std::string trial_id;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

/// k-nearest-neighbour model over correlation vectors (Euclidean distance).
class KnnModel {
 public:
  KnnModel(std::vector<LabeledSample> samples, std::size_t k);

  const std::vector<LabeledSample>& samples() const { return samples_; }
  std::size_t k() const { return k_; }

  friend bool operator==(const KnnModel&, const KnnModel&) = default;

 private:
  std::vector<LabeledSample> samples_;
  std::size_t k_;
};

inline constexpr std::size_t kDefaultK = 3;

KnnModel knn_fit(std::vector<LabeledSample> samples, std::size_t k = kDefaultK);

/// Majority label among the k nearest samples.
///
/// Equal distances are ordered by insertion order. A vote tie goes to the
/// tied class whose nearest member is closest, then to the lowest ordinal.
GestureLabel knn_predict(const KnnModel& model, const FeatureVector& features);

/// Rows are true labels, columns predicted labels.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumGestures>, kNumGestures> counts{};

  void add(GestureLabel truth, GestureLabel predicted) {
    ++counts[ordinal(truth)][ordinal(predicted)];
  }
  std::uint64_t row_sum(GestureLabel truth) const;
  std::uint64_t total() const;
  std::uint64_t trace() const;
  /// trace / total; zero for an empty matrix.
  double accuracy() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix aggregate_confusion(std::span<const ConfusionMatrix> matrices);

/// Header row plus one labeled row per true gesture.
std::string confusion_to_csv(const ConfusionMatrix& m);

struct CvReport {
  std::size_t folds = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<double> fold_accuracy;
  std::vector<ConfusionMatrix> fold_confusion;
  ConfusionMatrix confusion;
  double accuracy = 0.0;
};

using FoldPartition = std::vector<std::vector<std::size_t>>;

/// Seeded stratified partition of sample indices; indices within a fold are
/// ascending. Each class present is dealt round-robin after a shuffle.
FoldPartition stratified_folds(std::span<const LabeledSample> samples,
                               std::size_t folds, std::uint64_t seed);

CvReport cross_validate(std::span<const LabeledSample> samples, std::size_t k,
                        std::size_t folds, std::uint64_t seed);

/// Drops every sample with the given label, preserving order of the rest.
std::vector<LabeledSample> exclude_class(std::span<const LabeledSample> samples,
                                         GestureLabel label);

void save_model(const KnnModel& model, const std::filesystem::path& path);
KnnModel load_model(const std::filesystem::path& path);

std::string model_to_json(const KnnModel& model);
KnnModel model_from_json(const std::string& text);

}  // namespace sonopipe
