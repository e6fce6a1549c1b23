#include "posecal/eval.hpp"

#include <cmath>
#include <fstream>

namespace posecal {

double EvalReport::confusion_mass_at(int circular_distance) const {
  if (n_images == 0) return 0.0;
  uint64_t mass = 0;
  for (int t = 0; t < kNumViews; ++t)
    for (int p = 0; p < kNumViews; ++p)
      if (circular_view_distance(t + 1, p + 1) == circular_distance)
        mass += confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  return static_cast<double>(mass) / static_cast<double>(n_images);
}

EvalReport evaluate(const std::vector<PoseLabel>& predictions,
                    const std::vector<PoseLabel>& ground_truth) {
  if (predictions.size() != ground_truth.size())
    throw std::invalid_argument("evaluate: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("evaluate: empty input");

  EvalReport report;
  uint64_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const PoseLabel p = predictions[i];
    const PoseLabel t = ground_truth[i];
    if (!valid_pose_label(p) || !valid_pose_label(t))
      throw std::invalid_argument("evaluate: label out of 1..16 range");
    ++report.confusion[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(p - 1)];
    if (p == t) ++correct;
  }
  report.n_images = predictions.size();
  report.accuracy = static_cast<double>(correct) / static_cast<double>(report.n_images);
  return report;
}

void save_confusion_csv(const EvalReport& report,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_confusion_csv: cannot open " + path.string());
  for (int t = 0; t < kNumViews; ++t) {
    for (int p = 0; p < kNumViews; ++p) {
      if (p) out << ",";
      out << report.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    out << "\n";
  }
  if (!out) throw IoError("save_confusion_csv: write failed");
}

PatchImportanceMap patch_importance(const Forest& global_forest) {
  const std::vector<double> importance =
      feature_importance(global_forest, kImageFeatureDim);
  PatchImportanceMap map;
  double total = 0.0;
  for (int p = 0; p < kPatchCount; ++p) {
    double block = 0.0;
    for (int f = 0; f < kHogDim; ++f)
      block += importance[static_cast<std::size_t>(p * kHogDim + f)];
    map.weights[static_cast<std::size_t>(p)] = block;
    total += block;
  }
  if (total <= 0.0) {
    map.weights.fill(1.0 / kPatchCount);  // splitless forest fallback
    return map;
  }
  for (double& w : map.weights) w /= total;
  return map;
}

Forest global_train(const FeatureMatrix& features,
                    const std::vector<PoseLabel>& labels, ForestConfig config,
                    unsigned n_threads) {
  if (features.dim() != kImageFeatureDim)
    throw std::invalid_argument("global_train: expected 20736-dim features");
  if (config.features_per_split == 24)  // per-patch default; rescale
    config.features_per_split =
        static_cast<int>(std::floor(std::sqrt(static_cast<double>(kImageFeatureDim))));
  return train_forest(FeatureColumns(features), labels, config, n_threads);
}

PoseDistribution global_predict(const Forest& forest, std::span<const float> x) {
  return predict_proba(forest, x);
}

}  // namespace posecal
