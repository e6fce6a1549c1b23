#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "posecal/common.hpp"
#include "posecal/forest.hpp"

namespace posecal {

struct EvalReport {
  double accuracy = 0.0;
  // Rows = ground truth, columns = prediction, both 0-based bins.
  std::array<std::array<uint64_t, kNumViews>, kNumViews> confusion{};
  uint64_t n_images = 0;

  // Fraction of all predictions landing at a given circular distance
  // from the truth (distance 4 = 90 degrees, 8 = 180 degrees).
  double confusion_mass_at(int circular_distance) const;
};

EvalReport evaluate(const std::vector<PoseLabel>& predictions,
                    const std::vector<PoseLabel>& ground_truth);

// 16x16 integer CSV, row-major, truth-major.
void save_confusion_csv(const EvalReport& report,
                        const std::filesystem::path& path);

// Per-patch share of a global forest's feature importance: block sums
// over each patch's 576 dims, normalized to 1. A splitless forest maps
// to the uniform map.
struct PatchImportanceMap {
  std::array<double, kPatchCount> weights{};  // row-major 6x6
};

PatchImportanceMap patch_importance(const Forest& global_forest);

// Whole-image (20736-dim) forest: identical contracts to the forest
// module, with the mtry default rescaled to floor(sqrt(20736)).
Forest global_train(const FeatureMatrix& features,
                    const std::vector<PoseLabel>& labels, ForestConfig config,
                    unsigned n_threads = 0);
PoseDistribution global_predict(const Forest& forest, std::span<const float> x);

}  // namespace posecal
