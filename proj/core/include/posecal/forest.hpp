#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "posecal/common.hpp"
#include "posecal/dataset.hpp"
#include "posecal/rng.hpp"

namespace posecal {

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 20;
  int n_classes = kNumViews;
  int features_per_split = 24;  // floor(sqrt(576))
  int min_samples_leaf = 1;
  bool bootstrap = true;
  double laplace = 1.0;
  uint64_t seed = 0;
};

// CART tree with Gini splits. Split and leaf nodes live in separate
// arrays; a child reference >= 0 indexes splits, < 0 encodes ~leaf.
struct DecisionTree {
  struct Split {
    uint32_t feature = 0;
    float threshold = 0.0f;
    int32_t left = 0;
    int32_t right = 0;
  };
  using LeafCounts = std::array<uint32_t, kNumViews>;

  std::vector<Split> splits;
  std::vector<LeafCounts> leaves;
  int32_t root = ~0;  // a fresh tree is a single empty leaf

  static int32_t leaf_ref(std::size_t leaf_index) {
    return ~static_cast<int32_t>(leaf_index);
  }
  const LeafCounts& route(std::span<const float> x) const {
    int32_t node = root;
    while (node >= 0) {
      const Split& s = splits[static_cast<std::size_t>(node)];
      node = x[s.feature] <= s.threshold ? s.left : s.right;
    }
    return leaves[static_cast<std::size_t>(~node)];
  }
};

struct Forest {
  ForestConfig config;
  std::vector<DecisionTree> trees;
  int patch_index = 0;
};

// 36 per-patch forests, ordered by patch_index.
struct PatchBank {
  std::vector<Forest> forests;
};

// Grows one Gini CART tree on the given columns. Candidate features are
// drawn without replacement from rng; thresholds sit at midpoints
// between consecutive distinct sorted values; equal-gain ties resolve
// to the lowest feature index, then the lowest threshold. Leaves store
// raw class counts.
DecisionTree train_tree(const FeatureColumns& features,
                        const std::vector<PoseLabel>& labels,
                        const ForestConfig& config, Rng& rng);

// Laplace-smoothed leaf distribution: (count[v] + laplace) /
// (total + n_classes * laplace).
PoseDistribution predict_tree(const DecisionTree& tree,
                              std::span<const float> x, double laplace);

// Tree t trains on a bootstrap resample (when enabled) with an RNG
// stream derived from (config.seed, t), so the result is bitwise
// deterministic for a fixed seed regardless of thread count.
Forest train_forest(const FeatureColumns& features,
                    const std::vector<PoseLabel>& labels,
                    const ForestConfig& config, unsigned n_threads = 0);

// Arithmetic mean of the per-tree smoothed distributions.
PoseDistribution predict_proba(const Forest& forest, std::span<const float> x);

// One forest per patch; forest p trains on columns [p*576, (p+1)*576)
// with seed derived from (config.seed, p).
PatchBank train_patch_bank(const FeatureMatrix& features,
                           const std::vector<PoseLabel>& labels,
                           const ForestConfig& config, unsigned n_threads = 0);

// Mean impurity decrease per feature over all split nodes, normalized
// to sum 1; all-zero for forests without splits.
std::vector<double> feature_importance(const Forest& forest, int feature_dim);

// Model container on disk (`.pcf`): magic "PCF1", config block, then
// per-forest tree arrays in little-endian binary. Round-trips are
// byte-exact.
struct ForestModelFile {
  int feature_dim = kHogDim;
  ForestConfig config;
  std::vector<Forest> forests;

  bool is_patch_bank() const {
    return forests.size() == kPatchCount && feature_dim == kHogDim;
  }
};

void save_forests(const ForestModelFile& model,
                  const std::filesystem::path& path);
void save_forests(int feature_dim, const ForestConfig& config,
                  std::span<const Forest> forests,
                  const std::filesystem::path& path);
ForestModelFile load_forests(const std::filesystem::path& path);

}  // namespace posecal
