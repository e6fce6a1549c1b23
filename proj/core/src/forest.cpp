#include "posecal/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "posecal/threading.hpp"

namespace posecal {

namespace {

void validate_training_input(const FeatureColumns& features,
                             const std::vector<PoseLabel>& labels,
                             const ForestConfig& config) {
  if (features.matrix == nullptr || features.n_samples() < 1 ||
      labels.empty())
    throw std::invalid_argument("train: empty input");
  if (static_cast<std::size_t>(features.n_samples()) != labels.size())
    throw std::invalid_argument("train: features/labels size mismatch");
  if (config.n_trees < 1) throw std::invalid_argument("train: n_trees < 1");
  if (config.max_depth < 0) throw std::invalid_argument("train: max_depth < 0");
  if (config.features_per_split < 1 ||
      config.features_per_split > features.dim)
    throw std::invalid_argument("train: features_per_split out of range");
  if (config.min_samples_leaf < 1)
    throw std::invalid_argument("train: min_samples_leaf < 1");
  if (!(config.laplace > 0.0))
    throw std::invalid_argument("train: laplace must be > 0");
  for (PoseLabel l : labels)
    if (!valid_pose_label(l))
      throw std::invalid_argument("train: label out of 1..16 range");
}

// Grows one tree. Holds the scratch buffers so they are allocated once
// per tree, and the feature permutation used for mtry sampling (partial
// Fisher-Yates with undo, restoring identity after each node).
class TreeBuilder {
 public:
  TreeBuilder(const FeatureColumns& features,
              const std::vector<PoseLabel>& labels,
              const ForestConfig& config, Rng& rng)
      : x_(features), labels_(labels), config_(config), rng_(rng) {
    perm_.resize(static_cast<std::size_t>(x_.dim));
    std::iota(perm_.begin(), perm_.end(), 0);
    swapped_.resize(static_cast<std::size_t>(config_.features_per_split));
    const std::size_t n = static_cast<std::size_t>(x_.n_samples());
    indices_.reserve(n);
    sorted_.reserve(n);
  }

  DecisionTree build() {
    const int n = x_.n_samples();
    indices_.clear();
    if (config_.bootstrap) {
      for (int i = 0; i < n; ++i)
        indices_.push_back(static_cast<int>(rng_.bounded(static_cast<uint64_t>(n))));
    } else {
      for (int i = 0; i < n; ++i) indices_.push_back(i);
    }
    tree_ = DecisionTree{};
    tree_.root = grow(0, static_cast<int>(indices_.size()), 0);
    return std::move(tree_);
  }

 private:
  struct Candidate {
    double score = -1.0;  // sum of squared class counts over child sizes
    int feature = -1;
    float threshold = 0.0f;
  };

  static std::array<int64_t, kNumViews> count_classes(
      const std::vector<int>& idx, int begin, int end,
      const std::vector<PoseLabel>& labels) {
    std::array<int64_t, kNumViews> counts{};
    for (int i = begin; i < end; ++i)
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(
          idx[static_cast<std::size_t>(i)])] - 1)];
    return counts;
  }

  int32_t make_leaf(const std::array<int64_t, kNumViews>& counts) {
    DecisionTree::LeafCounts leaf{};
    for (int v = 0; v < kNumViews; ++v)
      leaf[static_cast<std::size_t>(v)] =
          static_cast<uint32_t>(counts[static_cast<std::size_t>(v)]);
    tree_.leaves.push_back(leaf);
    return DecisionTree::leaf_ref(tree_.leaves.size() - 1);
  }

  // Builds the subtree over indices_[begin, end); returns a child ref.
  int32_t grow(int begin, int end, int depth) {
    const int n = end - begin;
    const auto counts = count_classes(indices_, begin, end, labels_);

    int n_present = 0;
    double parent_sumsq = 0.0;
    for (int64_t c : counts) {
      if (c > 0) ++n_present;
      parent_sumsq += static_cast<double>(c) * static_cast<double>(c);
    }
    const bool pure = n_present <= 1;
    if (depth >= config_.max_depth || pure || n < 2 * config_.min_samples_leaf)
      return make_leaf(counts);

    const Candidate best = find_best_split(begin, end, parent_sumsq / n);
    if (best.feature < 0) return make_leaf(counts);

    // Stable partition on the chosen split keeps index order
    // deterministic for the children.
    const auto col = x_.column(best.feature);
    auto mid = std::stable_partition(
        indices_.begin() + begin, indices_.begin() + end,
        [&](int i) { return col[static_cast<std::size_t>(i)] <= best.threshold; });
    const int left_end = static_cast<int>(mid - indices_.begin());

    const std::size_t split_index = tree_.splits.size();
    tree_.splits.push_back({static_cast<uint32_t>(best.feature),
                            best.threshold, 0, 0});
    const int32_t left = grow(begin, left_end, depth + 1);
    const int32_t right = grow(left_end, end, depth + 1);
    tree_.splits[split_index].left = left;
    tree_.splits[split_index].right = right;
    return static_cast<int32_t>(split_index);
  }

  Candidate find_best_split(int begin, int end, double parent_score) {
    const int n = end - begin;
    const int mtry = config_.features_per_split;
    const int dim = x_.dim;

    // Partial Fisher-Yates over the persistent permutation; swaps are
    // undone afterwards so the array is identity again for the next
    // node.
    for (int k = 0; k < mtry; ++k) {
      const int j = k + static_cast<int>(rng_.bounded(static_cast<uint64_t>(dim - k)));
      std::swap(perm_[static_cast<std::size_t>(k)], perm_[static_cast<std::size_t>(j)]);
      swapped_[static_cast<std::size_t>(k)] = j;
    }

    Candidate best;
    double best_gain = 0.0;
    for (int k = 0; k < mtry; ++k) {
      const int feature = perm_[static_cast<std::size_t>(k)];
      const auto col = x_.column(feature);

      sorted_.clear();
      for (int i = begin; i < end; ++i) {
        const int sample = indices_[static_cast<std::size_t>(i)];
        sorted_.push_back({col[static_cast<std::size_t>(sample)],
                           static_cast<uint8_t>(labels_[static_cast<std::size_t>(sample)] - 1)});
      }
      std::sort(sorted_.begin(), sorted_.end(),
                [](const ValueLabel& a, const ValueLabel& b) { return a.value < b.value; });
      if (sorted_.front().value == sorted_.back().value) continue;

      std::array<int64_t, kNumViews> left_counts{};
      std::array<int64_t, kNumViews> right_counts{};
      for (const auto& vl : sorted_) ++right_counts[vl.label];
      double sumsq_left = 0.0;
      double sumsq_right = 0.0;
      for (int64_t c : right_counts)
        sumsq_right += static_cast<double>(c) * static_cast<double>(c);

      for (int i = 0; i < n - 1; ++i) {
        const int c = sorted_[static_cast<std::size_t>(i)].label;
        sumsq_left += 2.0 * static_cast<double>(left_counts[static_cast<std::size_t>(c)]) + 1.0;
        sumsq_right -= 2.0 * static_cast<double>(right_counts[static_cast<std::size_t>(c)]) - 1.0;
        ++left_counts[static_cast<std::size_t>(c)];
        --right_counts[static_cast<std::size_t>(c)];

        const float a = sorted_[static_cast<std::size_t>(i)].value;
        const float b = sorted_[static_cast<std::size_t>(i + 1)].value;
        if (a == b) continue;  // only boundaries between distinct values
        const int n_left = i + 1;
        const int n_right = n - n_left;
        if (n_left < config_.min_samples_leaf || n_right < config_.min_samples_leaf)
          continue;

        const double score = sumsq_left / n_left + sumsq_right / n_right;
        const double gain = score - parent_score;
        if (gain <= 0.0) continue;

        float threshold = static_cast<float>(
            (static_cast<double>(a) + static_cast<double>(b)) * 0.5);
        if (!(threshold < b)) threshold = a;  // fp midpoint collapse guard

        if (gain > best_gain ||
            (gain == best_gain &&
             (feature < best.feature ||
              (feature == best.feature && threshold < best.threshold)))) {
          best_gain = gain;
          best = {score, feature, threshold};
        }
      }
    }

    for (int k = mtry - 1; k >= 0; --k)
      std::swap(perm_[static_cast<std::size_t>(k)],
                perm_[static_cast<std::size_t>(swapped_[static_cast<std::size_t>(k)])]);
    return best;
  }

  struct ValueLabel {
    float value;
    uint8_t label;
  };

  const FeatureColumns& x_;
  const std::vector<PoseLabel>& labels_;
  const ForestConfig& config_;
  Rng& rng_;
  DecisionTree tree_;
  std::vector<int> perm_;
  std::vector<int> swapped_;
  std::vector<int> indices_;
  std::vector<ValueLabel> sorted_;
};

}  // namespace

DecisionTree train_tree(const FeatureColumns& features,
                        const std::vector<PoseLabel>& labels,
                        const ForestConfig& config, Rng& rng) {
  validate_training_input(features, labels, config);
  TreeBuilder builder(features, labels, config, rng);
  return builder.build();
}

PoseDistribution predict_tree(const DecisionTree& tree,
                              std::span<const float> x, double laplace) {
  const auto& counts = tree.route(x);
  int64_t total = 0;
  for (uint32_t c : counts) total += c;
  const double denom = static_cast<double>(total) + kNumViews * laplace;
  PoseDistribution p;
  for (int v = 0; v < kNumViews; ++v)
    p[static_cast<std::size_t>(v)] =
        (static_cast<double>(counts[static_cast<std::size_t>(v)]) + laplace) / denom;
  return p;
}

Forest train_forest(const FeatureColumns& features,
                    const std::vector<PoseLabel>& labels,
                    const ForestConfig& config, unsigned n_threads) {
  validate_training_input(features, labels, config);
  Forest forest;
  forest.config = config;
  forest.trees.resize(static_cast<std::size_t>(config.n_trees));
  parallel_for(static_cast<std::size_t>(config.n_trees), n_threads,
               [&](std::size_t t) {
                 Rng rng = derive_stream(config.seed, t, 0x54524545u);  // "TREE"
                 TreeBuilder builder(features, labels, config, rng);
                 forest.trees[t] = builder.build();
               });
  return forest;
}

PoseDistribution predict_proba(const Forest& forest, std::span<const float> x) {
  if (forest.trees.empty())
    throw std::invalid_argument("predict_proba: empty forest");
  PoseDistribution acc{};
  for (const auto& tree : forest.trees) {
    const PoseDistribution p = predict_tree(tree, x, forest.config.laplace);
    for (int v = 0; v < kNumViews; ++v) acc[static_cast<std::size_t>(v)] += p[static_cast<std::size_t>(v)];
  }
  for (double& v : acc) v /= static_cast<double>(forest.trees.size());
  return acc;
}

PatchBank train_patch_bank(const FeatureMatrix& features,
                           const std::vector<PoseLabel>& labels,
                           const ForestConfig& config, unsigned n_threads) {
  if (features.dim() != kImageFeatureDim)
    throw std::invalid_argument("train_patch_bank: expected 20736-dim features");
  PatchBank bank;
  bank.forests.reserve(kPatchCount);
  for (int p = 0; p < kPatchCount; ++p) {
    ForestConfig patch_config = config;
    patch_config.seed = derive_seed(config.seed, static_cast<uint64_t>(p), 0x5041544bu);  // "PATK"
    FeatureColumns cols(features, p * kHogDim, kHogDim);
    Forest forest = train_forest(cols, labels, patch_config, n_threads);
    forest.patch_index = p;
    bank.forests.push_back(std::move(forest));
  }
  return bank;
}

namespace {

// Weighted Gini times node size from raw class counts: N - sum c^2 / N.
double gini_times_n(const std::array<int64_t, kNumViews>& counts, int64_t n) {
  double sumsq = 0.0;
  for (int64_t c : counts) sumsq += static_cast<double>(c) * static_cast<double>(c);
  return static_cast<double>(n) - sumsq / static_cast<double>(n);
}

// Post-order accumulation of class counts, adding each split node's
// impurity decrease to its feature's importance.
std::array<int64_t, kNumViews> accumulate_importance(
    const DecisionTree& tree, int32_t node, std::vector<double>& importance) {
  if (node < 0) {
    std::array<int64_t, kNumViews> counts{};
    const auto& leaf = tree.leaves[static_cast<std::size_t>(~node)];
    for (int v = 0; v < kNumViews; ++v) counts[static_cast<std::size_t>(v)] = leaf[static_cast<std::size_t>(v)];
    return counts;
  }
  const auto& split = tree.splits[static_cast<std::size_t>(node)];
  const auto left = accumulate_importance(tree, split.left, importance);
  const auto right = accumulate_importance(tree, split.right, importance);
  std::array<int64_t, kNumViews> counts;
  int64_t n = 0, n_left = 0, n_right = 0;
  for (int v = 0; v < kNumViews; ++v) {
    counts[static_cast<std::size_t>(v)] = left[static_cast<std::size_t>(v)] + right[static_cast<std::size_t>(v)];
    n_left += left[static_cast<std::size_t>(v)];
    n_right += right[static_cast<std::size_t>(v)];
  }
  n = n_left + n_right;
  const double decrease = gini_times_n(counts, n) - gini_times_n(left, n_left) -
                          gini_times_n(right, n_right);
  importance[split.feature] += decrease;
  return counts;
}

}  // namespace

std::vector<double> feature_importance(const Forest& forest, int feature_dim) {
  std::vector<double> importance(static_cast<std::size_t>(feature_dim), 0.0);
  for (const auto& tree : forest.trees)
    accumulate_importance(tree, tree.root, importance);
  double total = 0.0;
  for (double v : importance) total += v;
  if (total > 0.0)
    for (double& v : importance) v /= total;
  return importance;
}

}  // namespace posecal
