#include "posecal/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace posecal {

PoseDistribution softmax(const FusedLogits& logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  PoseDistribution p;
  double sum = 0.0;
  for (int v = 0; v < kNumViews; ++v) {
    p[static_cast<std::size_t>(v)] = std::exp(logits[static_cast<std::size_t>(v)] - peak);
    sum += p[static_cast<std::size_t>(v)];
  }
  for (double& x : p) x /= sum;
  return p;
}

FusedLogits log_posterior_sum(const PatchPosteriors& q) {
  if (q.empty()) throw std::invalid_argument("fuse: no patch posteriors");
  FusedLogits logits{};
  for (const PoseDistribution& patch : q) {
    for (int v = 0; v < kNumViews; ++v) {
      const double x = patch[static_cast<std::size_t>(v)];
      if (!(x > 0.0) || !std::isfinite(x))
        throw std::invalid_argument(
            "fuse: patch posterior entries must be strictly positive "
            "(missing Laplace smoothing upstream?)");
      logits[static_cast<std::size_t>(v)] += std::log(x);
    }
  }
  return logits;
}

PoseDistribution fuse(const PatchPosteriors& q) {
  return softmax(log_posterior_sum(q));
}

PoseLabel predict_pose(const PoseDistribution& p) {
  require_valid_distribution(p, "predict_pose");
  int best = 0;
  for (int v = 1; v < kNumViews; ++v)
    if (p[static_cast<std::size_t>(v)] > p[static_cast<std::size_t>(best)]) best = v;
  return best + 1;
}

}  // namespace posecal
