#pragma once

#include <vector>

#include "posecal/common.hpp"

namespace posecal {

// Per-patch conditional distributions P(v|F_i) for one image. All
// entries must be strictly positive (Laplace smoothing upstream
// guarantees this).
using PatchPosteriors = std::vector<PoseDistribution>;

// Log-space accumulator for one image: logits[v] = sum_i log q_i[v].
// Fusing through logits avoids underflow of 36-fold probability
// products.
using FusedLogits = std::array<double, kNumViews>;

// softmax(logits): exp(l[v] - logsumexp(l)).
PoseDistribution softmax(const FusedLogits& logits);

FusedLogits log_posterior_sum(const PatchPosteriors& q);

// Product-of-experts fusion: p[v] proportional to prod_i q_i[v],
// computed in log space and renormalized. Throws on non-positive
// entries.
PoseDistribution fuse(const PatchPosteriors& q);

// Smallest index attaining the maximum, as a 1-based pose label.
PoseLabel predict_pose(const PoseDistribution& p);

}  // namespace posecal
