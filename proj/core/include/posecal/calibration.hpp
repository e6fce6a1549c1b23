#pragma once

#include <vector>

#include "posecal/common.hpp"
#include "posecal/fusion.hpp"

namespace posecal {

struct CalibrationConfig {
  double alpha = 1.0;
  int max_iters = 100;
  double tol = 1e-6;  // L-inf on successive prior estimates
};

struct CalibrationState {
  PoseDistribution prior = uniform_pose();  // current estimate of P(v)
  int iter = 0;
  bool converged = false;
  std::vector<PoseDistribution> prior_history;
};

enum class CurvePattern { Increasing, Decreasing, Unimodal };

struct AlphaSweepResult {
  std::vector<double> alphas;                   // ascending grid
  std::vector<PoseDistribution> stable_priors;  // one per alpha
  std::vector<CalibrationState> states;         // convergence info per alpha
  std::array<CurvePattern, kNumViews> patterns{};
  std::vector<double> unimodal_sum;  // per alpha
  double alpha_hat = 1.0;
  bool has_estimate = false;
};

// (p[v] + alpha) / (1 + V*alpha): shrinks the estimate toward uniform
// while preserving order; sums to 1 by construction.
PoseDistribution smooth_prior(const PoseDistribution& prior, double alpha);

// Arithmetic mean of the per-image posteriors.
PoseDistribution estimate_prior(const std::vector<PoseDistribution>& posteriors);

// Iterative prior calibration over a test batch:
//   fuse, accumulate the prior estimate, smooth it by alpha, multiply
//   every ORIGINAL patch posterior by the smoothed prior, re-fuse, and
//   repeat until the prior stops moving (L-inf < tol) or max_iters.
// Returns the final fused posteriors and the loop state.
std::pair<std::vector<PoseDistribution>, CalibrationState> calibrate_iterate(
    const std::vector<PatchPosteriors>& patch_posteriors,
    const CalibrationConfig& cfg);

// One-shot calibration with a known prior: multiply each patch
// posterior by true_prior, fuse, normalize.
std::vector<PoseDistribution> calibrate_with_prior(
    const std::vector<PatchPosteriors>& patch_posteriors,
    const PoseDistribution& true_prior);

// Runs calibrate_iterate for every alpha on the grid and classifies the
// per-view stable-prior curves.
AlphaSweepResult sweep_alpha(
    const std::vector<PatchPosteriors>& patch_posteriors,
    const std::vector<double>& alpha_grid, const CalibrationConfig& base = {});

// Pattern of a stable-prior-vs-alpha curve after 3-point moving-average
// smoothing, with absolute tolerance eta.
CurvePattern classify_curve(const std::vector<double>& values,
                            double eta = 0.01);

// Turning point of the summed unimodal curves: the grid alpha
// maximizing unimodal_sum (lowest alpha on ties). Throws
// NoEstimateError when no view is unimodal.
double estimate_alpha(const AlphaSweepResult& sweep);

std::vector<double> log_uniform_grid(double lo, double hi, int n);

// Internal building block, exposed for reuse by sweeps and pipelines:
// per-image fused posteriors when every one of n_patches patch
// posteriors is multiplied by exp(log_prior).
PoseDistribution fuse_with_log_prior(const FusedLogits& logits,
                                     const std::array<double, kNumViews>& log_prior,
                                     int n_patches);

}  // namespace posecal
