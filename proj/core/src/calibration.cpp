#include "posecal/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace posecal {

PoseDistribution smooth_prior(const PoseDistribution& prior, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("smooth_prior: alpha must be > 0");
  require_valid_distribution(prior, "smooth_prior");
  const double denom = 1.0 + kNumViews * alpha;
  PoseDistribution out;
  for (int v = 0; v < kNumViews; ++v)
    out[static_cast<std::size_t>(v)] = (prior[static_cast<std::size_t>(v)] + alpha) / denom;
  return out;
}

PoseDistribution estimate_prior(const std::vector<PoseDistribution>& posteriors) {
  if (posteriors.empty())
    throw std::invalid_argument("estimate_prior: empty posterior list");
  PoseDistribution acc{};
  for (const auto& p : posteriors)
    for (int v = 0; v < kNumViews; ++v) acc[static_cast<std::size_t>(v)] += p[static_cast<std::size_t>(v)];
  for (double& x : acc) x /= static_cast<double>(posteriors.size());
  return acc;
}

PoseDistribution fuse_with_log_prior(const FusedLogits& logits,
                                     const std::array<double, kNumViews>& log_prior,
                                     int n_patches) {
  FusedLogits shifted;
  for (int v = 0; v < kNumViews; ++v)
    shifted[static_cast<std::size_t>(v)] =
        logits[static_cast<std::size_t>(v)] + n_patches * log_prior[static_cast<std::size_t>(v)];
  return softmax(shifted);
}

namespace {

double linf_distance(const PoseDistribution& a, const PoseDistribution& b) {
  double d = 0.0;
  for (int v = 0; v < kNumViews; ++v)
    d = std::max(d, std::abs(a[static_cast<std::size_t>(v)] - b[static_cast<std::size_t>(v)]));
  return d;
}

}  // namespace

std::pair<std::vector<PoseDistribution>, CalibrationState> calibrate_iterate(
    const std::vector<PatchPosteriors>& patch_posteriors,
    const CalibrationConfig& cfg) {
  if (patch_posteriors.empty())
    throw std::invalid_argument("calibrate_iterate: no images");
  if (!(cfg.alpha > 0.0))
    throw std::invalid_argument("calibrate_iterate: alpha must be > 0");
  if (!(cfg.tol > 0.0))
    throw std::invalid_argument("calibrate_iterate: tol must be > 0");

  const std::size_t m = patch_posteriors.size();
  const int n_patches = static_cast<int>(patch_posteriors.front().size());

  // The original per-patch posteriors enter every iteration unchanged;
  // only the prior factor moves. Cache their log-sums once.
  std::vector<FusedLogits> logits(m);
  for (std::size_t j = 0; j < m; ++j) {
    if (static_cast<int>(patch_posteriors[j].size()) != n_patches)
      throw std::invalid_argument("calibrate_iterate: ragged patch counts");
    logits[j] = log_posterior_sum(patch_posteriors[j]);
  }

  std::vector<PoseDistribution> fused(m);
  for (std::size_t j = 0; j < m; ++j) fused[j] = softmax(logits[j]);

  CalibrationState state;
  state.prior = estimate_prior(fused);
  state.prior_history.push_back(state.prior);

  for (state.iter = 1; state.iter <= cfg.max_iters; ++state.iter) {
    const PoseDistribution smoothed = smooth_prior(state.prior, cfg.alpha);
    std::array<double, kNumViews> log_prior;
    for (int v = 0; v < kNumViews; ++v)
      log_prior[static_cast<std::size_t>(v)] = std::log(smoothed[static_cast<std::size_t>(v)]);

    for (std::size_t j = 0; j < m; ++j)
      fused[j] = fuse_with_log_prior(logits[j], log_prior, n_patches);

    const PoseDistribution next = estimate_prior(fused);
    state.prior_history.push_back(next);
    const double delta = linf_distance(next, state.prior);
    state.prior = next;
    if (delta < cfg.tol) {
      state.converged = true;
      break;
    }
  }
  if (state.iter > cfg.max_iters) state.iter = cfg.max_iters;
  return {std::move(fused), std::move(state)};
}

std::vector<PoseDistribution> calibrate_with_prior(
    const std::vector<PatchPosteriors>& patch_posteriors,
    const PoseDistribution& true_prior) {
  require_valid_distribution(true_prior, "calibrate_with_prior");
  for (double x : true_prior)
    if (!(x > 0.0))
      throw std::invalid_argument("calibrate_with_prior: prior must be strictly positive");

  std::array<double, kNumViews> log_prior;
  for (int v = 0; v < kNumViews; ++v)
    log_prior[static_cast<std::size_t>(v)] = std::log(true_prior[static_cast<std::size_t>(v)]);

  std::vector<PoseDistribution> out(patch_posteriors.size());
  for (std::size_t j = 0; j < patch_posteriors.size(); ++j) {
    const FusedLogits logits = log_posterior_sum(patch_posteriors[j]);
    out[j] = fuse_with_log_prior(logits, log_prior,
                                 static_cast<int>(patch_posteriors[j].size()));
  }
  return out;
}

CurvePattern classify_curve(const std::vector<double>& values, double eta) {
  const int n = static_cast<int>(values.size());
  if (n < 3) throw std::invalid_argument("classify_curve: need at least 3 points");

  // 3-point moving average; the ends average the available neighbors.
  std::vector<double> m(values.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - 1);
    const int hi = std::min(n - 1, i + 1);
    double s = 0.0;
    for (int k = lo; k <= hi; ++k) s += values[static_cast<std::size_t>(k)];
    m[static_cast<std::size_t>(i)] = s / (hi - lo + 1);
  }

  // Violation of monotonicity over [lo, hi): drops (rises) beyond eta.
  auto viol_inc = [&](int lo, int hi) {
    double v = 0.0;
    for (int i = lo; i < hi; ++i)
      v += std::max(0.0, m[static_cast<std::size_t>(i)] - m[static_cast<std::size_t>(i + 1)] - eta);
    return v;
  };
  auto viol_dec = [&](int lo, int hi) {
    double v = 0.0;
    for (int i = lo; i < hi; ++i)
      v += std::max(0.0, m[static_cast<std::size_t>(i + 1)] - m[static_cast<std::size_t>(i)] - eta);
    return v;
  };

  const double inc = viol_inc(0, n - 1);
  if (inc == 0.0) return CurvePattern::Increasing;
  const double dec = viol_dec(0, n - 1);
  if (dec == 0.0) return CurvePattern::Decreasing;

  // Unimodal: rises to an interior maximum, then falls.
  double uni = std::numeric_limits<double>::infinity();
  for (int k = 1; k < n - 1; ++k)
    uni = std::min(uni, viol_inc(0, k) + viol_dec(k, n - 1));
  if (uni == 0.0) return CurvePattern::Unimodal;

  if (inc <= dec && inc <= uni) return CurvePattern::Increasing;
  if (dec <= uni) return CurvePattern::Decreasing;
  return CurvePattern::Unimodal;
}

AlphaSweepResult sweep_alpha(
    const std::vector<PatchPosteriors>& patch_posteriors,
    const std::vector<double>& alpha_grid, const CalibrationConfig& base) {
  if (alpha_grid.empty()) throw std::invalid_argument("sweep_alpha: empty grid");
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    if (!(alpha_grid[i] > 0.0))
      throw std::invalid_argument("sweep_alpha: grid values must be > 0");
    if (i > 0 && alpha_grid[i] <= alpha_grid[i - 1])
      throw std::invalid_argument("sweep_alpha: grid must be ascending");
  }

  AlphaSweepResult result;
  result.alphas = alpha_grid;
  result.stable_priors.resize(alpha_grid.size());
  result.states.resize(alpha_grid.size());
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    CalibrationConfig cfg = base;
    cfg.alpha = alpha_grid[i];
    auto [fused, state] = calibrate_iterate(patch_posteriors, cfg);
    result.stable_priors[i] = state.prior;
    result.states[i] = std::move(state);
  }

  result.unimodal_sum.assign(alpha_grid.size(), 0.0);
  if (alpha_grid.size() < 3) {
    // Too few points to classify curve shapes; a one-point grid has a
    // trivial estimate.
    result.alpha_hat = alpha_grid.front();
    result.has_estimate = alpha_grid.size() == 1;
    return result;
  }

  for (int v = 0; v < kNumViews; ++v) {
    std::vector<double> curve(alpha_grid.size());
    for (std::size_t i = 0; i < alpha_grid.size(); ++i)
      curve[i] = result.stable_priors[i][static_cast<std::size_t>(v)];
    result.patterns[static_cast<std::size_t>(v)] = classify_curve(curve);
  }

  for (std::size_t i = 0; i < alpha_grid.size(); ++i)
    for (int v = 0; v < kNumViews; ++v)
      if (result.patterns[static_cast<std::size_t>(v)] == CurvePattern::Unimodal)
        result.unimodal_sum[i] += result.stable_priors[i][static_cast<std::size_t>(v)];

  try {
    result.alpha_hat = estimate_alpha(result);
    result.has_estimate = true;
  } catch (const NoEstimateError&) {
    result.alpha_hat = 1.0;  // documented fallback
    result.has_estimate = false;
  }
  return result;
}

double estimate_alpha(const AlphaSweepResult& sweep) {
  if (sweep.alphas.size() < 3)
    throw std::invalid_argument("estimate_alpha: need at least 3 grid points");
  bool any_unimodal = false;
  for (CurvePattern p : sweep.patterns)
    if (p == CurvePattern::Unimodal) any_unimodal = true;
  if (!any_unimodal)
    throw NoEstimateError("estimate_alpha: no unimodal view curves");

  std::size_t best = 0;
  for (std::size_t i = 1; i < sweep.unimodal_sum.size(); ++i)
    if (sweep.unimodal_sum[i] > sweep.unimodal_sum[best]) best = i;
  return sweep.alphas[best];
}

std::vector<double> log_uniform_grid(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi > lo) || n < 2)
    throw std::invalid_argument("log_uniform_grid: bad parameters");
  std::vector<double> grid(static_cast<std::size_t>(n));
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < n; ++i)
    grid[static_cast<std::size_t>(i)] =
        std::exp(llo + (lhi - llo) * i / (n - 1));
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

}  // namespace posecal
