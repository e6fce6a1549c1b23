#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace posecal {

// Discretized pose space: 16 azimuth bins, 22.5 degrees apart.
inline constexpr int kNumViews = 16;

// 6x6 overlapped patch grid on a 112x112 image.
inline constexpr int kGridN = 6;
inline constexpr int kPatchCount = kGridN * kGridN;
inline constexpr int kImageSize = 112;
inline constexpr int kPatchSize = 32;
inline constexpr int kPatchStride = 16;

// Per-patch descriptor: 8x8 cells of 4x4 px, 9 orientation bins.
inline constexpr int kHogCells = 8;
inline constexpr int kHogBins = 9;
inline constexpr int kHogDim = kHogCells * kHogCells * kHogBins;  // 576
inline constexpr int kImageFeatureDim = kPatchCount * kHogDim;    // 20736

// Probability vector over the 16 pose bins. Entries must be >= 0 and
// sum to 1; code that feeds log-space fusion additionally requires
// strict positivity (guaranteed upstream by Laplace smoothing).
using PoseDistribution = std::array<double, kNumViews>;

// Pose labels are 1-based (1..16); internal class indices are 0-based.
using PoseLabel = int;

inline PoseDistribution uniform_pose() {
  PoseDistribution p;
  p.fill(1.0 / kNumViews);
  return p;
}

inline double azimuth_degrees(PoseLabel v) { return (v - 1) * 22.5; }

inline bool valid_pose_label(PoseLabel v) { return v >= 1 && v <= kNumViews; }

inline double distribution_sum(const PoseDistribution& p) {
  double s = 0.0;
  for (double x : p) s += x;
  return s;
}

inline bool is_valid_distribution(const PoseDistribution& p, double tol = 1e-9) {
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0) return false;
  }
  return std::abs(distribution_sum(p) - 1.0) <= tol;
}

inline void require_valid_distribution(const PoseDistribution& p,
                                       const char* what) {
  if (!is_valid_distribution(p))
    throw std::invalid_argument(std::string(what) +
                                ": not a valid pose distribution");
}

// Circular distance between two pose bins, in bins (0..8).
inline int circular_view_distance(PoseLabel a, PoseLabel b) {
  int d = std::abs(a - b) % kNumViews;
  return std::min(d, kNumViews - d);
}

// Raised when a shape parameter set cannot be rendered.
struct InvalidShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Raised by estimate_alpha when no view exhibits a unimodal curve.
struct NoEstimateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace posecal
