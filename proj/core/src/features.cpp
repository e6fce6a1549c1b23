#include "posecal/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace posecal {

GrayImage resize(const GrayImage& img, int target) {
  if (img.empty()) throw std::invalid_argument("resize: empty image");
  if (target < 1) throw std::invalid_argument("resize: target < 1");
  if (img.width == target && img.height == target) return img;

  GrayImage out(target, target);
  const double sx = static_cast<double>(img.width) / target;
  const double sy = static_cast<double>(img.height) / target;
  for (int y = 0; y < target; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < target; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const double v = (1.0 - wy) * ((1.0 - wx) * img.at(x0, y0) + wx * img.at(x1, y0)) +
                       wy * ((1.0 - wx) * img.at(x0, y1) + wx * img.at(x1, y1));
      out.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

std::vector<GrayImage> extract_patches(const GrayImage& img,
                                       const PatchGridSpec& spec) {
  if (!spec.consistent())
    throw std::invalid_argument("extract_patches: inconsistent grid spec");
  if (img.width != spec.image_size || img.height != spec.image_size)
    throw std::invalid_argument("extract_patches: image size mismatch");

  std::vector<GrayImage> patches;
  patches.reserve(static_cast<std::size_t>(spec.grid_n) * spec.grid_n);
  for (int r = 0; r < spec.grid_n; ++r) {
    for (int c = 0; c < spec.grid_n; ++c) {
      GrayImage patch(spec.patch_size, spec.patch_size);
      const int py = r * spec.stride;
      const int px = c * spec.stride;
      for (int y = 0; y < spec.patch_size; ++y)
        for (int x = 0; x < spec.patch_size; ++x)
          patch.at(x, y) = img.at(px + x, py + y);
      patches.push_back(std::move(patch));
    }
  }
  return patches;
}

HogDescriptor compute_hog(const GrayImage& patch) {
  if (patch.width != kPatchSize || patch.height != kPatchSize)
    throw std::invalid_argument("compute_hog: patch must be 32x32");

  constexpr int cell_px = kPatchSize / kHogCells;  // 4
  constexpr double bin_width = M_PI / kHogBins;

  // Per-cell accumulation in double, then normalized into the float
  // descriptor.
  std::array<double, kHogDim> acc{};

  auto sample = [&](int x, int y) {  // border replication
    x = std::clamp(x, 0, patch.width - 1);
    y = std::clamp(y, 0, patch.height - 1);
    return static_cast<double>(patch.at(x, y));
  };

  for (int y = 0; y < kPatchSize; ++y) {
    for (int x = 0; x < kPatchSize; ++x) {
      const double gx = 0.5 * (sample(x + 1, y) - sample(x - 1, y));
      const double gy = 0.5 * (sample(x, y + 1) - sample(x, y - 1));
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0) continue;

      double theta = std::atan2(gy, gx);  // (-pi, pi]
      if (theta < 0.0) theta += M_PI;     // unsigned orientation [0, pi)
      if (theta >= M_PI) theta -= M_PI;

      // Bins are centered at k * bin_width; split the vote linearly
      // between the two nearest centers (wrapping at pi).
      const double b = theta / bin_width;
      int lo = static_cast<int>(std::floor(b));
      const double frac = b - lo;
      const int bin0 = ((lo % kHogBins) + kHogBins) % kHogBins;
      const int bin1 = (bin0 + 1) % kHogBins;

      const int cell = (y / cell_px) * kHogCells + (x / cell_px);
      acc[static_cast<std::size_t>(cell) * kHogBins + bin0] += mag * (1.0 - frac);
      acc[static_cast<std::size_t>(cell) * kHogBins + bin1] += mag * frac;
    }
  }

  HogDescriptor desc;
  constexpr double eps = 1e-6;
  for (int cell = 0; cell < kHogCells * kHogCells; ++cell) {
    double sq = 0.0;
    for (int b = 0; b < kHogBins; ++b) {
      const double v = acc[static_cast<std::size_t>(cell) * kHogBins + b];
      sq += v * v;
    }
    const double inv = 1.0 / std::sqrt(sq + eps * eps);
    for (int b = 0; b < kHogBins; ++b) {
      const std::size_t i = static_cast<std::size_t>(cell) * kHogBins + b;
      desc[i] = static_cast<float>(acc[i] * inv);
    }
  }
  return desc;
}

ImageFeature featurize(const GrayImage& img) {
  const GrayImage sized = resize(img, kImageSize);
  const std::vector<GrayImage> patches = extract_patches(sized);
  ImageFeature feat;
  for (int i = 0; i < kPatchCount; ++i)
    feat.patches[static_cast<std::size_t>(i)] = compute_hog(patches[static_cast<std::size_t>(i)]);
  return feat;
}

}  // namespace posecal
