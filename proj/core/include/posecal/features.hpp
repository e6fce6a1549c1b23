#pragma once

#include <array>
#include <vector>

#include "posecal/common.hpp"
#include "posecal/image.hpp"

namespace posecal {

// Geometry of the overlapped patch grid: (image_size - patch_size) /
// stride + 1 must equal grid_n.
struct PatchGridSpec {
  int image_size = kImageSize;
  int patch_size = kPatchSize;
  int stride = kPatchStride;
  int grid_n = kGridN;

  bool consistent() const {
    return patch_size <= image_size && stride > 0 &&
           (image_size - patch_size) % stride == 0 &&
           (image_size - patch_size) / stride + 1 == grid_n;
  }
};

// 576 = 8x8 cells x 9 orientation bins, cells row-major.
using HogDescriptor = std::array<float, kHogDim>;

// 36 patch descriptors in row-major grid order (20736 values total).
struct ImageFeature {
  std::array<HogDescriptor, kPatchCount> patches;

  float value(int flat_index) const {
    return patches[flat_index / kHogDim][flat_index % kHogDim];
  }
};

// Bilinear resize to a target x target square, half-pixel-center
// convention, output clamped to [0, 1]. A same-size resize is an exact
// identity.
GrayImage resize(const GrayImage& img, int target);

// Cuts the 36 overlapping 32x32 windows; patch (r, c) covers pixel rows
// [16r, 16r+32) and columns [16c, 16c+32), returned row-major.
std::vector<GrayImage> extract_patches(const GrayImage& img,
                                       const PatchGridSpec& spec = {});

// HoG of one 32x32 patch: central-difference gradients with border
// replication, 9 unsigned orientation bins centered at k*20 degrees,
// linear vote split across the two nearest bins, per-cell L2
// normalization (eps 1e-6). A constant patch maps to the zero vector.
HogDescriptor compute_hog(const GrayImage& patch);

// resize -> extract_patches -> compute_hog.
ImageFeature featurize(const GrayImage& img);

}  // namespace posecal
