#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "posecal/common.hpp"
#include "posecal/features.hpp"
#include "posecal/synthgen.hpp"

namespace posecal {

// Dense feature matrix, stored feature-major so tree induction scans a
// feature's values over contiguous memory. Rows are samples (images),
// columns are feature dimensions.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(int n, int dim)
      : n_(n), dim_(dim),
        values_(static_cast<std::size_t>(n) * static_cast<std::size_t>(dim)) {}

  int n_samples() const { return n_; }
  int dim() const { return dim_; }

  float at(int sample, int feature) const {
    return values_[static_cast<std::size_t>(feature) * n_ + sample];
  }
  void set(int sample, int feature, float v) {
    values_[static_cast<std::size_t>(feature) * n_ + sample] = v;
  }
  std::span<const float> column(int feature) const {
    return {values_.data() + static_cast<std::size_t>(feature) * n_,
            static_cast<std::size_t>(n_)};
  }
  void copy_row(int sample, std::span<float> out) const {
    for (int f = 0; f < dim_; ++f) out[static_cast<std::size_t>(f)] = at(sample, f);
  }

 private:
  int n_ = 0;
  int dim_ = 0;
  std::vector<float> values_;
};

// A contiguous block of columns (e.g. one patch's 576 dims out of the
// 20736-dim image feature).
struct FeatureColumns {
  const FeatureMatrix* matrix = nullptr;
  int offset = 0;
  int dim = 0;

  FeatureColumns() = default;
  FeatureColumns(const FeatureMatrix& m)  // whole matrix
      : matrix(&m), offset(0), dim(m.dim()) {}
  FeatureColumns(const FeatureMatrix& m, int off, int d)
      : matrix(&m), offset(off), dim(d) {}

  int n_samples() const { return matrix->n_samples(); }
  std::span<const float> column(int f) const { return matrix->column(offset + f); }
};

// Feature cache: magic "PCFB", u32 version, u32 count, u32 dims, then
// count little-endian f32 rows of dims values each, index-aligned with
// the manifest that produced them.
void save_features(const FeatureMatrix& features,
                   const std::filesystem::path& path);
FeatureMatrix load_features(const std::filesystem::path& path);

// Featurizes every manifest entry (in manifest order) into a matrix of
// kImageFeatureDim columns.
FeatureMatrix featurize_dataset(const DatasetManifest& manifest,
                                unsigned n_threads = 0);

std::vector<PoseLabel> manifest_labels(const DatasetManifest& manifest);

}  // namespace posecal
