#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "posecal/common.hpp"
#include "posecal/image.hpp"

namespace posecal {

// Proportions of a procedurally generated chair, in normalized object
// units. All dimensions are strictly positive; back_tilt_deg in [0, 30].
struct ShapeParams {
  double seat_width = 1.0;
  double seat_depth = 1.0;
  double seat_height = 0.9;
  double back_height = 1.0;
  double back_tilt_deg = 10.0;
  double leg_thickness = 0.09;
  uint64_t style_seed = 0;

  bool valid() const {
    return seat_width > 0 && seat_depth > 0 && seat_height > 0 &&
           back_height > 0 && leg_thickness > 0 && back_tilt_deg >= 0 &&
           back_tilt_deg <= 30;
  }
};

struct RenderOptions {
  int image_size = kImageSize;
  double clutter_level = 0.0;    // in [0, 1]; 0 = clean uniform background
  double lighting_jitter = 0.0;  // in [0, 1]; per-face multiplicative noise
  uint64_t rng_seed = 0;
};

struct DatasetManifest {
  struct Entry {
    std::string path;  // relative to root
    PoseLabel view = 1;
    int64_t model_id = 0;
  };
  std::filesystem::path root;
  std::vector<Entry> entries;
  std::optional<PoseDistribution> prior_used;
};

// Deterministic function of the seed; identical seeds give identical
// parameters, and all fields satisfy the ShapeParams invariants.
ShapeParams sample_shape(uint64_t rng_seed);

// Rasterizes the chair from azimuth (view-1)*22.5 deg at a fixed 15 deg
// camera elevation, orthographic projection, flat shading. Pure
// function of its arguments: identical inputs give bitwise-identical
// images. Throws InvalidShapeError for degenerate shapes.
GrayImage render(const ShapeParams& shape, PoseLabel view,
                 const RenderOptions& opts);

// Renders n_models chairs. With a uniform prior and views_per_model ==
// 16 every model is rendered once per view (exhaustive, balanced);
// otherwise views_per_model view labels per model are drawn i.i.d.
// from pose_prior. Writes <out_dir>/images/m<model>_v<view>.pgm,
// <out_dir>/manifest.csv and <out_dir>/prior.csv; the manifest is
// written atomically (temp file + rename).
DatasetManifest generate_dataset(int n_models, int views_per_model,
                                 const PoseDistribution& pose_prior,
                                 const RenderOptions& opts,
                                 const std::filesystem::path& out_dir,
                                 unsigned n_threads = 0);

DatasetManifest load_manifest(const std::filesystem::path& dir);

// Prior files are 16 numeric values (whitespace/comma separated, one
// optional header line). The values must sum to 1 within 1e-6; they are
// renormalized exactly on load.
PoseDistribution load_prior_file(const std::filesystem::path& path);
void save_prior_file(const PoseDistribution& prior,
                     const std::filesystem::path& path);

}  // namespace posecal
