#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "posecal/calibration.hpp"
#include "posecal/eval.hpp"
#include "posecal/forest.hpp"
#include "posecal/synthgen.hpp"

namespace posecal {

// Fixed-seed end-to-end benchmark: 200 models x 16 views training set,
// three 500-image test sets (clean-uniform, clean-shifted,
// cluttered-shifted), patch bank + global forest, calibration sweep,
// and the directional threshold checks.
struct ReproConfig {
  uint64_t seed = 42;
  int train_models = 200;
  int test_images = 500;
  double clutter_level = 0.6;
  double lighting_jitter = 0.2;
  double prior_tau = 2.2;  // shifted prior: p(v) ~ exp(-circdist(v,1)/tau)
  ForestConfig forest;
  double grid_lo = 1e-3;
  double grid_hi = 1e3;
  int grid_n = 25;
  unsigned n_threads = 0;
  bool enforce_thresholds = true;
  std::filesystem::path out_dir;
};

struct TestSetResult {
  std::string name;
  double rf_accuracy = 0.0;
  double global_accuracy = 0.0;
  // Calibrated rows; only computed for the shifted sets.
  bool calibrated = false;
  double rf_opt_accuracy = 0.0;
  double rf_gt_accuracy = 0.0;
  double alpha_hat = 1.0;
  bool alpha_has_estimate = false;
  double alpha_best = 1.0;  // grid alpha maximizing accuracy
  int alpha_hat_index = -1;
  int alpha_best_index = -1;  // lowest argmax on ties
  std::vector<double> sweep_accuracy;  // per grid alpha
  std::vector<int> sweep_iters;
  std::vector<bool> sweep_converged;
  double neutrality_match = 0.0;  // argmax agreement at alpha = 1e8
  EvalReport rf_report;
};

struct ReproCriteria {
  bool neutrality = false;        // criterion 5
  bool convergence = false;       // criterion 6
  bool table_ordering = false;    // criterion 7
  bool alpha_quality = false;     // criterion 8
  bool global_gap = false;        // criterion 9

  bool all() const {
    return neutrality && convergence && table_ordering && alpha_quality &&
           global_gap;
  }
};

struct ReproReport {
  ReproConfig config;
  std::vector<double> alpha_grid;
  PoseDistribution shifted_prior = uniform_pose();
  TestSetResult clean_uniform;
  TestSetResult clean_shifted;
  TestSetResult cluttered_shifted;
  PatchImportanceMap importance;
  double importance_center_mean = 0.0;
  double importance_corner_mean = 0.0;
  ReproCriteria criteria;
};

// Front-view-heavy test prior used by the shifted benchmark sets.
PoseDistribution shifted_benchmark_prior(double tau);

// Runs the full benchmark under cfg.out_dir, writing train/ and test_*/
// datasets, features caches, bank.pcf, global.pcf, sweep CSVs,
// report.json and confusion.csv. Returns the in-memory report.
ReproReport run_repro(const ReproConfig& cfg);

// Serializes the report (deterministically) to report.json.
void save_repro_report(const ReproReport& report,
                       const std::filesystem::path& path);

// Formats the summary table printed by the CLI.
std::string format_repro_summary(const ReproReport& report);

}  // namespace posecal
