#include "posecal/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "posecal/dataset.hpp"
#include "posecal/threading.hpp"

namespace posecal {

PoseDistribution shifted_benchmark_prior(double tau) {
  PoseDistribution p;
  double sum = 0.0;
  for (int v = 1; v <= kNumViews; ++v) {
    const double w = std::exp(-circular_view_distance(v, 1) / tau);
    p[static_cast<std::size_t>(v - 1)] = w;
    sum += w;
  }
  for (double& x : p) x /= sum;
  return p;
}

namespace {

struct TestSetData {
  std::string name;
  DatasetManifest manifest;
  std::vector<PoseLabel> truth;
  std::vector<PatchPosteriors> patch_posteriors;
  std::vector<FusedLogits> logits;
  std::vector<PoseLabel> rf_labels;
  std::vector<PoseLabel> global_labels;
};

std::vector<PatchPosteriors> bank_patch_posteriors(const PatchBank& bank,
                                                   const FeatureMatrix& features,
                                                   unsigned n_threads) {
  const std::size_t n = static_cast<std::size_t>(features.n_samples());
  std::vector<PatchPosteriors> out(n);
  parallel_for(n, n_threads, [&](std::size_t i) {
    std::vector<float> row(static_cast<std::size_t>(features.dim()));
    features.copy_row(static_cast<int>(i), row);
    PatchPosteriors q(kPatchCount);
    for (int p = 0; p < kPatchCount; ++p) {
      const std::span<const float> x(row.data() + static_cast<std::size_t>(p) * kHogDim,
                                     kHogDim);
      q[static_cast<std::size_t>(p)] = predict_proba(bank.forests[static_cast<std::size_t>(p)], x);
    }
    out[i] = std::move(q);
  });
  return out;
}

std::vector<PoseLabel> labels_from_posteriors(
    const std::vector<PoseDistribution>& posteriors) {
  std::vector<PoseLabel> labels(posteriors.size());
  for (std::size_t i = 0; i < posteriors.size(); ++i)
    labels[i] = predict_pose(posteriors[i]);
  return labels;
}

double accuracy_of(const std::vector<PoseLabel>& pred,
                   const std::vector<PoseLabel>& truth) {
  return evaluate(pred, truth).accuracy;
}

void write_sweep_csv(const std::filesystem::path& path,
                     const AlphaSweepResult& sweep,
                     const std::vector<double>& accuracy) {
  std::ofstream out(path);
  if (!out) throw IoError("write_sweep_csv: cannot open " + path.string());
  out << "alpha,iters,converged,unimodal_sum,accuracy";
  for (int v = 1; v <= kNumViews; ++v) out << ",p" << v;
  out << "\n";
  char buf[40];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < sweep.alphas.size(); ++i) {
    out << num(sweep.alphas[i]) << "," << sweep.states[i].iter << ","
        << (sweep.states[i].converged ? 1 : 0) << ","
        << num(sweep.unimodal_sum[i]) << ","
        << (accuracy.empty() ? std::string("") : num(accuracy[i]));
    for (int v = 0; v < kNumViews; ++v)
      out << "," << num(sweep.stable_priors[i][static_cast<std::size_t>(v)]);
    out << "\n";
  }
}

// Calibration rows for one shifted test set: sweep, auto-alpha, GT
// prior, per-alpha accuracy diagnostics and the neutrality check.
void calibrate_test_set(TestSetData& data, TestSetResult& result,
                        const std::vector<double>& grid,
                        const PoseDistribution& true_prior,
                        const std::filesystem::path& sweep_csv) {
  const AlphaSweepResult sweep = sweep_alpha(data.patch_posteriors, grid);
  result.alpha_hat = sweep.alpha_hat;
  result.alpha_has_estimate = sweep.has_estimate;

  result.sweep_accuracy.resize(grid.size());
  result.sweep_iters.resize(grid.size());
  result.sweep_converged.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CalibrationConfig cfg;
    cfg.alpha = grid[i];
    auto [fused, state] = calibrate_iterate(data.patch_posteriors, cfg);
    result.sweep_accuracy[i] = accuracy_of(labels_from_posteriors(fused), data.truth);
    result.sweep_iters[i] = state.iter;
    result.sweep_converged[i] = state.converged;
  }

  result.alpha_best_index = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (result.sweep_accuracy[i] > result.sweep_accuracy[static_cast<std::size_t>(result.alpha_best_index)])
      result.alpha_best_index = static_cast<int>(i);
  result.alpha_best = grid[static_cast<std::size_t>(result.alpha_best_index)];
  const auto hat_it = std::find(grid.begin(), grid.end(), result.alpha_hat);
  result.alpha_hat_index =
      hat_it == grid.end() ? -1 : static_cast<int>(hat_it - grid.begin());

  {
    CalibrationConfig cfg;
    cfg.alpha = result.alpha_hat;
    auto [fused, state] = calibrate_iterate(data.patch_posteriors, cfg);
    result.rf_opt_accuracy = accuracy_of(labels_from_posteriors(fused), data.truth);
  }
  {
    const auto fused = calibrate_with_prior(data.patch_posteriors, true_prior);
    result.rf_gt_accuracy = accuracy_of(labels_from_posteriors(fused), data.truth);
  }
  result.calibrated = true;

  write_sweep_csv(sweep_csv, sweep, result.sweep_accuracy);
}

double neutrality_fraction(const TestSetData& data) {
  CalibrationConfig cfg;
  cfg.alpha = 1e8;
  auto [fused, state] = calibrate_iterate(data.patch_posteriors, cfg);
  std::size_t match = 0;
  for (std::size_t j = 0; j < fused.size(); ++j)
    if (predict_pose(fused[j]) == data.rf_labels[j]) ++match;
  return static_cast<double>(match) / static_cast<double>(fused.size());
}

}  // namespace

ReproReport run_repro(const ReproConfig& cfg) {
  if (cfg.out_dir.empty()) throw std::invalid_argument("run_repro: out_dir required");
  std::filesystem::create_directories(cfg.out_dir);

  ReproReport report;
  report.config = cfg;
  report.alpha_grid = log_uniform_grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_n);
  report.shifted_prior = shifted_benchmark_prior(cfg.prior_tau);

  // --- datasets ---------------------------------------------------
  RenderOptions clean;
  clean.image_size = kImageSize;
  clean.clutter_level = 0.0;
  clean.lighting_jitter = cfg.lighting_jitter;

  RenderOptions cluttered = clean;
  cluttered.clutter_level = cfg.clutter_level;

  auto gen = [&](const std::string& name, int models, int views,
                 const PoseDistribution& prior, RenderOptions opts,
                 uint64_t salt) {
    opts.rng_seed = derive_seed(cfg.seed, salt, 0x44415441u);  // "DATA"
    return generate_dataset(models, views, prior, opts, cfg.out_dir / name,
                            cfg.n_threads);
  };

  TestSetData train;
  train.name = "train";
  train.manifest = gen("train", cfg.train_models, kNumViews, uniform_pose(), clean, 1);

  TestSetData sets[3];
  sets[0].name = "test_clean_uniform";
  sets[0].manifest = gen(sets[0].name, cfg.test_images, 1, uniform_pose(), clean, 2);
  sets[1].name = "test_clean_shifted";
  sets[1].manifest = gen(sets[1].name, cfg.test_images, 1, report.shifted_prior, clean, 3);
  sets[2].name = "test_cluttered_shifted";
  sets[2].manifest = gen(sets[2].name, cfg.test_images, 1, report.shifted_prior, cluttered, 4);

  // --- features ----------------------------------------------------
  const FeatureMatrix train_features = featurize_dataset(train.manifest, cfg.n_threads);
  save_features(train_features, cfg.out_dir / "train" / "features.bin");
  const std::vector<PoseLabel> train_labels = manifest_labels(train.manifest);

  // --- models ------------------------------------------------------
  ForestConfig bank_config = cfg.forest;
  bank_config.seed = derive_seed(cfg.seed, 5, 0x42414e4bu);  // "BANK"
  const PatchBank bank = train_patch_bank(train_features, train_labels,
                                          bank_config, cfg.n_threads);
  save_forests(kHogDim, bank_config, bank.forests, cfg.out_dir / "bank.pcf");

  ForestConfig global_config = cfg.forest;
  global_config.seed = derive_seed(cfg.seed, 6, 0x474c4f42u);  // "GLOB"
  const Forest global_forest =
      global_train(train_features, train_labels, global_config, cfg.n_threads);
  save_forests(kImageFeatureDim, global_forest.config, {&global_forest, 1},
               cfg.out_dir / "global.pcf");

  report.importance = patch_importance(global_forest);
  {
    const int centers[4] = {2 * kGridN + 2, 2 * kGridN + 3, 3 * kGridN + 2, 3 * kGridN + 3};
    const int corners[4] = {0, kGridN - 1, (kGridN - 1) * kGridN, kGridN * kGridN - 1};
    for (int k = 0; k < 4; ++k) {
      report.importance_center_mean += report.importance.weights[static_cast<std::size_t>(centers[k])] / 4.0;
      report.importance_corner_mean += report.importance.weights[static_cast<std::size_t>(corners[k])] / 4.0;
    }
  }

  // --- predictions -------------------------------------------------
  TestSetResult* results[3] = {&report.clean_uniform, &report.clean_shifted,
                               &report.cluttered_shifted};
  for (int s = 0; s < 3; ++s) {
    TestSetData& data = sets[s];
    TestSetResult& result = *results[s];
    result.name = data.name;
    data.truth = manifest_labels(data.manifest);

    const FeatureMatrix features = featurize_dataset(data.manifest, cfg.n_threads);
    save_features(features, cfg.out_dir / data.name / "features.bin");

    data.patch_posteriors = bank_patch_posteriors(bank, features, cfg.n_threads);
    std::vector<PoseDistribution> rf_posteriors(data.patch_posteriors.size());
    for (std::size_t j = 0; j < data.patch_posteriors.size(); ++j)
      rf_posteriors[j] = fuse(data.patch_posteriors[j]);
    data.rf_labels = labels_from_posteriors(rf_posteriors);
    result.rf_report = evaluate(data.rf_labels, data.truth);
    result.rf_accuracy = result.rf_report.accuracy;

    const std::size_t n = static_cast<std::size_t>(features.n_samples());
    std::vector<PoseDistribution> global_posteriors(n);
    parallel_for(n, cfg.n_threads, [&](std::size_t i) {
      std::vector<float> row(static_cast<std::size_t>(features.dim()));
      features.copy_row(static_cast<int>(i), row);
      global_posteriors[i] = global_predict(global_forest, row);
    });
    data.global_labels = labels_from_posteriors(global_posteriors);
    result.global_accuracy = accuracy_of(data.global_labels, data.truth);

    result.neutrality_match = neutrality_fraction(data);
  }

  // Calibration rows only make sense where the test prior shifts.
  calibrate_test_set(sets[1], report.clean_shifted, report.alpha_grid,
                     report.shifted_prior,
                     cfg.out_dir / "sweep_clean_shifted.csv");
  calibrate_test_set(sets[2], report.cluttered_shifted, report.alpha_grid,
                     report.shifted_prior,
                     cfg.out_dir / "sweep_cluttered_shifted.csv");

  save_confusion_csv(report.clean_uniform.rf_report, cfg.out_dir / "confusion.csv");

  // --- criteria ----------------------------------------------------
  ReproCriteria& crit = report.criteria;
  crit.neutrality = report.clean_uniform.neutrality_match == 1.0 &&
                    report.clean_shifted.neutrality_match == 1.0 &&
                    report.cluttered_shifted.neutrality_match == 1.0;

  crit.convergence = true;
  for (std::size_t i = 0; i < report.alpha_grid.size(); ++i)
    if (report.alpha_grid[i] >= 0.1 && !report.clean_shifted.sweep_converged[i])
      crit.convergence = false;

  {
    const TestSetResult& r = report.clean_shifted;
    crit.table_ordering = r.rf_gt_accuracy >= r.rf_opt_accuracy &&
                          r.rf_opt_accuracy >= r.rf_accuracy &&
                          (r.rf_opt_accuracy - r.rf_accuracy) >= 0.02 &&
                          (r.rf_gt_accuracy - r.rf_opt_accuracy) <= 0.05;
    // alpha_hat must land within one grid step of an accuracy-maximizing
    // grid point (any of them, when tied).
    crit.alpha_quality = false;
    if (r.alpha_hat_index >= 0 && !r.sweep_accuracy.empty()) {
      const double max_acc =
          *std::max_element(r.sweep_accuracy.begin(), r.sweep_accuracy.end());
      for (std::size_t i = 0; i < r.sweep_accuracy.size(); ++i)
        if (r.sweep_accuracy[i] == max_acc &&
            std::abs(static_cast<int>(i) - r.alpha_hat_index) <= 1)
          crit.alpha_quality = true;
    }
  }
  crit.global_gap = (report.cluttered_shifted.rf_accuracy -
                     report.cluttered_shifted.global_accuracy) >= 0.10;

  save_repro_report(report, cfg.out_dir / "report.json");
  return report;
}

void save_repro_report(const ReproReport& report,
                       const std::filesystem::path& path) {
  using nlohmann::json;
  json j;
  j["seed"] = report.config.seed;
  j["train_models"] = report.config.train_models;
  j["test_images"] = report.config.test_images;
  j["clutter_level"] = report.config.clutter_level;
  j["lighting_jitter"] = report.config.lighting_jitter;
  j["prior_tau"] = report.config.prior_tau;
  j["alpha_grid"] = report.alpha_grid;
  j["shifted_prior"] = report.shifted_prior;

  auto set_json = [](const TestSetResult& r) {
    json s;
    s["rf"] = r.rf_accuracy;
    s["global"] = r.global_accuracy;
    s["neutrality_match"] = r.neutrality_match;
    s["confusion_mass_90deg"] = r.rf_report.confusion_mass_at(4);
    s["confusion_mass_180deg"] = r.rf_report.confusion_mass_at(8);
    if (r.calibrated) {
      s["rf_opt"] = r.rf_opt_accuracy;
      s["rf_gt"] = r.rf_gt_accuracy;
      s["alpha_hat"] = r.alpha_hat;
      s["alpha_has_estimate"] = r.alpha_has_estimate;
      s["alpha_hat_index"] = r.alpha_hat_index;
      s["alpha_best_index"] = r.alpha_best_index;
      s["alpha_best"] = r.alpha_best;
      s["sweep_accuracy"] = r.sweep_accuracy;
      s["sweep_iters"] = r.sweep_iters;
      json conv = json::array();
      for (bool b : r.sweep_converged) conv.push_back(b);
      s["sweep_converged"] = conv;
    }
    return s;
  };
  j["test_sets"]["clean_uniform"] = set_json(report.clean_uniform);
  j["test_sets"]["clean_shifted"] = set_json(report.clean_shifted);
  j["test_sets"]["cluttered_shifted"] = set_json(report.cluttered_shifted);

  j["patch_importance"] = report.importance.weights;
  j["importance_center_mean"] = report.importance_center_mean;
  j["importance_corner_mean"] = report.importance_corner_mean;

  j["criteria"]["neutrality"] = report.criteria.neutrality;
  j["criteria"]["convergence"] = report.criteria.convergence;
  j["criteria"]["table_ordering"] = report.criteria.table_ordering;
  j["criteria"]["alpha_quality"] = report.criteria.alpha_quality;
  j["criteria"]["global_gap"] = report.criteria.global_gap;
  j["criteria"]["all"] = report.criteria.all();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_repro_report: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

std::string format_repro_summary(const ReproReport& report) {
  std::ostringstream os;
  char line[160];
  os << "benchmark seed " << report.config.seed << " ("
     << report.config.train_models << " models x 16 views train, "
     << report.config.test_images << "-image test sets)\n\n";
  std::snprintf(line, sizeof(line), "%-10s %16s %15s %19s\n", "system",
                "clean-uniform", "clean-shifted", "cluttered-shifted");
  os << line;
  auto pct = [](double a) {
    char b[16];
    std::snprintf(b, sizeof(b), "%.2f%%", 100 * a);
    return std::string(b);
  };
  auto row = [&](const char* name, const std::string& a, const std::string& b,
                 const std::string& c) {
    std::snprintf(line, sizeof(line), "%-10s %16s %15s %19s\n", name,
                  a.c_str(), b.c_str(), c.c_str());
    os << line;
  };
  row("RF", pct(report.clean_uniform.rf_accuracy),
      pct(report.clean_shifted.rf_accuracy),
      pct(report.cluttered_shifted.rf_accuracy));
  row("RF_opt", "-", pct(report.clean_shifted.rf_opt_accuracy),
      pct(report.cluttered_shifted.rf_opt_accuracy));
  row("RF_GT", "-", pct(report.clean_shifted.rf_gt_accuracy),
      pct(report.cluttered_shifted.rf_gt_accuracy));
  row("Global", pct(report.clean_uniform.global_accuracy),
      pct(report.clean_shifted.global_accuracy),
      pct(report.cluttered_shifted.global_accuracy));
  os << "\nalpha_hat (clean-shifted):     " << report.clean_shifted.alpha_hat
     << (report.clean_shifted.alpha_has_estimate ? "" : " (fallback)") << "\n";
  os << "alpha_hat (cluttered-shifted): " << report.cluttered_shifted.alpha_hat
     << (report.cluttered_shifted.alpha_has_estimate ? "" : " (fallback)")
     << "\n\n";
  auto crit = [&](const char* name, bool ok) {
    std::snprintf(line, sizeof(line), "%-16s %s\n", name, ok ? "PASS" : "FAIL");
    os << line;
  };
  crit("neutrality", report.criteria.neutrality);
  crit("convergence", report.criteria.convergence);
  crit("table_ordering", report.criteria.table_ordering);
  crit("alpha_quality", report.criteria.alpha_quality);
  crit("global_gap", report.criteria.global_gap);
  return os.str();
}

}  // namespace posecal
