// posecal: viewpoint-classification pipeline driver.
//
// Subcommands cover the full pipeline with file-based handoff between
// stages: gen-data -> featurize -> train -> predict / calibrate /
// sweep-alpha -> evaluate, plus repro for the end-to-end fixed-seed
// benchmark. Every run writes a run.json with the resolved
// configuration next to its primary output.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "posecal/calibration.hpp"
#include "posecal/dataset.hpp"
#include "posecal/eval.hpp"
#include "posecal/forest.hpp"
#include "posecal/fusion.hpp"
#include "posecal/pipeline.hpp"
#include "posecal/synthgen.hpp"
#include "posecal/threading.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace posecal;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // validation / threshold failure
constexpr int kExitUsage = 2;    // bad flags

uint64_t default_seed() {
  if (const char* env = std::getenv("POSECAL_SEED"))
    return std::strtoull(env, nullptr, 10);
  return 0;
}

void write_run_json(const fs::path& path, const json& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << config.dump(2) << "\n";
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  int models = 10;
  int views = kNumViews;
  std::string prior = "uniform";
  double clutter = 0.0;
  double jitter = 0.0;
  int size = kImageSize;
  uint64_t seed = default_seed();
  std::string out;
};

int run_gen_data(const GenDataArgs& a) {
  PoseDistribution prior =
      a.prior == "uniform" ? uniform_pose() : load_prior_file(a.prior);
  RenderOptions opts;
  opts.image_size = a.size;
  opts.clutter_level = a.clutter;
  opts.lighting_jitter = a.jitter;
  opts.rng_seed = a.seed;
  const DatasetManifest manifest =
      generate_dataset(a.models, a.views, prior, opts, a.out);
  write_run_json(fs::path(a.out) / "run.json",
                 {{"subcommand", "gen-data"},
                  {"models", a.models},
                  {"views", a.views},
                  {"prior", a.prior},
                  {"clutter", a.clutter},
                  {"jitter", a.jitter},
                  {"size", a.size},
                  {"seed", a.seed},
                  {"out", a.out}});
  std::cout << "wrote " << manifest.entries.size() << " images under " << a.out
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- featurize

struct FeaturizeArgs {
  std::string data;
  std::string out;
  unsigned threads = 0;
};

int run_featurize(const FeaturizeArgs& a) {
  const DatasetManifest manifest = load_manifest(a.data);
  const FeatureMatrix features = featurize_dataset(manifest, a.threads);
  save_features(features, a.out);
  write_run_json(fs::path(a.out).parent_path() / "run.json",
                 {{"subcommand", "featurize"}, {"data", a.data}, {"out", a.out}});
  std::cout << "featurized " << features.n_samples() << " images ("
            << features.dim() << " dims) -> " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string features;
  std::string data;
  std::string out;
  std::string mode = "patch";  // patch | global
  int trees = 100;
  int depth = 20;
  int mtry = 24;
  int min_leaf = 1;
  bool no_bootstrap = false;
  double laplace = 1.0;
  uint64_t seed = default_seed();
  unsigned threads = 0;
};

int run_train(const TrainArgs& a) {
  const DatasetManifest manifest = load_manifest(a.data);
  const FeatureMatrix features = load_features(a.features);
  if (features.n_samples() != static_cast<int>(manifest.entries.size()))
    throw std::invalid_argument("train: features and manifest disagree on count");
  const std::vector<PoseLabel> labels = manifest_labels(manifest);

  ForestConfig config;
  config.n_trees = a.trees;
  config.max_depth = a.depth;
  config.features_per_split = a.mtry;
  config.min_samples_leaf = a.min_leaf;
  config.bootstrap = !a.no_bootstrap;
  config.laplace = a.laplace;
  config.seed = a.seed;

  if (a.mode == "patch") {
    const PatchBank bank = train_patch_bank(features, labels, config, a.threads);
    save_forests(kHogDim, config, bank.forests, a.out);
  } else if (a.mode == "global") {
    const Forest forest = global_train(features, labels, config, a.threads);
    save_forests(features.dim(), forest.config, {&forest, 1}, a.out);
  } else {
    throw CLI::ValidationError("--mode must be patch or global");
  }
  write_run_json(fs::path(a.out).parent_path() / "run.json",
                 {{"subcommand", "train"},
                  {"features", a.features},
                  {"data", a.data},
                  {"out", a.out},
                  {"mode", a.mode},
                  {"trees", a.trees},
                  {"depth", a.depth},
                  {"mtry", a.mtry},
                  {"min_leaf", a.min_leaf},
                  {"bootstrap", !a.no_bootstrap},
                  {"laplace", a.laplace},
                  {"seed", a.seed}});
  std::cout << "trained " << a.mode << " model -> " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- predict

std::vector<PatchPosteriors> model_patch_posteriors(const ForestModelFile& model,
                                                    const FeatureMatrix& features,
                                                    unsigned threads) {
  if (!model.is_patch_bank())
    throw std::invalid_argument("model is not a 36-forest patch bank");
  if (features.dim() != kImageFeatureDim)
    throw std::invalid_argument("expected 20736-dim features");
  std::vector<PatchPosteriors> out(static_cast<std::size_t>(features.n_samples()));
  parallel_for(out.size(), threads, [&](std::size_t i) {
    std::vector<float> row(static_cast<std::size_t>(features.dim()));
    features.copy_row(static_cast<int>(i), row);
    PatchPosteriors q(kPatchCount);
    for (int p = 0; p < kPatchCount; ++p)
      q[static_cast<std::size_t>(p)] = predict_proba(
          model.forests[static_cast<std::size_t>(p)],
          std::span<const float>(row.data() + static_cast<std::size_t>(p) * kHogDim, kHogDim));
    out[i] = std::move(q);
  });
  return out;
}

struct PredictArgs {
  std::string model;
  std::string features;
  unsigned threads = 0;
};

int run_predict(const PredictArgs& a) {
  const ForestModelFile model = load_forests(a.model);
  const FeatureMatrix features = load_features(a.features);

  std::vector<PoseDistribution> posteriors(
      static_cast<std::size_t>(features.n_samples()));
  if (model.is_patch_bank()) {
    const auto q = model_patch_posteriors(model, features, a.threads);
    for (std::size_t i = 0; i < q.size(); ++i) posteriors[i] = fuse(q[i]);
  } else {
    if (features.dim() != model.feature_dim)
      throw std::invalid_argument("predict: feature dim mismatch");
    parallel_for(posteriors.size(), a.threads, [&](std::size_t i) {
      std::vector<float> row(static_cast<std::size_t>(features.dim()));
      features.copy_row(static_cast<int>(i), row);
      posteriors[i] = predict_proba(model.forests[0], row);
    });
  }

  // One line per image: predicted label then the 16 probabilities.
  for (const auto& p : posteriors) {
    std::cout << predict_pose(p);
    for (int v = 0; v < kNumViews; ++v)
      std::cout << " " << format_double(p[static_cast<std::size_t>(v)]);
    std::cout << "\n";
  }
  return kExitOk;
}

// -------------------------------------------------------------- calibrate

void save_posteriors_csv(const std::vector<PoseDistribution>& posteriors,
                         const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "path";
  for (int v = 1; v <= kNumViews; ++v) out << ",p" << v;
  out << "\n";
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    out << manifest.entries[i].path;
    for (int v = 0; v < kNumViews; ++v)
      out << "," << format_double(posteriors[i][static_cast<std::size_t>(v)]);
    out << "\n";
  }
}

struct CalibrateArgs {
  std::string model;
  std::string data;
  std::string alpha = "auto";
  std::string true_prior;  // one-shot ground-truth calibration when set
  std::string out = "posteriors.csv";
  std::string trace;
  double grid_lo = 1e-3, grid_hi = 1e3;
  int grid_n = 25;
  unsigned threads = 0;
};

int run_calibrate(const CalibrateArgs& a) {
  const ForestModelFile model = load_forests(a.model);
  const DatasetManifest manifest = load_manifest(a.data);
  const fs::path feat_path = fs::path(a.data) / "features.bin";
  const FeatureMatrix features = fs::exists(feat_path)
                                     ? load_features(feat_path)
                                     : featurize_dataset(manifest, a.threads);
  if (features.n_samples() != static_cast<int>(manifest.entries.size()))
    throw std::invalid_argument("calibrate: features/manifest count mismatch");
  const auto patch_posteriors = model_patch_posteriors(model, features, a.threads);

  std::vector<PoseDistribution> calibrated;
  CalibrationState state;
  double alpha_used = 0.0;
  if (!a.true_prior.empty()) {
    calibrated = calibrate_with_prior(patch_posteriors, load_prior_file(a.true_prior));
  } else {
    CalibrationConfig cfg;
    if (a.alpha == "auto") {
      const auto sweep = sweep_alpha(
          patch_posteriors, log_uniform_grid(a.grid_lo, a.grid_hi, a.grid_n));
      cfg.alpha = sweep.alpha_hat;
      if (!sweep.has_estimate)
        std::cerr << "note: no unimodal view curves; falling back to alpha=1\n";
    } else {
      cfg.alpha = std::stod(a.alpha);
    }
    alpha_used = cfg.alpha;
    auto [fused, st] = calibrate_iterate(patch_posteriors, cfg);
    calibrated = std::move(fused);
    state = std::move(st);

    if (!a.trace.empty()) {
      std::ofstream trace(a.trace);
      if (!trace) throw IoError("cannot write " + a.trace);
      trace << "iter,v,prior\n";
      for (std::size_t it = 0; it < state.prior_history.size(); ++it)
        for (int v = 0; v < kNumViews; ++v)
          trace << it << "," << (v + 1) << ","
                << format_double(state.prior_history[it][static_cast<std::size_t>(v)]) << "\n";
    }
  }

  save_posteriors_csv(calibrated, manifest, a.out);
  write_run_json(fs::path(a.out).parent_path() / "run.json",
                 {{"subcommand", "calibrate"},
                  {"model", a.model},
                  {"data", a.data},
                  {"alpha", a.alpha},
                  {"alpha_used", alpha_used},
                  {"true_prior", a.true_prior},
                  {"out", a.out},
                  {"trace", a.trace},
                  {"grid_lo", a.grid_lo},
                  {"grid_hi", a.grid_hi},
                  {"grid_n", a.grid_n}});
  if (a.true_prior.empty())
    std::cout << "calibrated " << calibrated.size() << " posteriors (alpha="
              << alpha_used << ", " << state.iter << " iterations, "
              << (state.converged ? "converged" : "not converged") << ")\n";
  else
    std::cout << "calibrated " << calibrated.size()
              << " posteriors with ground-truth prior\n";
  return kExitOk;
}

// ------------------------------------------------------------- sweep-alpha

struct SweepArgs {
  std::string model;
  std::string data;
  double grid_lo = 1e-3, grid_hi = 1e3;
  int grid_n = 25;
  std::string out = "sweep.csv";
  std::string summary;
  unsigned threads = 0;
};

const char* pattern_name(CurvePattern p) {
  switch (p) {
    case CurvePattern::Increasing: return "increasing";
    case CurvePattern::Decreasing: return "decreasing";
    case CurvePattern::Unimodal: return "unimodal";
  }
  return "?";
}

int run_sweep(const SweepArgs& a) {
  const ForestModelFile model = load_forests(a.model);
  const DatasetManifest manifest = load_manifest(a.data);
  const fs::path feat_path = fs::path(a.data) / "features.bin";
  const FeatureMatrix features = fs::exists(feat_path)
                                     ? load_features(feat_path)
                                     : featurize_dataset(manifest, a.threads);
  const auto patch_posteriors = model_patch_posteriors(model, features, a.threads);
  const auto grid = log_uniform_grid(a.grid_lo, a.grid_hi, a.grid_n);
  const AlphaSweepResult sweep = sweep_alpha(patch_posteriors, grid);

  {
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write " + a.out);
    out << "alpha,iters,converged,unimodal_sum";
    for (int v = 1; v <= kNumViews; ++v) out << ",p" << v;
    out << "\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
      out << format_double(sweep.alphas[i]) << "," << sweep.states[i].iter << ","
          << (sweep.states[i].converged ? 1 : 0) << ","
          << format_double(sweep.unimodal_sum[i]);
      for (int v = 0; v < kNumViews; ++v)
        out << "," << format_double(sweep.stable_priors[i][static_cast<std::size_t>(v)]);
      out << "\n";
    }
  }
  if (!a.summary.empty()) {
    json s;
    s["alpha_hat"] = sweep.alpha_hat;
    s["has_estimate"] = sweep.has_estimate;
    json patterns = json::array();
    for (int v = 0; v < kNumViews; ++v)
      patterns.push_back(pattern_name(sweep.patterns[static_cast<std::size_t>(v)]));
    s["patterns"] = patterns;
    std::ofstream out(a.summary, std::ios::binary);
    if (!out) throw IoError("cannot write " + a.summary);
    out << s.dump(2) << "\n";
  }
  write_run_json(fs::path(a.out).parent_path() / "run.json",
                 {{"subcommand", "sweep-alpha"},
                  {"model", a.model},
                  {"data", a.data},
                  {"grid_lo", a.grid_lo},
                  {"grid_hi", a.grid_hi},
                  {"grid_n", a.grid_n},
                  {"out", a.out},
                  {"summary", a.summary}});
  std::cout << "alpha_hat = " << sweep.alpha_hat
            << (sweep.has_estimate ? "" : " (fallback: no unimodal curves)")
            << "\n";
  return kExitOk;
}

// --------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string pred;
  std::string manifest;
  std::string out = "report.json";
  std::string confusion;
};

int run_evaluate(const EvaluateArgs& a) {
  const fs::path manifest_path(a.manifest);
  const DatasetManifest manifest = load_manifest(manifest_path.parent_path());
  const std::vector<PoseLabel> truth = manifest_labels(manifest);

  std::ifstream in(a.pred);
  if (!in) throw IoError("cannot open " + a.pred);
  std::string line;
  if (!std::getline(in, line) || line.rfind("path,", 0) != 0)
    throw IoError("evaluate: bad posteriors header");
  std::vector<PoseLabel> predictions;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    PoseDistribution p{};
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');  // path
    for (int v = 0; v < kNumViews; ++v) {
      if (!std::getline(ss, field, ','))
        throw IoError("evaluate: short posterior row");
      p[static_cast<std::size_t>(v)] = std::stod(field);
    }
    predictions.push_back(predict_pose(p));
  }

  const EvalReport report = evaluate(predictions, truth);
  json j;
  j["accuracy"] = report.accuracy;
  j["n_images"] = report.n_images;
  j["confusion_mass_90deg"] = report.confusion_mass_at(4);
  j["confusion_mass_180deg"] = report.confusion_mass_at(8);
  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw IoError("cannot write " + a.out);
  out << j.dump(2) << "\n";
  if (!a.confusion.empty()) save_confusion_csv(report, a.confusion);
  write_run_json(fs::path(a.out).parent_path() / "run.json",
                 {{"subcommand", "evaluate"},
                  {"pred", a.pred},
                  {"manifest", a.manifest},
                  {"out", a.out},
                  {"confusion", a.confusion}});
  std::cout << "accuracy " << report.accuracy << " over " << report.n_images
            << " images\n";
  return kExitOk;
}

// ------------------------------------------------------------------ repro

struct ReproArgs {
  uint64_t seed = 42;
  std::string out = "repro";
  int models = 200;
  int test_n = 500;
  double clutter = 0.6;
  double jitter = 0.2;
  unsigned threads = 0;
  bool no_check = false;
};

int run_repro_cmd(const ReproArgs& a) {
  ReproConfig cfg;
  cfg.seed = a.seed;
  cfg.train_models = a.models;
  cfg.test_images = a.test_n;
  cfg.clutter_level = a.clutter;
  cfg.lighting_jitter = a.jitter;
  cfg.n_threads = a.threads;
  cfg.enforce_thresholds = !a.no_check;
  cfg.out_dir = a.out;

  fs::create_directories(cfg.out_dir);
  write_run_json(fs::path(a.out) / "run.json",
                 {{"subcommand", "repro"},
                  {"seed", a.seed},
                  {"out", a.out},
                  {"models", a.models},
                  {"test_n", a.test_n},
                  {"clutter", a.clutter},
                  {"jitter", a.jitter},
                  {"check", !a.no_check}});

  const ReproReport report = run_repro(cfg);
  std::cout << format_repro_summary(report);
  if (cfg.enforce_thresholds && !report.criteria.all()) {
    std::cout << "\nbenchmark thresholds not met\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patch-based viewpoint classification with prior calibration"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-data", "render a labeled chair dataset");
  cmd_gen->add_option("--models", gen.models, "number of chair models")->required();
  cmd_gen->add_option("--views", gen.views, "views per model (16 = exhaustive with uniform prior)");
  cmd_gen->add_option("--prior", gen.prior, "uniform or a 16-value prior csv");
  cmd_gen->add_option("--clutter", gen.clutter, "background clutter level in [0,1]");
  cmd_gen->add_option("--jitter", gen.jitter, "lighting jitter in [0,1]");
  cmd_gen->add_option("--size", gen.size, "image size in pixels");
  cmd_gen->add_option("--seed", gen.seed, "master seed");
  cmd_gen->add_option("--out", gen.out, "output directory")->required();

  FeaturizeArgs feat;
  auto* cmd_feat = app.add_subcommand("featurize", "compute HoG features for a dataset");
  cmd_feat->add_option("--data", feat.data, "dataset directory")->required();
  cmd_feat->add_option("--out", feat.out, "output features.bin")->required();
  cmd_feat->add_option("--threads", feat.threads, "worker cap (0 = cores)");

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "train the patch bank or a global forest");
  cmd_train->add_option("--features", train.features, "features.bin")->required();
  cmd_train->add_option("--data", train.data, "dataset directory (labels)")->required();
  cmd_train->add_option("--out", train.out, "output model .pcf")->required();
  cmd_train->add_option("--mode", train.mode, "patch | global");
  cmd_train->add_option("--trees", train.trees, "trees per forest");
  cmd_train->add_option("--depth", train.depth, "max tree depth");
  cmd_train->add_option("--mtry", train.mtry, "candidate features per split");
  cmd_train->add_option("--min-leaf", train.min_leaf, "min samples per leaf");
  cmd_train->add_flag("--no-bootstrap", train.no_bootstrap, "disable bootstrap resampling");
  cmd_train->add_option("--laplace", train.laplace, "Laplace smoothing constant");
  cmd_train->add_option("--seed", train.seed, "master seed");
  cmd_train->add_option("--threads", train.threads, "worker cap (0 = cores)");

  PredictArgs predict;
  auto* cmd_predict = app.add_subcommand("predict", "print per-image pose label and probabilities");
  cmd_predict->add_option("--model", predict.model, "model .pcf")->required();
  cmd_predict->add_option("--features", predict.features, "features.bin")->required();
  cmd_predict->add_option("--threads", predict.threads, "worker cap (0 = cores)");

  CalibrateArgs cal;
  auto* cmd_cal = app.add_subcommand("calibrate", "iterative prior calibration of a test batch");
  cmd_cal->add_option("--model", cal.model, "patch bank .pcf")->required();
  cmd_cal->add_option("--data", cal.data, "dataset directory")->required();
  cmd_cal->add_option("--alpha", cal.alpha, "auto or a positive smoothing factor");
  cmd_cal->add_option("--true-prior", cal.true_prior, "one-shot calibration with this prior csv");
  cmd_cal->add_option("--out", cal.out, "calibrated posteriors csv");
  cmd_cal->add_option("--trace", cal.trace, "per-iteration prior trace csv");
  cmd_cal->add_option("--grid-lo", cal.grid_lo, "auto-alpha grid low end");
  cmd_cal->add_option("--grid-hi", cal.grid_hi, "auto-alpha grid high end");
  cmd_cal->add_option("--grid-n", cal.grid_n, "auto-alpha grid size");
  cmd_cal->add_option("--threads", cal.threads, "worker cap (0 = cores)");

  SweepArgs sweep;
  auto* cmd_sweep = app.add_subcommand("sweep-alpha", "stable priors over an alpha grid");
  cmd_sweep->add_option("--model", sweep.model, "patch bank .pcf")->required();
  cmd_sweep->add_option("--data", sweep.data, "dataset directory")->required();
  cmd_sweep->add_option("--grid-lo", sweep.grid_lo, "grid low end");
  cmd_sweep->add_option("--grid-hi", sweep.grid_hi, "grid high end");
  cmd_sweep->add_option("--grid-n", sweep.grid_n, "grid size");
  cmd_sweep->add_option("--out", sweep.out, "per-alpha csv");
  cmd_sweep->add_option("--summary", sweep.summary, "summary json (alpha_hat, patterns)");
  cmd_sweep->add_option("--threads", sweep.threads, "worker cap (0 = cores)");

  EvaluateArgs eval_args;
  auto* cmd_eval = app.add_subcommand("evaluate", "score posteriors against a manifest");
  cmd_eval->add_option("--pred", eval_args.pred, "posteriors csv")->required();
  cmd_eval->add_option("--manifest", eval_args.manifest, "manifest.csv path")->required();
  cmd_eval->add_option("--out", eval_args.out, "report json");
  cmd_eval->add_option("--confusion", eval_args.confusion, "confusion matrix csv");

  ReproArgs repro;
  auto* cmd_repro = app.add_subcommand("repro", "full fixed-seed benchmark with threshold checks");
  cmd_repro->add_option("--seed", repro.seed, "benchmark seed");
  cmd_repro->add_option("--out", repro.out, "output directory");
  cmd_repro->add_option("--models", repro.models, "training models");
  cmd_repro->add_option("--test-n", repro.test_n, "images per test set");
  cmd_repro->add_option("--clutter", repro.clutter, "clutter level of the cluttered set");
  cmd_repro->add_option("--jitter", repro.jitter, "lighting jitter");
  cmd_repro->add_option("--threads", repro.threads, "worker cap (0 = cores)");
  cmd_repro->add_flag("--no-check", repro.no_check, "skip threshold enforcement");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cmd_gen->parsed()) return run_gen_data(gen);
    if (cmd_feat->parsed()) return run_featurize(feat);
    if (cmd_train->parsed()) return run_train(train);
    if (cmd_predict->parsed()) return run_predict(predict);
    if (cmd_cal->parsed()) return run_calibrate(cal);
    if (cmd_sweep->parsed()) return run_sweep(sweep);
    if (cmd_eval->parsed()) return run_evaluate(eval_args);
    if (cmd_repro->parsed()) return run_repro_cmd(repro);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
