// sign: command-line front end for the scan-path model, the synthetic data
// generator and the SIGN training harness.
//
// Exit status: 0 on success, 1 for data or runtime errors, 2 for usage errors.

#include <malloc.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "sign/error.hpp"
#include "sign/gaze.hpp"
#include "sign/gradient_suite.hpp"
#include "sign/imaging.hpp"
#include "sign/keyvalue.hpp"
#include "sign/model.hpp"
#include "sign/pipeline/dataset.hpp"
#include "sign/pipeline/metrics.hpp"
#include "sign/pipeline/synthetic.hpp"
#include "sign/pipeline/training.hpp"

namespace {

using namespace sign;
namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by several subcommands. Unset optionals leave the config file
// (or the built-in default) in charge.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> patch_size;
  std::optional<double> lambda;
  std::optional<std::size_t> epochs;
  std::optional<double> lr0;
  std::optional<std::size_t> folds;
  std::string out_dir;
};

struct Settings {
  model::SignConfig model;
  pipeline::TrainOptions train;
  pipeline::SyntheticSpec synthetic;
};

Settings resolve(const Common& c) {
  Settings s;
  if (!c.config_path.empty()) {
    KeyValues kv;
    try {
      kv = load_key_values(c.config_path);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Io) throw;
      throw UsageError(e.what());
    }
    for (const auto& [k, v] : kv) {
      try {
        const bool m = s.model.apply(k, v);
        const bool t = s.train.apply(k, v);
        const bool g = s.synthetic.apply(k, v);
        if (!m && !t && !g) throw UsageError(c.config_path + ": unknown setting '" + k + "'");
      } catch (const Error& e) {
        throw UsageError(c.config_path + ": " + e.what());
      }
    }
  }
  if (c.seed) s.train.seed = s.synthetic.seed = *c.seed;
  if (c.patch_size) s.model.patch_size = s.synthetic.patch_size = *c.patch_size;
  if (c.lambda) s.model.lambda = *c.lambda;
  if (c.epochs) s.train.epochs = *c.epochs;
  if (c.lr0) s.train.lr0 = *c.lr0;
  if (c.folds) s.train.folds = *c.folds;
  try {
    s.model.validate();
    s.synthetic.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return s;
}

void add_common(CLI::App* app, Common& c, bool training_flags) {
  app->add_option("--config", c.config_path, "key = value settings file");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--patch-size", c.patch_size, "patch size in pixels (8, 16 or 32)");
  if (training_flags) {
    app->add_option("--lambda", c.lambda, "L1 weight on the region weights");
    app->add_option("--epochs", c.epochs, "training epochs");
    app->add_option("--lr0", c.lr0, "initial learning rate");
    app->add_option("--folds", c.folds, "cross-validation folds (1 trains a single model)");
  }
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      out.push_back(parse_double("list", item));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

std::string join(std::span<const double> v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
  return os.str();
}

std::optional<imaging::Image> load_optional(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return imaging::load_image(path);
}

void print_metrics(const char* label, const pipeline::EvalMetrics& m) {
  std::cout << label << " records " << m.count << "  mse " << m.mse << "  pearson ";
  if (m.pearson) {
    std::cout << *m.pearson;
  } else {
    std::cout << "n/a";
  }
  std::cout << "  baseline_mse " << m.baseline_mse << '\n';
}

// --- subcommands ---------------------------------------------------------------

struct SimulateArgs {
  std::string image, context;
  std::size_t paths = 5;
  std::size_t samples = 10000;
};

int run_simulate(const Common& c, const SimulateArgs& a) {
  const Settings s = resolve(c);
  const imaging::Image image = imaging::load_image(a.image);
  const auto context = load_optional(a.context);
  const auto intensity = pipeline::patch_intensities(image, s.synthetic.patch_size);
  const std::size_t rows = image.height() / s.synthetic.patch_size;
  const gaze::GazeField field(rows, image.width() / s.synthetic.patch_size, 1, intensity);
  const gaze::TransitionKernel kernel = pipeline::saliency_kernel(s.synthetic, intensity);
  const pipeline::SceneTruth truth = pipeline::scene_truth(s.synthetic, image, context, s.synthetic.seed);
  gaze::DurationModel d;
  d.mu = [&](std::span<const double> f) { return s.synthetic.mu_intercept + s.synthetic.mu_slope * f[0]; };
  d.noise_sigma = s.synthetic.noise_sigma;

  std::mt19937_64 rng(s.synthetic.seed);
  for (std::size_t i = 0; i < a.paths; ++i) {
    std::mt19937_64 path_rng(rng());
    const gaze::ScanPath p = gaze::sample_scanpath(kernel, s.synthetic.max_length, path_rng);
    std::cout << "path " << i << ":";
    for (auto f : p.fixations) std::cout << ' ' << f;
    std::cout << "  prob " << p.prob << '\n';
  }
  const auto mc = gaze::monte_carlo_log_gaze(field, kernel, d, s.synthetic.max_length, a.samples,
                                             s.synthetic.seed, truth.gist_log_duration);
  std::cout << std::setprecision(10) << "monte_carlo_log_gaze " << mc.mean << " +/- " << mc.std_error << '\n'
            << "expected_log_gaze " << truth.expected_log_gaze << (truth.exact ? " (exact)" : " (sampled weights)")
            << '\n'
            << "gaze_seconds " << gaze::gaze_seconds(truth.expected_log_gaze) << '\n';
  return 0;
}

struct EnumerateArgs {
  std::size_t regions = 3;
  std::size_t length = 2;
  std::string mu;
  double gist = 0.0;
  std::string image;
};

int run_enumerate(const Common& c, const EnumerateArgs& a) {
  const Settings s = resolve(c);
  std::optional<gaze::GazeField> field;
  std::optional<gaze::TransitionKernel> kernel;
  gaze::DurationModel d;
  double gist = a.gist;
  std::size_t length = a.length;
  if (!a.image.empty()) {
    const imaging::Image image = imaging::load_image(a.image);
    const auto intensity = pipeline::patch_intensities(image, s.synthetic.patch_size);
    field.emplace(image.height() / s.synthetic.patch_size, image.width() / s.synthetic.patch_size, 1, intensity);
    kernel.emplace(pipeline::saliency_kernel(s.synthetic, intensity));
    d.mu = [&](std::span<const double> f) { return s.synthetic.mu_intercept + s.synthetic.mu_slope * f[0]; };
    gist = pipeline::scene_truth(s.synthetic, image, std::nullopt, s.synthetic.seed).gist_log_duration;
    length = s.synthetic.max_length;
  } else {
    if (a.regions == 0 || a.length == 0) throw UsageError("--regions and --length must be positive");
    std::vector<double> mu = a.mu.empty() ? std::vector<double>{} : parse_list(a.mu);
    if (mu.empty()) {
      for (std::size_t j = 0; j < a.regions; ++j) mu.push_back(0.1 * static_cast<double>(j + 1));
    }
    if (mu.size() != a.regions) throw UsageError("--mu needs one value per region");
    field.emplace(1, a.regions, 1, mu);
    kernel.emplace(gaze::TransitionKernel::uniform(a.regions));
    d.mu = [](std::span<const double> f) { return f[0]; };
  }

  const auto paths = gaze::enumerate_scanpaths(*field, *kernel, length);
  double total = 0.0;
  for (const auto& p : paths) total += p.prob;
  const double pathsum = gaze::expected_log_gaze_pathsum(*field, *kernel, d, length, gist);
  const gaze::WeightMap w = gaze::enumerate_weights(*field, *kernel, length);
  const double weighted = gaze::expected_log_gaze_weighted(*field, d, w, gist);
  std::cout << std::setprecision(17) << "paths " << paths.size() << '\n'
            << "sum_path_probability " << total << '\n'
            << "path_sum_log_gaze " << pathsum << '\n'
            << "weighted_log_gaze " << weighted << '\n'
            << "difference " << std::abs(pathsum - weighted) << '\n'
            << "weights " << join(w.weights, 17) << '\n';
  return 0;
}

int run_gen_data(const Common& c) {
  if (c.out_dir.empty()) throw UsageError("gen-data needs --out-dir");
  const Settings s = resolve(c);
  const auto ds = pipeline::generate_synthetic(s.synthetic, c.out_dir);
  std::size_t exact = 0;
  for (const auto& t : ds.truth) exact += t.truth.exact;
  std::cout << "wrote " << ds.manifest.records.size() << " scenes to " << c.out_dir << " (" << exact
            << " with enumerated weights)\n";
  return 0;
}

void log_epoch(const pipeline::EpochLog& e) {
  std::cerr << "fold " << e.fold << " epoch " << e.epoch << " lr " << e.learning_rate << " loss " << e.train_loss;
  if (e.validation_mse) std::cerr << " val_mse " << *e.validation_mse;
  std::cerr << '\n';
}

struct TrainArgs {
  std::string manifest;
  bool shuffle_labels = false;
  bool quiet = false;
};

int run_train(const Common& c, const TrainArgs& a) {
  if (c.out_dir.empty()) throw UsageError("train needs --out-dir");
  Settings s = resolve(c);
  s.train.shuffle_labels = s.train.shuffle_labels || a.shuffle_labels;
  const pipeline::Manifest manifest = pipeline::load_manifest(a.manifest);
  const pipeline::Split split = pipeline::kfold_split(manifest, s.train.folds, s.train.seed);
  const pipeline::Dataset data = pipeline::load_dataset(manifest, s.model);
  const auto e = pipeline::train(data, split, s.model, s.train, a.quiet ? nullptr : log_epoch);
  pipeline::save_ensemble(c.out_dir, e);
  std::cout << "trained " << e.members.size() << " models on " << split.train.size() << " records; saved to "
            << c.out_dir << '\n';
  if (e.report.test) print_metrics("test", *e.report.test);
  return 0;
}

struct EvalArgs {
  std::string manifest, ensemble, truth, split = "test";
  bool allow_constant = false;
};

int run_eval(const Common& c, const EvalArgs& a) {
  const Settings s = resolve(c);
  const auto ensemble = pipeline::load_ensemble(a.ensemble);
  const pipeline::Manifest manifest = pipeline::load_manifest(a.manifest);
  const pipeline::Split split = pipeline::kfold_split(manifest, 1, s.train.seed);
  std::vector<std::size_t> indices;
  if (a.split == "test") {
    indices = split.test;
  } else if (a.split == "train") {
    indices = split.train;
  } else {
    indices.resize(manifest.records.size());
    std::iota(indices.begin(), indices.end(), 0);
  }
  const pipeline::Dataset data = pipeline::load_dataset(manifest, ensemble.front().config());
  const auto m = pipeline::evaluate(data, indices, ensemble, pipeline::mean_target(data, split.train),
                                    a.allow_constant);
  print_metrics(a.split.c_str(), m);
  if (!a.truth.empty()) {
    const auto truth = pipeline::load_truth(a.truth);
    std::map<std::string, const pipeline::SceneTruth*> by_id;
    for (const auto& t : truth) by_id[t.id] = &t.truth;
    const auto patterns = pipeline::predict_patterns(data, indices, ensemble);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const auto it = by_id.find(manifest.records[indices[i]].id);
      if (it == by_id.end()) continue;
      sum += pipeline::recovery_score(patterns[i], it->second->pattern);
      ++n;
    }
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "no truth record matches the evaluated split");
    std::cout << "recovery_score mean " << sum / static_cast<double>(n) << " over " << n << " records\n";
  }
  return 0;
}

struct PredictArgs {
  std::string ensemble, image, context;
};

int run_predict(const PredictArgs& a) {
  const auto ensemble = pipeline::load_ensemble(a.ensemble);
  const model::SignConfig& cfg = ensemble.front().config();
  const imaging::Image image = imaging::load_image(a.image);
  const auto input = model::prepare_input(image, load_optional(a.context), cfg);
  const double g = model::predict_log_gaze(input, cfg, ensemble);
  std::cout << std::setprecision(10) << "log_gaze " << g << "\ngaze_seconds " << gaze::gaze_seconds(g) << '\n';
  return 0;
}

struct HeatmapArgs {
  std::string ensemble, image, context, out;
  double blur = 4.0;
};

int run_heatmap(const HeatmapArgs& a) {
  const auto ensemble = pipeline::load_ensemble(a.ensemble);
  const model::SignConfig& cfg = ensemble.front().config();
  const imaging::Image image = imaging::load_image(a.image);
  const auto pattern = model::ensemble_pattern(model::prepare_input(image, load_optional(a.context), cfg), cfg,
                                               ensemble);
  const imaging::Image base =
      imaging::resize(image, cfg.image_height, cfg.image_width);
  const imaging::Image overlay = imaging::render_heatmap(pattern, cfg.grid_rows(), cfg.grid_cols(), cfg.image_height,
                                                         cfg.image_width, a.blur, base);
  imaging::save_image(a.out, overlay);
  std::cout << "wrote " << a.out << "\npattern " << join(pattern) << '\n';
  return 0;
}

int run_gradcheck(const std::string& seeds_text) {
  std::vector<std::uint64_t> seeds;
  for (double v : parse_list(seeds_text)) {
    if (!(v >= 0.0) || v != std::floor(v)) throw UsageError("--seeds takes non-negative integers");
    seeds.push_back(static_cast<std::uint64_t>(v));
  }
  const auto r = model::run_gradient_suite(seeds);
  for (const auto& c : r.cases) {
    std::cout << std::left << std::setw(20) << c.name << " seed " << c.seed << "  max_rel_err " << std::scientific
              << std::setprecision(3) << c.max_relative_error << std::defaultfloat << "  probes "
              << c.elements_checked << "  draws " << c.attempts << (c.max_relative_error < r.tolerance && c.kinks == 0
                                                                        ? "  ok"
                                                                        : "  FAIL  " + c.worst)
              << '\n';
  }
  std::cout << (r.passed() ? "gradient check passed" : "gradient check FAILED") << '\n';
  return r.passed() ? 0 : 1;
}

struct SweepArgs {
  std::string manifest;
  std::string sizes = "8,16,32";
};

int run_sweep(const Common& c, const SweepArgs& a) {
  const Settings s = resolve(c);
  std::vector<std::size_t> sizes;
  for (double v : parse_list(a.sizes)) sizes.push_back(static_cast<std::size_t>(v));
  const auto manifest = pipeline::load_manifest(a.manifest);
  std::cout << pipeline::format_sweep(pipeline::patch_sweep(manifest, s.model, s.train, sizes));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Keep large tensor buffers on the heap between training steps.
  mallopt(M_MMAP_THRESHOLD, 1 << 28);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"SIGN gaze-time model: scan-path simulation, synthetic data, training and evaluation"};
  app.require_subcommand(1);
  Common common;

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "sample scan-paths over an image's regions");
  add_common(simulate, common, false);
  simulate->add_option("--image", sim.image, "PGM/PPM image")->required();
  simulate->add_option("--context", sim.context, "context image");
  simulate->add_option("--paths", sim.paths, "scan-paths to print");
  simulate->add_option("--samples", sim.samples, "Monte-Carlo samples for the mean");

  EnumerateArgs en;
  auto* enumerate = app.add_subcommand("enumerate", "enumerate all scan-paths and compare both gaze formulas");
  add_common(enumerate, common, false);
  enumerate->add_option("--regions", en.regions, "number of regions (uniform kernel)");
  enumerate->add_option("--length", en.length, "maximum path length");
  enumerate->add_option("--mu", en.mu, "comma-separated local log-durations");
  enumerate->add_option("--gist", en.gist, "gist log-duration");
  enumerate->add_option("--image", en.image, "use the saliency kernel of this image instead");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen, common, false);
  gen->add_option("--out-dir", common.out_dir, "output directory");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "k-fold training of a SIGN ensemble");
  add_common(train, common, true);
  train->add_option("--manifest", tr.manifest, "JSONL manifest")->required();
  train->add_option("--out-dir", common.out_dir, "directory for checkpoints and report.json");
  train->add_flag("--shuffle-labels", tr.shuffle_labels, "train on permuted targets (control)");
  train->add_flag("--quiet", tr.quiet, "no per-epoch log");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "evaluate an ensemble on a manifest split");
  add_common(eval, common, false);
  eval->add_option("--manifest", ev.manifest, "JSONL manifest")->required();
  eval->add_option("--ensemble", ev.ensemble, "ensemble directory")->required();
  eval->add_option("--split", ev.split, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));
  eval->add_option("--truth", ev.truth, "truth.jsonl for pattern recovery scores");
  eval->add_flag("--allow-constant-targets", ev.allow_constant, "report MSE only when targets are constant");

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "predict the gaze time of one image");
  predict->add_option("--ensemble", pr.ensemble, "ensemble directory")->required();
  predict->add_option("--image", pr.image, "PGM/PPM image")->required();
  predict->add_option("--context", pr.context, "context image");

  HeatmapArgs hm;
  auto* heatmap = app.add_subcommand("heatmap", "render the inferred gaze pattern over an image");
  heatmap->add_option("--ensemble", hm.ensemble, "ensemble directory")->required();
  heatmap->add_option("--image", hm.image, "PGM/PPM image")->required();
  heatmap->add_option("--context", hm.context, "context image");
  heatmap->add_option("--out", hm.out, "output PPM")->required();
  heatmap->add_option("--blur", hm.blur, "Gaussian blur sigma in pixels");

  std::string seeds = "1,2,3";
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every layer and the full loss");
  gradcheck->add_option("--seeds", seeds, "comma-separated seeds");

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "train and evaluate one ensemble per patch size");
  add_common(sweep, common, true);
  sweep->add_option("--manifest", sw.manifest, "JSONL manifest")->required();
  sweep->add_option("--sizes", sw.sizes, "comma-separated patch sizes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*simulate) return run_simulate(common, sim);
    if (*enumerate) return run_enumerate(common, en);
    if (*gen) return run_gen_data(common);
    if (*train) return run_train(common, tr);
    if (*eval) return run_eval(common, ev);
    if (*predict) return run_predict(pr);
    if (*heatmap) return run_heatmap(hm);
    if (*gradcheck) return run_gradcheck(seeds);
    if (*sweep) return run_sweep(common, sw);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
