#pragma once

// k-fold training of SIGN ensembles, evaluation and the patch-size sweep.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sign/keyvalue.hpp"
#include "sign/model.hpp"
#include "sign/pipeline/dataset.hpp"
#include "sign/pipeline/metrics.hpp"

namespace sign::pipeline {

struct TrainOptions {
  std::size_t epochs = 60;
  double lr0 = 1e-3;
  std::size_t folds = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  // Permute training targets among training records (test targets untouched).
  // Used to build the control ensemble.
  bool shuffle_labels = false;
  // Fold-level parallelism; 0 uses thread_budget(). Not serialized: results
  // do not depend on it.
  std::size_t threads = 0;

  bool apply(const std::string& key, const std::string& value);
  [[nodiscard]] KeyValues to_key_values() const;
};

// Records decoded and converted to model inputs once.
struct Dataset {
  Manifest manifest;
  std::vector<model::PreparedInput> inputs;
  std::vector<double> log_targets;
  // FNV-1a over image bytes, context bytes and target; used for the isolation audit.
  std::vector<std::uint64_t> hashes;
};

[[nodiscard]] Dataset load_dataset(const Manifest& manifest, const model::SignConfig& cfg);

struct EpochLog {
  std::size_t fold = 0;
  std::size_t epoch = 0;  // 1-based
  double learning_rate = 0.0;
  double train_loss = 0.0;
  std::optional<double> validation_mse;
};

struct FoldReport {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
  std::vector<double> epoch_loss;
  std::vector<double> validation_mse;  // empty without a validation fold
  std::optional<EvalMetrics> test;
};

struct IsolationAudit {
  std::size_t test_records = 0;
  std::size_t batches_checked = 0;
  std::size_t violations = 0;
};

struct TrainReport {
  model::SignConfig config;
  TrainOptions options;
  std::vector<FoldReport> folds;
  std::optional<EvalMetrics> test;  // ensemble on the test split
  IsolationAudit audit;
};

struct TrainedEnsemble {
  std::vector<model::SignModel> members;
  TrainReport report;
};

// Trains one model per fold (in parallel, up to options.threads) and
// evaluates the ensemble on the test split. Throws NonFiniteLoss naming
// fold, epoch and batch when a loss is NaN or infinite.
[[nodiscard]] TrainedEnsemble train(const Dataset& data, const Split& split, const model::SignConfig& cfg,
                                    const TrainOptions& options,
                                    const std::function<void(const EpochLog&)>& on_epoch = {});

// Ensemble log-gaze predictions for the listed records.
[[nodiscard]] std::vector<double> predict(const Dataset& data, std::span<const std::size_t> indices,
                                          std::span<const model::SignModel> ensemble);

// Ensemble mean of each record's inferred gaze pattern.
[[nodiscard]] std::vector<std::vector<double>> predict_patterns(const Dataset& data,
                                                                std::span<const std::size_t> indices,
                                                                std::span<const model::SignModel> ensemble);

// Throws EmptyBatch for an empty index list.
[[nodiscard]] EvalMetrics evaluate(const Dataset& data, std::span<const std::size_t> indices,
                                   std::span<const model::SignModel> ensemble, double baseline_mean,
                                   bool allow_constant_targets = false);

[[nodiscard]] double mean_target(const Dataset& data, std::span<const std::size_t> indices);

// Writes member_XX.ckpt / member_XX.cfg and report.json.
void save_ensemble(const std::filesystem::path& dir, const TrainedEnsemble& ensemble);
// Loads every member_XX stem in dir, in index order. Throws EmptyEnsemble when none exist.
[[nodiscard]] std::vector<model::SignModel> load_ensemble(const std::filesystem::path& dir);

[[nodiscard]] std::string report_json(const TrainReport& report);

struct SweepRow {
  std::size_t patch_size = 0;
  EvalMetrics test;
};

// Trains and evaluates one ensemble per patch size with the same seed and split.
[[nodiscard]] std::vector<SweepRow> patch_sweep(const Manifest& manifest, const model::SignConfig& cfg,
                                                const TrainOptions& options, const std::vector<std::size_t>& sizes);

// Text table with one row per size, followed by the published reference
// losses marked as context that this harness does not reproduce.
[[nodiscard]] std::string format_sweep(const std::vector<SweepRow>& rows);

}  // namespace sign::pipeline
