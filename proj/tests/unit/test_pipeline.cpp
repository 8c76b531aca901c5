#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include "sign/error.hpp"
#include "sign/pipeline/dataset.hpp"
#include "sign/pipeline/metrics.hpp"
#include "sign/pipeline/synthetic.hpp"
#include "sign/pipeline/training.hpp"
#include "../support/temp_dir.hpp"

namespace {

using namespace sign::pipeline;
using sign::ErrorCode;
using sign::imaging::Image;
using sign::testing::TempDir;

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const sign::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

template <typename F>
std::string message_of(F&& f) {
  try {
    f();
  } catch (const sign::Error& e) {
    return e.what();
  }
  return {};
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Every regular file under dir, keyed by relative path.
std::map<std::string, std::string> tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return out;
}

SyntheticSpec tiny_spec() {
  SyntheticSpec s;
  s.image_size = 32;
  s.patch_size = 16;
  s.max_length = 2;
  s.train_count = 6;
  s.test_count = 2;
  s.blob_sigma_min = 2.0;
  s.blob_sigma_max = 5.0;
  s.seed = 5;
  return s;
}

// 4x4 grid of 8px regions: small enough to enumerate, big enough to learn from.
SyntheticSpec training_spec() {
  SyntheticSpec s;
  s.image_size = 32;
  s.patch_size = 8;
  s.max_length = 3;
  s.min_blobs = 1;
  s.max_blobs = 2;
  s.blob_sigma_min = 2.0;
  s.blob_sigma_max = 5.0;
  s.train_count = 64;
  s.test_count = 16;
  s.seed = 11;
  return s;
}

sign::model::SignConfig small_config() {
  sign::model::SignConfig c;
  c.image_height = 32;
  c.image_width = 32;
  c.patch_size = 8;
  c.feature_dim = 8;
  c.gist_size = 16;
  c.gist_sigma = 1.0;
  c.transformer_heads = 2;
  c.transformer_mlp_hidden = 12;
  c.mu_hidden = 8;
  c.weight_hidden = 8;
  return c;
}

Image flat_image(std::size_t size, std::uint8_t value) { return Image(size, size, 1, value); }

// --- synthetic generator ----------------------------------------------------

TEST(Synthetic, ZeroBlobsOnFlatBackgroundGiveUniformPattern) {
  SyntheticSpec s = tiny_spec();
  s.min_blobs = s.max_blobs = 0;
  s.background_noise = 0.0;
  const Scene scene = make_scene(s, 0);
  ASSERT_TRUE(scene.truth.exact);
  ASSERT_EQ(scene.truth.pattern.size(), 4u);
  for (double p : scene.truth.pattern) EXPECT_NEAR(p, 0.25, 1e-12);
  for (double w : scene.truth.weights) EXPECT_NEAR(w, 0.5, 1e-12);
}

TEST(Synthetic, BrightPatchHasTheLargestWeight) {
  const SyntheticSpec s = tiny_spec();
  for (std::size_t target = 0; target < 4; ++target) {
    Image img = flat_image(32, 30);
    const std::size_t r0 = (target / 2) * 16, c0 = (target % 2) * 16;
    for (std::size_t y = r0; y < r0 + 16; ++y) {
      for (std::size_t x = c0; x < c0 + 16; ++x) img.at(y, x) = 230;
    }
    const SceneTruth t = scene_truth(s, img, std::nullopt, 1);
    const auto best = std::max_element(t.weights.begin(), t.weights.end()) - t.weights.begin();
    EXPECT_EQ(static_cast<std::size_t>(best), target);
  }
}

TEST(Synthetic, TruthSatisfiesTheWeightedIdentity) {
  const SyntheticSpec s = tiny_spec();
  for (std::size_t i = 0; i < 4; ++i) {
    const Scene scene = make_scene(s, i);
    const SceneTruth& t = scene.truth;
    EXPECT_NEAR(std::accumulate(t.weights.begin(), t.weights.end(), 0.0), 2.0, 1e-12);
    EXPECT_NEAR(std::accumulate(t.pattern.begin(), t.pattern.end(), 0.0), 1.0, 1e-12);
    double g = t.gist_log_duration;
    for (std::size_t j = 0; j < t.weights.size(); ++j) g += t.weights[j] * t.local_durations[j];
    EXPECT_NEAR(g, t.expected_log_gaze, 1e-12);
    EXPECT_LT(std::abs(std::log(scene.gaze_seconds) - t.expected_log_gaze), 6 * s.noise_sigma);
  }
}

TEST(Synthetic, LocalDurationsAreLinearInPatchIntensity) {
  const SyntheticSpec s = tiny_spec();
  const Scene scene = make_scene(s, 1);
  const auto intensity = patch_intensities(scene.image, s.patch_size);
  for (std::size_t j = 0; j < intensity.size(); ++j) {
    EXPECT_NEAR(scene.truth.local_durations[j], s.mu_intercept + s.mu_slope * intensity[j], 1e-12);
  }
}

TEST(Synthetic, MonteCarloFallbackAgreesWithEnumeration) {
  SyntheticSpec s = tiny_spec();
  const Scene scene = make_scene(s, 2);
  s.enumeration_limit = 0;
  const SceneTruth mc = scene_truth(s, scene.image, scene.context, 9);
  EXPECT_FALSE(mc.exact);
  EXPECT_GT(mc.weight_std_error, 0.0);
  for (std::size_t j = 0; j < mc.weights.size(); ++j) {
    EXPECT_LT(std::abs(mc.weights[j] - scene.truth.weights[j]), 5 * mc.weight_std_error + 1e-12);
  }
}

TEST(Synthetic, DefaultGridIsBeyondTheEnumerationGuard) {
  const SyntheticSpec s;
  EXPECT_EQ(s.regions(), 64u);
  const Scene scene = make_scene(s, 0);
  EXPECT_FALSE(scene.truth.exact);
  EXPECT_LT(scene.truth.weight_std_error, 0.01);
  EXPECT_NEAR(std::accumulate(scene.truth.weights.begin(), scene.truth.weights.end(), 0.0), 4.0, 1e-9);
}

TEST(Synthetic, SameSeedGivesByteIdenticalDatasets) {
  const TempDir a("synth_a"), b("synth_b"), c("synth_c");
  const SyntheticSpec s = tiny_spec();
  (void)generate_synthetic(s, a.path());
  (void)generate_synthetic(s, b.path());
  const auto ta = tree(a.path());
  EXPECT_EQ(ta.size(), 3u + 2 * s.count());
  EXPECT_EQ(ta, tree(b.path()));

  SyntheticSpec other = s;
  other.seed = s.seed + 1;
  (void)generate_synthetic(other, c.path());
  EXPECT_NE(ta.at("manifest.jsonl"), read_file(c / "manifest.jsonl"));
}

TEST(Synthetic, GeneratedManifestLoadsBack) {
  const TempDir dir("synth_manifest");
  const SyntheticSpec s = tiny_spec();
  const SyntheticDataset ds = generate_synthetic(s, dir.path());
  const Manifest m = load_manifest(dir / "manifest.jsonl");
  ASSERT_EQ(m.records.size(), s.count());
  EXPECT_EQ(m.records, ds.manifest.records);
  std::size_t tests = 0;
  for (const Record& r : m.records) {
    EXPECT_GT(r.gaze_seconds, 0.0);
    EXPECT_TRUE(r.context_path.has_value());
    tests += r.split_tag == "test";
  }
  EXPECT_EQ(tests, s.test_count);
  const auto truth = load_truth(dir / "truth.jsonl");
  ASSERT_EQ(truth.size(), s.count());
  EXPECT_EQ(truth[3].id, m.records[3].id);
  EXPECT_EQ(truth[3].truth.weights, ds.truth[3].truth.weights);
  EXPECT_EQ(SyntheticSpec::from_key_values(sign::load_key_values(dir / "spec.cfg")).to_key_values(),
            s.to_key_values());
}

TEST(Synthetic, SpecValidation) {
  SyntheticSpec s;
  s.image_size = 100;
  EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::IndivisibleDims);
  s = SyntheticSpec{};
  s.min_blobs = 3;
  s.max_blobs = 2;
  EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::InvalidArgument);
  s = SyntheticSpec{};
  s.max_length = 0;
  EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { (void)SyntheticSpec::from_key_values({{"no_such_key", "1"}}); }),
            ErrorCode::InvalidArgument);
}

// --- manifest ----------------------------------------------------------------

TEST(Manifest, FormatParseRoundTrip) {
  Manifest m;
  m.base_dir = "/data";
  m.records.push_back({"a", "images/a.pgm", std::filesystem::path("images/a_ctx.pgm"), 1.25, "train"});
  m.records.push_back({"b", "images/b.pgm", std::nullopt, 0.1 + 0.2, ""});
  const Manifest back = parse_manifest(format_manifest(m), "/data");
  EXPECT_EQ(back.records, m.records);
  EXPECT_EQ(back.resolve("images/a.pgm"), std::filesystem::path("/data/images/a.pgm"));
}

TEST(Manifest, RejectsBadLines) {
  const std::string good = R"({"id":"a","image_path":"a.pgm","gaze_seconds":1.0,"split_tag":"train"})";
  EXPECT_NE(message_of([&] { (void)parse_manifest(good + "\n{oops\n", "."); }).find("line 2"), std::string::npos);
  EXPECT_EQ(code_of([] { (void)parse_manifest(R"({"id":"a","image_path":"a.pgm","gaze_seconds":0})", "."); }),
            ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { (void)parse_manifest(R"({"id":"a","image_path":"a.pgm","gaze_seconds":-2.0})", "."); }),
            ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { (void)parse_manifest(R"({"id":"a","gaze_seconds":1.0})", "."); }), ErrorCode::InvalidArgument);
}

TEST(Manifest, MissingImageIsAnIoErrorNamingThePath) {
  const TempDir dir("manifest_missing");
  Manifest m;
  m.records.push_back({"a", "nowhere.pgm", std::nullopt, 1.0, ""});
  save_manifest(dir / "m.jsonl", m);
  const std::string msg = message_of([&] { (void)load_manifest(dir / "m.jsonl"); });
  EXPECT_NE(msg.find("nowhere.pgm"), std::string::npos) << msg;
  EXPECT_EQ(code_of([&] { (void)load_manifest(dir / "m.jsonl"); }), ErrorCode::Io);
  EXPECT_EQ(code_of([&] { (void)load_manifest(dir / "absent.jsonl"); }), ErrorCode::Io);
}

// --- k-fold split ------------------------------------------------------------

Manifest untagged(std::size_t n) {
  Manifest m;
  for (std::size_t i = 0; i < n; ++i) m.records.push_back({std::to_string(i), "x.pgm", std::nullopt, 1.0, ""});
  return m;
}

TEST(KFold, HundredRecordsTenFolds) {
  const Split s = kfold_split(untagged(100), 10, 3);
  EXPECT_EQ(s.train.size(), 90u);
  EXPECT_EQ(s.test.size(), 10u);
  ASSERT_EQ(s.folds.size(), 10u);
  for (const auto& f : s.folds) EXPECT_EQ(f.size(), 9u);
}

TEST(KFold, FoldsPartitionTheTrainingSetAndNeverTouchTest) {
  for (std::size_t n : {97u, 100u, 131u}) {
    const Split s = kfold_split(untagged(n), 10, n);
    std::multiset<std::size_t> all;
    std::size_t lo = n, hi = 0;
    for (const auto& f : s.folds) {
      all.insert(f.begin(), f.end());
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
    }
    EXPECT_LE(hi - lo, 1u);
    EXPECT_EQ(all, std::multiset<std::size_t>(s.train.begin(), s.train.end()));
    std::set<std::size_t> seen(all.begin(), all.end());
    EXPECT_EQ(seen.size(), all.size());
    for (std::size_t t : s.test) EXPECT_EQ(seen.count(t), 0u);
    EXPECT_EQ(s.train.size() + s.test.size(), n);
    for (std::size_t f = 0; f < s.folds.size(); ++f) {
      EXPECT_EQ(s.fold_training(f).size() + s.folds[f].size(), s.train.size());
    }
  }
}

TEST(KFold, SeedDeterminesTheSplit) {
  const Manifest m = untagged(50);
  const Split a = kfold_split(m, 5, 1), b = kfold_split(m, 5, 1), c = kfold_split(m, 5, 2);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.folds, b.folds);
  EXPECT_NE(a.folds, c.folds);
}

TEST(KFold, HonoursSplitTags) {
  Manifest m = untagged(30);
  for (std::size_t i = 0; i < 30; ++i) m.records[i].split_tag = i % 3 == 0 ? "test" : "train";
  const Split s = kfold_split(m, 4, 0);
  EXPECT_EQ(s.test.size(), 10u);
  for (std::size_t t : s.test) EXPECT_EQ(t % 3, 0u);
  EXPECT_EQ(s.train.size(), 20u);
}

TEST(KFold, SingleFoldTrainsOnEverything) {
  const Split s = kfold_split(untagged(20), 1, 0);
  ASSERT_EQ(s.folds.size(), 1u);
  EXPECT_TRUE(s.folds[0].empty());
  EXPECT_EQ(s.fold_training(0).size(), s.train.size());
}

TEST(KFold, Errors) {
  EXPECT_EQ(code_of([] { (void)kfold_split(untagged(8), 10, 0); }), ErrorCode::TooFewRecords);
  EXPECT_EQ(code_of([] { (void)kfold_split(untagged(1), 1, 0); }), ErrorCode::TooFewRecords);
  EXPECT_EQ(code_of([] { (void)kfold_split(untagged(50), 0, 0); }), ErrorCode::InvalidArgument);
  Manifest m = untagged(30);
  m.records[0].split_tag = "test";
  EXPECT_EQ(code_of([&] { (void)kfold_split(m, 3, 0); }), ErrorCode::InvalidArgument);
}

// --- metrics -----------------------------------------------------------------

TEST(Metrics, PerfectPredictions) {
  const std::vector<double> t{0.1, 0.5, -0.3, 1.2};
  const EvalMetrics m = evaluate_predictions(t, t, 0.0);
  EXPECT_EQ(m.mse, 0.0);
  ASSERT_TRUE(m.pearson);
  EXPECT_NEAR(*m.pearson, 1.0, 1e-15);
  EXPECT_EQ(m.count, 4u);
}

TEST(Metrics, ConstantOffset) {
  const std::vector<double> t{0.1, 0.5, -0.3, 1.2};
  std::vector<double> p = t;
  for (double& v : p) v += 0.25;
  const EvalMetrics m = evaluate_predictions(p, t, 0.0);
  EXPECT_NEAR(m.mse, 0.0625, 1e-15);
  EXPECT_NEAR(*m.pearson, 1.0, 1e-15);
}

TEST(Metrics, AntiOrderedPair) {
  EXPECT_NEAR(pearson(std::vector<double>{0.0, 1.0}, std::vector<double>{1.0, 0.0}), -1.0, 1e-15);
}

TEST(Metrics, BaselineUsesTheGivenMean) {
  const std::vector<double> t{1.0, 3.0};
  const EvalMetrics m = evaluate_predictions(t, t, 1.0);
  EXPECT_EQ(m.baseline_mean, 1.0);
  EXPECT_EQ(m.baseline_mse, 2.0);
}

TEST(Metrics, ConstantTargets) {
  const std::vector<double> t{2.0, 2.0, 2.0}, p{1.0, 2.0, 3.0};
  EXPECT_EQ(code_of([&] { (void)evaluate_predictions(p, t, 0.0); }), ErrorCode::ConstantTargets);
  const EvalMetrics m = evaluate_predictions(p, t, 2.0, true);
  EXPECT_FALSE(m.pearson.has_value());
  EXPECT_NEAR(m.mse, 2.0 / 3.0, 1e-15);
}

TEST(Metrics, ConstantPredictionsCorrelateZero) {
  const std::vector<double> t{1.0, 2.0, 3.0}, p{0.5, 0.5, 0.5};
  EXPECT_EQ(*evaluate_predictions(p, t, 0.0).pearson, 0.0);
}

TEST(Metrics, ShapeErrors) {
  const std::vector<double> a{1.0, 2.0}, b{1.0};
  EXPECT_EQ(code_of([&] { (void)mean_squared_error(a, b); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([] { (void)mean_squared_error({}, {}); }), ErrorCode::EmptyBatch);
}

TEST(Recovery, IdenticalPatternsScoreOne) {
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  EXPECT_NEAR(recovery_score(p, p), 1.0, 1e-15);
}

TEST(Recovery, UniformPredictionIsFiniteAndBounded) {
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4}, u(4, 0.25);
  const double r = recovery_score(u, p);
  EXPECT_TRUE(std::isfinite(r));
  EXPECT_GE(r, -1.0);
  EXPECT_LE(r, 1.0);
}

TEST(Recovery, ReversedPatternScoresNegative) {
  const std::vector<double> p{0.05, 0.15, 0.5, 0.3};
  const std::vector<double> rev(p.rbegin(), p.rend());
  // direct computation: centred p = (-0.2, -0.1, 0.25, 0.05), reversed (0.05, 0.25, -0.1, -0.2)
  EXPECT_NEAR(recovery_score(rev, p), -0.07 / 0.115, 1e-12);
  EXPECT_LT(recovery_score(rev, p), 0.0);
}

TEST(Recovery, Errors) {
  const std::vector<double> p{0.1, 0.9}, u(2, 0.5), three(3, 0.3);
  EXPECT_EQ(code_of([&] { (void)recovery_score(p, u); }), ErrorCode::ConstantVector);
  EXPECT_EQ(code_of([&] { (void)recovery_score(three, p); }), ErrorCode::DimensionMismatch);
}

// --- training ----------------------------------------------------------------

class Training : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("training");
    (void)generate_synthetic(training_spec(), dir_->path());
    manifest_ = new Manifest(load_manifest(dir_->path() / "manifest.jsonl"));
    data_ = new Dataset(load_dataset(*manifest_, small_config()));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete manifest_;
    delete dir_;
  }

  static TrainOptions quick(std::size_t folds, std::size_t epochs) {
    TrainOptions o;
    o.folds = folds;
    o.epochs = epochs;
    o.lr0 = 3e-3;
    o.seed = 21;
    return o;
  }

  static inline TempDir* dir_ = nullptr;
  static inline Manifest* manifest_ = nullptr;
  static inline Dataset* data_ = nullptr;
};

TEST_F(Training, DatasetMatchesManifest) {
  ASSERT_EQ(data_->inputs.size(), manifest_->records.size());
  for (std::size_t i = 0; i < data_->inputs.size(); ++i) {
    EXPECT_DOUBLE_EQ(data_->log_targets[i], std::log(manifest_->records[i].gaze_seconds));
    EXPECT_TRUE(data_->inputs[i].has_context);
  }
  std::set<std::uint64_t> unique(data_->hashes.begin(), data_->hashes.end());
  EXPECT_EQ(unique.size(), data_->hashes.size());
}

TEST_F(Training, LossFallsOverEpochs) {
  const Split split = kfold_split(*manifest_, 2, 4);
  const TrainedEnsemble e = train(*data_, split, small_config(), quick(2, 8));
  ASSERT_EQ(e.members.size(), 2u);
  for (const FoldReport& f : e.report.folds) {
    ASSERT_EQ(f.epoch_loss.size(), 8u);
    const double first = (f.epoch_loss[0] + f.epoch_loss[1]) / 2;
    const double last = (f.epoch_loss[6] + f.epoch_loss[7]) / 2;
    EXPECT_LT(last, first);
    EXPECT_EQ(f.validation_mse.size(), 8u);
    EXPECT_TRUE(f.test.has_value());
  }
  ASSERT_TRUE(e.report.test.has_value());
  EXPECT_EQ(e.report.test->count, split.test.size());
  EXPECT_TRUE(std::isfinite(e.report.test->mse));
}

TEST_F(Training, SingleFoldModeTrainsOneModel) {
  const Split split = kfold_split(*manifest_, 1, 4);
  const TrainedEnsemble e = train(*data_, split, small_config(), quick(1, 2));
  ASSERT_EQ(e.members.size(), 1u);
  EXPECT_EQ(e.report.folds[0].validation_size, 0u);
  EXPECT_TRUE(e.report.folds[0].validation_mse.empty());
  EXPECT_EQ(e.report.folds[0].train_size, split.train.size());
}

TEST_F(Training, RerunIsBitIdenticalWhateverTheThreadCount) {
  const Split split = kfold_split(*manifest_, 3, 4);
  TrainOptions a = quick(3, 2);
  a.threads = 1;
  TrainOptions b = a;
  b.threads = 3;
  const TempDir da("det_a"), db("det_b");
  const TrainedEnsemble ea = train(*data_, split, small_config(), a);
  const TrainedEnsemble eb = train(*data_, split, small_config(), b);
  for (std::size_t f = 0; f < 3; ++f) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(ea.report.folds[f].epoch_loss.back()),
              std::bit_cast<std::uint64_t>(eb.report.folds[f].epoch_loss.back()));
  }
  save_ensemble(da.path(), ea);
  save_ensemble(db.path(), eb);
  const auto ta = tree(da.path());
  EXPECT_EQ(ta.size(), 7u);
  EXPECT_EQ(ta, tree(db.path()));
}

TEST_F(Training, NoTestRecordReachesABatch) {
  const Split split = kfold_split(*manifest_, 2, 4);
  const TrainedEnsemble e = train(*data_, split, small_config(), quick(2, 2));
  const IsolationAudit& a = e.report.audit;
  EXPECT_EQ(a.violations, 0u);
  EXPECT_EQ(a.test_records, split.test.size());
  std::size_t expected = 0;
  for (std::size_t f = 0; f < 2; ++f) expected += 2 * ((split.fold_training(f).size() + 15) / 16);
  EXPECT_EQ(a.batches_checked, expected);
}

TEST_F(Training, DivergenceAbortsWithDiagnostic) {
  const Split split = kfold_split(*manifest_, 2, 4);
  TrainOptions o = quick(2, 3);
  o.lr0 = 1e300;
  const std::string msg = message_of([&] { (void)train(*data_, split, small_config(), o); });
  EXPECT_NE(msg.find("NonFiniteLoss"), std::string::npos) << msg;
  EXPECT_NE(msg.find("fold"), std::string::npos) << msg;
  EXPECT_NE(msg.find("epoch"), std::string::npos) << msg;
}

TEST_F(Training, ShuffledLabelsTrainADifferentEnsemble) {
  const Split split = kfold_split(*manifest_, 2, 4);
  TrainOptions o = quick(2, 2);
  const TrainedEnsemble real = train(*data_, split, small_config(), o);
  o.shuffle_labels = true;
  const TrainedEnsemble control = train(*data_, split, small_config(), o);
  EXPECT_NE(real.report.folds[0].epoch_loss.back(), control.report.folds[0].epoch_loss.back());
  EXPECT_DOUBLE_EQ(real.report.test->baseline_mean, control.report.test->baseline_mean);
  EXPECT_EQ(real.report.test->count, control.report.test->count);
}

TEST_F(Training, SavedEnsemblePredictsIdentically) {
  const Split split = kfold_split(*manifest_, 2, 4);
  const TrainedEnsemble e = train(*data_, split, small_config(), quick(2, 1));
  const TempDir d("ensemble_io");
  save_ensemble(d.path(), e);
  const auto loaded = load_ensemble(d.path());
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(predict(*data_, split.test, loaded), predict(*data_, split.test, e.members));
  const TempDir empty("ensemble_empty");
  EXPECT_EQ(code_of([&] { (void)load_ensemble(empty.path()); }), ErrorCode::EmptyEnsemble);
}

TEST_F(Training, EvaluateRejectsEmptySplit) {
  const Split split = kfold_split(*manifest_, 2, 4);
  const TrainedEnsemble e = train(*data_, split, small_config(), quick(2, 1));
  EXPECT_EQ(code_of([&] { (void)evaluate(*data_, {}, e.members, 0.0); }), ErrorCode::EmptyBatch);
}

TEST_F(Training, ReportIsJson) {
  const Split split = kfold_split(*manifest_, 2, 4);
  const TrainedEnsemble e = train(*data_, split, small_config(), quick(2, 1));
  const std::string j = report_json(e.report);
  EXPECT_NE(j.find("\"folds\""), std::string::npos);
  EXPECT_NE(j.find("\"isolation_audit\""), std::string::npos);
  EXPECT_NE(j.find("\"pearson\""), std::string::npos);
}

TEST_F(Training, PatchSweepEmitsOneRowPerSize) {
  TrainOptions o = quick(2, 1);
  const std::vector<std::size_t> sizes{8, 16, 32};
  const auto rows = patch_sweep(*manifest_, small_config(), o, sizes);
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rows[i].patch_size, sizes[i]);
    EXPECT_TRUE(std::isfinite(rows[i].test.mse));
  }
  const std::string table = format_sweep(rows);
  for (const char* s : {"0.137", "0.134", "0.135", "not reproduced"}) {
    EXPECT_NE(table.find(s), std::string::npos) << s << "\n" << table;
  }
}

TEST(TrainOptions, KeyValues) {
  TrainOptions o;
  EXPECT_TRUE(o.apply("epochs", "7"));
  EXPECT_TRUE(o.apply("lr0", "0.5"));
  EXPECT_TRUE(o.apply("folds", "3"));
  EXPECT_TRUE(o.apply("batch_size", "4"));
  EXPECT_FALSE(o.apply("patch_size", "8"));
  EXPECT_EQ(o.epochs, 7u);
  EXPECT_EQ(o.lr0, 0.5);
  TrainOptions back;
  for (const auto& [k, v] : o.to_key_values()) EXPECT_TRUE(back.apply(k, v)) << k;
  EXPECT_EQ(back.to_key_values(), o.to_key_values());
}

}  // namespace
