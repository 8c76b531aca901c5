#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "sign/error.hpp"
#include "sign/gradient_suite.hpp"
#include "sign/model.hpp"
#include "sign/nn/adam.hpp"

namespace {

using namespace sign::model;
using sign::imaging::ImageF;
using sign::nn::Var;

template <typename F>
sign::ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const sign::Error& e) {
    return e.code();
  }
  return sign::ErrorCode::InvalidArgument;
}

SignConfig small_config() {
  SignConfig c;
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

ImageF random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ImageF img(h, w, 1);
  for (double& v : img.pixels()) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return img;
}

void set_all(Var v, double value) { v.mutable_value().fill(value); }

void zero_mlp(const sign::nn::Mlp& mlp) {
  for (const auto& l : mlp.layers()) {
    set_all(l.weight, 0.0);
    set_all(l.bias, 0.0);
  }
}

// Every branch contributes nothing except a constant mu0 = value.
void force_constant(SignModel& m, double value) {
  zero_mlp(m.mu_head);
  zero_mlp(m.mu0_head);
  set_all(m.mu0_head.layers().back().bias, value);
}

// --- configuration ---------------------------------------------------------

TEST(SignConfig, KeyValueRoundTrip) {
  SignConfig c = small_config();
  c.lambda = 1e-3;
  c.context_enabled = false;
  c.gist_sigma = 0.1;
  EXPECT_EQ(SignConfig::from_key_values(c.to_key_values()), c);
  const auto text = sign::format_key_values(c.to_key_values());
  EXPECT_EQ(SignConfig::from_key_values(sign::parse_key_values(text)), c);
}

TEST(SignConfig, Validation) {
  SignConfig c;
  c.patch_size = 12;
  EXPECT_EQ(code_of([&] { c.validate(); }), sign::ErrorCode::InvalidArgument);
  c.patch_size = 32;
  c.image_width = 100;
  EXPECT_EQ(code_of([&] { c.validate(); }), sign::ErrorCode::IndivisibleDims);
  c = SignConfig{};
  c.lambda = -1.0;
  EXPECT_EQ(code_of([&] { c.validate(); }), sign::ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { (void)SignConfig::from_key_values({{"bogus", "1"}}); }), sign::ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { (void)SignConfig::from_key_values({{"patch_size", "x"}}); }),
            sign::ErrorCode::InvalidArgument);
}

TEST(KeyValues, CommentsBlanksAndErrors) {
  const auto kv = sign::parse_key_values("# header\n\nseed = 7  # trailing\n lambda=0.5\n");
  EXPECT_EQ(kv.at("seed"), "7");
  EXPECT_EQ(kv.at("lambda"), "0.5");
  EXPECT_EQ(code_of([] { (void)sign::parse_key_values("novalue\n"); }), sign::ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { (void)sign::parse_key_values("a=1\na=2\n"); }), sign::ErrorCode::InvalidArgument);
  EXPECT_EQ(sign::parse_double("x", sign::format_double(0.1 + 0.2)), 0.1 + 0.2);
}

// --- forward ---------------------------------------------------------------

TEST(SignForward, OutputInvariants) {
  const SignConfig cfg = small_config();
  const SignModel m(cfg, 3);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const SignOutput o = m.forward(random_image(32, 32, s), random_image(20, 24, s + 100));
    EXPECT_EQ(o.predicted_log_gaze, o.gist_term + o.local_term);
    ASSERT_EQ(o.weights.size(), cfg.regions());
    double local = 0.0;
    for (std::size_t j = 0; j < o.weights.size(); ++j) {
      EXPECT_GT(o.weights[j], 0.0);
      EXPECT_LT(o.weights[j], 1.0);
      local += o.local_durations[j] * o.weights[j];
    }
    EXPECT_NEAR(local, o.local_term, 1e-12);
    EXPECT_NEAR(std::accumulate(o.pattern.begin(), o.pattern.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(SignForward, PatchCountMatchesWeights) {
  for (std::size_t p : {8u, 16u, 32u}) {
    SignConfig cfg = small_config();
    cfg.image_height = 64;
    cfg.image_width = 96;
    cfg.patch_size = p;
    const SignModel m(cfg, 1);
    const SignOutput o = m.forward(random_image(64, 96, p), std::nullopt);
    const std::size_t n = (64 / p) * (96 / p);
    EXPECT_EQ(cfg.regions(), n);
    EXPECT_EQ(o.weights.size(), n);
    EXPECT_EQ(o.pattern.size(), n);
  }
}

TEST(SignForward, ZeroWeightHeadGivesHalfWeights) {
  const SignModel m(small_config(), 4);
  zero_mlp(m.weight_head);
  const SignOutput o = m.forward(random_image(32, 32, 1), std::nullopt);
  double mu_sum = 0.0;
  for (std::size_t j = 0; j < o.weights.size(); ++j) {
    EXPECT_EQ(o.weights[j], 0.5);
    mu_sum += o.local_durations[j];
  }
  EXPECT_NEAR(o.local_term, 0.5 * mu_sum, 1e-12);
}

TEST(SignForward, ZeroDurationHeadLeavesOnlyGist) {
  const SignModel m(small_config(), 5);
  zero_mlp(m.mu_head);
  const SignOutput o = m.forward(random_image(32, 32, 2), random_image(32, 32, 3));
  EXPECT_EQ(o.local_term, 0.0);
  EXPECT_EQ(o.predicted_log_gaze, o.gist_term);
}

TEST(SignForward, ContextOnlyEntersGistTerm) {
  SignConfig with = small_config();
  SignConfig without = with;
  without.context_enabled = false;
  const SignModel a(with, 6);
  const SignModel b(without, 6);
  const ImageF img = random_image(32, 32, 4);
  const ImageF ctx = random_image(32, 32, 5);
  const SignOutput oa = a.forward(img, ctx);
  const SignOutput ob = b.forward(img, ctx);
  EXPECT_NE(oa.gist_term, ob.gist_term);
  EXPECT_EQ(oa.weights, ob.weights);
  EXPECT_EQ(oa.local_durations, ob.local_durations);
  EXPECT_EQ(oa.local_term, ob.local_term);
  // A missing context matches a disabled one.
  EXPECT_EQ(a.forward(img, std::nullopt).gist_term, ob.gist_term);
}

TEST(SignForward, BatchMatchesSingleInputs) {
  const SignConfig cfg = small_config();
  const SignModel m(cfg, 7);
  std::vector<PreparedInput> inputs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    inputs.push_back(prepare_input(random_image(32, 32, s), s == 1 ? std::nullopt : std::optional(random_image(32, 32, s + 9)), cfg));
  }
  const PreparedInput* ptrs[] = {&inputs[0], &inputs[1], &inputs[2]};
  const BatchForward batch = m.forward_batch(ptrs);
  for (std::size_t i = 0; i < 3; ++i) {
    const SignOutput single = m.forward(inputs[i]);
    const SignOutput fromb = batch.output(i);
    EXPECT_NEAR(single.predicted_log_gaze, fromb.predicted_log_gaze, 1e-12);
    for (std::size_t j = 0; j < single.weights.size(); ++j) EXPECT_NEAR(single.weights[j], fromb.weights[j], 1e-12);
  }
}

TEST(SignForward, ConfigMismatch) {
  const SignConfig cfg = small_config();
  SignConfig other = cfg;
  other.patch_size = 16;
  const SignModel m(cfg, 8);
  const PreparedInput wrong = prepare_input(random_image(32, 32, 1), std::nullopt, other);
  EXPECT_EQ(code_of([&] { (void)m.forward(wrong); }), sign::ErrorCode::ConfigMismatch);
  EXPECT_EQ(code_of([&] { (void)m.forward_batch({}); }), sign::ErrorCode::EmptyBatch);
}

TEST(SignForward, ResizesAndConvertsInputs) {
  const SignConfig cfg = small_config();
  const SignModel m(cfg, 9);
  ImageF rgb(50, 40, 3, 0.3);
  const SignOutput o = m.forward(rgb, std::nullopt);
  EXPECT_EQ(o.weights.size(), cfg.regions());
}

// --- persistence -----------------------------------------------------------

TEST(SignModelFiles, SaveLoadReproducesOutputs) {
  const SignConfig cfg = small_config();
  const SignModel m(cfg, 10);
  const auto stem = std::filesystem::temp_directory_path() / "sign_model_roundtrip";
  m.save(stem);
  const SignModel back = SignModel::load(stem);
  const SignModel same = SignModel::load(stem, cfg);
  const ImageF img = random_image(32, 32, 11);
  EXPECT_EQ(m.forward(img, img).predicted_log_gaze, back.forward(img, img).predicted_log_gaze);
  EXPECT_EQ(m.forward(img, img).weights, same.forward(img, img).weights);

  SignConfig other = cfg;
  other.feature_dim = 16;
  EXPECT_EQ(code_of([&] { (void)SignModel::load(stem, other); }), sign::ErrorCode::ConfigMismatch);
  std::filesystem::remove(stem.string() + ".ckpt");
  std::filesystem::remove(stem.string() + ".cfg");
}

// --- loss and pattern -----------------------------------------------------

SignOutput output_with(double g, std::vector<double> w) {
  SignOutput o;
  o.predicted_log_gaze = g;
  o.weights = std::move(w);
  return o;
}

TEST(SignLoss, Examples) {
  const std::vector<SignOutput> perfect{output_with(1.0, {0.3}), output_with(2.0, {0.4})};
  const std::vector<double> targets{1.0, 2.0};
  EXPECT_EQ(sign_loss(perfect, targets, 0.0), 0.0);

  const std::vector<SignOutput> one{output_with(5.0, {0.5})};
  const std::vector<double> t3{3.0};
  EXPECT_EQ(sign_loss(one, t3, 0.0), 4.0);

  const std::vector<SignOutput> small_w{output_with(1.0, {0.1, 0.2})};
  const std::vector<SignOutput> large_w{output_with(1.0, {0.6, 0.7})};
  const std::vector<double> t1{1.0};
  EXPECT_LT(sign_loss(small_w, t1, 0.1), sign_loss(large_w, t1, 0.1));
  EXPECT_DOUBLE_EQ(sign_loss(large_w, t1, 0.1), 0.1 * 0.65);

  EXPECT_EQ(code_of([] { (void)sign_loss(std::span<const SignOutput>{}, {}, 0.0); }), sign::ErrorCode::EmptyBatch);
  EXPECT_EQ(code_of([&] { (void)sign_loss(one, targets, 0.0); }), sign::ErrorCode::ShapeMismatch);
}

TEST(SignLoss, GraphMatchesPlainComputation) {
  const SignConfig cfg = small_config();
  const SignModel m(cfg, 12);
  std::vector<PreparedInput> inputs;
  for (std::uint64_t s = 0; s < 4; ++s) inputs.push_back(prepare_input(random_image(32, 32, s), std::nullopt, cfg));
  std::vector<const PreparedInput*> ptrs;
  for (const auto& i : inputs) ptrs.push_back(&i);
  const BatchForward b = m.forward_batch(ptrs);
  const std::vector<double> targets{0.5, -0.2, 1.0, 0.0};
  std::vector<SignOutput> outs;
  for (std::size_t i = 0; i < 4; ++i) outs.push_back(b.output(i));
  EXPECT_NEAR(sign_loss(b, targets, 0.3).value().item(), sign_loss(outs, targets, 0.3), 1e-12);
}

TEST(ExtractPattern, Examples) {
  const auto uniform = extract_pattern(output_with(0.0, {0.4, 0.4, 0.4, 0.4}));
  for (double p : uniform.pattern) EXPECT_DOUBLE_EQ(p, 0.25);

  const std::vector<double> w{0.8, 0.2, 0.0001, 0.05};
  const auto p = extract_pattern(output_with(0.0, w)).pattern;
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = 0; j < w.size(); ++j) EXPECT_EQ(w[i] < w[j], p[i] < p[j]);

  std::vector<double> scaled = w;
  for (double& v : scaled) v *= 0.37;
  const auto ps = extract_pattern(output_with(0.0, scaled)).pattern;
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(ps[i], p[i], 1e-15);
}

// --- ensembles -------------------------------------------------------------

TEST(Ensemble, AveragesInLogSpace) {
  const SignConfig cfg = small_config();
  const ImageF img = random_image(32, 32, 13);

  std::vector<SignModel> single;
  single.emplace_back(cfg, 1);
  const double g = single[0].forward(img, std::nullopt).predicted_log_gaze;
  EXPECT_DOUBLE_EQ(predict_gaze_seconds(img, std::nullopt, cfg, single), std::exp(g));

  std::vector<SignModel> twins;
  twins.emplace_back(cfg, 2);
  twins.emplace_back(cfg, 2);
  const double g2 = twins[0].forward(img, std::nullopt).predicted_log_gaze;
  EXPECT_DOUBLE_EQ(predict_gaze_seconds(img, std::nullopt, cfg, twins), std::exp(g2));

  std::vector<SignModel> pair;
  pair.emplace_back(cfg, 3);
  pair.emplace_back(cfg, 4);
  force_constant(pair[0], 0.0);
  force_constant(pair[1], std::log(4.0));
  EXPECT_NEAR(predict_gaze_seconds(img, std::nullopt, cfg, pair), 2.0, 1e-12);
}

TEST(Ensemble, Errors) {
  const SignConfig cfg = small_config();
  const ImageF img = random_image(32, 32, 14);
  EXPECT_EQ(code_of([&] { (void)predict_gaze_seconds(img, std::nullopt, cfg, {}); }), sign::ErrorCode::EmptyEnsemble);
  SignConfig other = cfg;
  other.feature_dim = 16;
  std::vector<SignModel> ens;
  ens.emplace_back(other, 1);
  EXPECT_EQ(code_of([&] { (void)predict_gaze_seconds(img, std::nullopt, cfg, ens); }),
            sign::ErrorCode::ConfigMismatch);
}

TEST(Ensemble, PatternIsMeanOfMembers) {
  const SignConfig cfg = small_config();
  const PreparedInput in = prepare_input(random_image(32, 32, 15), std::nullopt, cfg);
  std::vector<SignModel> ens;
  ens.emplace_back(cfg, 1);
  ens.emplace_back(cfg, 2);
  const auto p = ensemble_pattern(in, cfg, ens);
  const auto p0 = ens[0].forward(in).pattern;
  const auto p1 = ens[1].forward(in).pattern;
  for (std::size_t j = 0; j < p.size(); ++j) EXPECT_NEAR(p[j], 0.5 * (p0[j] + p1[j]), 1e-15);
}

// --- gradients -------------------------------------------------------------

struct Batch {
  std::vector<PreparedInput> inputs;
  std::vector<const PreparedInput*> ptrs;
  std::vector<double> targets;
};

Batch random_batch(const SignConfig& cfg, std::size_t n, std::uint64_t seed) {
  Batch b;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    b.inputs.push_back(prepare_input(random_image(cfg.image_height, cfg.image_width, seed * 31 + i),
                                     random_image(cfg.image_height, cfg.image_width, seed * 31 + i + 1000), cfg));
    b.targets.push_back(static_cast<double>(rng() % 1000) / 500.0);
  }
  for (const auto& in : b.inputs) b.ptrs.push_back(&in);
  return b;
}

class SignGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(SignGradients, SuiteMatchesFiniteDifferences) {
  const std::uint64_t seeds[] = {GetParam()};
  const auto r = run_gradient_suite(seeds);
  EXPECT_TRUE(r.passed());
  for (const auto& c : r.cases) {
    EXPECT_LT(c.max_relative_error, 1e-4) << c.name << ": " << c.worst;
    EXPECT_EQ(c.kinks, 0u) << c.name << " after " << c.attempts << " draws";
    EXPECT_GT(c.elements_checked, 0u) << c.name;
  }
  EXPECT_EQ(r.cases.back().name, "sign_forward_loss");
}

TEST_P(SignGradients, EveryParameterReceivesGradient) {
  const SignConfig cfg = small_config();
  SignModel m(cfg, GetParam());
  const Batch b = random_batch(cfg, 4, GetParam() + 1);
  m.parameters().zero_grads();
  sign::nn::backward(sign_loss(m.forward_batch(b.ptrs), b.targets, 0.0));
  for (const auto& e : m.parameters().entries()) {
    bool nonzero = false;
    for (double g : e.var.grad().values()) {
      ASSERT_TRUE(std::isfinite(g)) << e.name;
      nonzero = nonzero || g != 0.0;
    }
    EXPECT_TRUE(nonzero) << e.name;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, SignGradients, ::testing::Values(1u, 2u, 3u));

double mean_weight_after_epoch(double lambda) {
  SignConfig cfg = small_config();
  cfg.lambda = lambda;
  SignModel m(cfg, 21);
  const Batch data = random_batch(cfg, 8, 5);
  auto params = m.parameters().vars();
  sign::nn::AdamState state(params, {.lr = 1e-2});
  for (std::size_t start = 0; start < 8; start += 4) {
    const std::vector<const PreparedInput*> ptrs(data.ptrs.begin() + start, data.ptrs.begin() + start + 4);
    const std::vector<double> t(data.targets.begin() + start, data.targets.begin() + start + 4);
    m.parameters().zero_grads();
    sign::nn::backward(sign_loss(m.forward_batch(ptrs), t, lambda));
    sign::nn::adam_step(state, params);
  }
  sign::nn::NoGradGuard no_grad;
  const BatchForward out = m.forward_batch(data.ptrs);
  double total = 0.0;
  for (double w : out.weights.value().values()) total += w;
  return total / static_cast<double>(out.weights.value().size());
}

TEST(SparsityPressure, LargerLambdaDoesNotRaiseWeights) {
  double previous = mean_weight_after_epoch(0.0);
  for (double lambda : {1e-3, 1e-1, 1.0, 10.0}) {
    const double w = mean_weight_after_epoch(lambda);
    EXPECT_LE(w, previous) << "lambda " << lambda;
    previous = w;
  }
}

}  // namespace
