#include <algorithm>
#include <cmath>
#include <numeric>

#include "sign/error.hpp"
#include "sign/model.hpp"
#include "sign/nn/checkpoint.hpp"
#include "sign/nn/ops.hpp"
#include "sign/parallel.hpp"

namespace sign::model {
namespace {

namespace op = nn::ops;
using nn::Tensor;
using nn::Var;

Tensor image_tensor(const imaging::ImageF& img) {
  const auto px = img.pixels();
  return Tensor({img.height(), img.width(), 1}, std::vector<double>(px.begin(), px.end()));
}

imaging::ImageF grayscale(const imaging::ImageF& img) {
  return img.channels() == 1 ? img : imaging::convert_channels(img, 1);
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  std::filesystem::path p = stem;
  p += suffix;
  return p;
}

void require_ensemble(const SignConfig& cfg, std::span<const SignModel> ensemble) {
  if (ensemble.empty()) throw Error(ErrorCode::EmptyEnsemble, "ensemble has no members");
  for (const SignModel& m : ensemble) {
    if (!m.config().same_architecture(cfg)) {
      throw Error(ErrorCode::ConfigMismatch, "ensemble member was built for a different configuration");
    }
  }
}

}  // namespace

PreparedInput prepare_input(const imaging::ImageF& image, const std::optional<imaging::ImageF>& context,
                            const SignConfig& cfg) {
  cfg.validate();
  imaging::ImageF gray = grayscale(image);
  if (gray.height() != cfg.image_height || gray.width() != cfg.image_width) {
    gray = imaging::resize(gray, cfg.image_height, cfg.image_width);
  }
  std::optional<imaging::ImageF> ctx;
  if (context) ctx = grayscale(*context);

  PreparedInput in;
  in.patch_size = cfg.patch_size;
  const auto grid = imaging::patchify(gray, cfg.patch_size);
  in.regions = grid.size();
  const std::size_t area = cfg.patch_size * cfg.patch_size;
  in.patches = Tensor({in.regions, cfg.patch_size, cfg.patch_size, 1});
  for (std::size_t j = 0; j < in.regions; ++j) std::copy_n(grid.patches[j].data(), area, in.patches.data() + j * area);

  const auto gist = imaging::make_gist_input(gray, ctx, cfg.gist_size, cfg.gist_sigma);
  in.gist = image_tensor(gist.image);
  in.has_context = gist.context.has_value();
  in.context_gist = in.has_context ? image_tensor(*gist.context) : Tensor({cfg.gist_size, cfg.gist_size, 1});
  return in;
}

PreparedInput prepare_input(const imaging::Image& image, const std::optional<imaging::Image>& context,
                            const SignConfig& cfg) {
  std::optional<imaging::ImageF> ctx;
  if (context) ctx = imaging::to_float(*context);
  return prepare_input(imaging::to_float(image), ctx, cfg);
}

SignOutput BatchForward::output(std::size_t i) const {
  SignOutput o;
  o.predicted_log_gaze = g.value()[i];
  o.gist_term = gist_term.value()[i];
  o.local_term = local_term.value()[i];
  const double* w = weights.value().data() + i * regions;
  const double* m = mu.value().data() + i * regions;
  o.weights.assign(w, w + regions);
  o.local_durations.assign(m, m + regions);
  o.pattern = gaze::WeightMap::from_weights(o.weights).pattern;
  return o;
}

SignModel::SignModel(const SignConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  nn::InitRng rng(seed);
  const std::size_t k = cfg_.feature_dim;
  local_cnn = nn::ConvNet(params_, "local_cnn", 1, nn::default_conv_stack(k), rng);
  mu_head = nn::Mlp(params_, "mu_head", {k, cfg_.mu_hidden, 1}, rng);
  nn::TransformerOptions t;
  t.dim = k;
  t.tokens = cfg_.regions();
  t.layers = cfg_.transformer_layers;
  t.heads = cfg_.transformer_heads;
  t.mlp_hidden = cfg_.transformer_mlp_hidden;
  t.positional_embeddings = cfg_.positional_embeddings;
  encoder = nn::TransformerEncoder(params_, "encoder", t, rng);
  weight_head = nn::Mlp(params_, "weight_head", {k, cfg_.weight_hidden, 1}, rng);
  gist_cnn = nn::ConvNet(params_, "gist_cnn", 1, nn::default_conv_stack(k), rng);
  mu0_head = nn::Mlp(params_, "mu0_head", {2 * k, cfg_.mu_hidden, 1}, rng);
}

BatchForward SignModel::forward_batch(std::span<const PreparedInput* const> batch) const {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "forward on an empty batch");
  const std::size_t b = batch.size();
  const std::size_t n = cfg_.regions();
  const std::size_t p = cfg_.patch_size;
  const std::size_t gs = cfg_.gist_size;
  const std::size_t k = cfg_.feature_dim;
  const std::size_t patch_len = n * p * p;
  const std::size_t gist_len = gs * gs;

  Tensor patches({b * n, p, p, 1});
  Tensor gist({b, gs, gs, 1});
  Tensor context({b, gs, gs, 1});
  Tensor context_mask({b, k});
  bool any_context = false;
  for (std::size_t i = 0; i < b; ++i) {
    const PreparedInput& in = *batch[i];
    if (in.patch_size != p || in.regions != n || in.gist.size() != gist_len || in.context_gist.size() != gist_len) {
      throw Error(ErrorCode::ConfigMismatch, "input prepared for patch size " + std::to_string(in.patch_size) +
                                                 " with " + std::to_string(in.regions) +
                                                 " regions does not match the model (" + std::to_string(p) +
                                                 ", " + std::to_string(n) + ")");
    }
    std::copy_n(in.patches.data(), patch_len, patches.data() + i * patch_len);
    std::copy_n(in.gist.data(), gist_len, gist.data() + i * gist_len);
    if (in.has_context && cfg_.context_enabled) {
      any_context = true;
      std::copy_n(in.context_gist.data(), gist_len, context.data() + i * gist_len);
      std::fill_n(context_mask.data() + i * k, k, 1.0);
    }
  }

  BatchForward out;
  out.batch = b;
  out.regions = n;
  const Var features = local_cnn(Var::constant(std::move(patches)));
  out.mu = op::reshape(mu_head(features), {b, n});
  out.weights = op::reshape(op::sigmoid(weight_head(encoder(features, b))), {b, n});
  out.local_term = op::reshape(op::sum_last(op::mul(out.mu, out.weights)), {b});

  const Var s0 = gist_cnn(Var::constant(std::move(gist)));
  const Var sc = any_context ? op::mul(gist_cnn(Var::constant(std::move(context))), Var::constant(context_mask))
                             : Var::constant(Tensor({b, k}));
  out.gist_term = op::reshape(mu0_head(op::concat_last(s0, sc)), {b});
  out.g = op::add(out.gist_term, out.local_term);
  return out;
}

SignOutput SignModel::forward(const PreparedInput& input) const {
  nn::NoGradGuard no_grad;
  const PreparedInput* one[] = {&input};
  return forward_batch(one).output(0);
}

SignOutput SignModel::forward(const imaging::ImageF& image, const std::optional<imaging::ImageF>& context) const {
  return forward(prepare_input(image, context, cfg_));
}

void SignModel::save(const std::filesystem::path& stem) const {
  nn::save_checkpoint(with_suffix(stem, ".ckpt"), nn::snapshot(params_));
  save_key_values(with_suffix(stem, ".cfg"), cfg_.to_key_values());
}

SignModel SignModel::load(const std::filesystem::path& stem, const SignConfig& cfg) {
  const SignConfig stored = SignConfig::from_key_values(load_key_values(with_suffix(stem, ".cfg")));
  if (!stored.same_architecture(cfg)) {
    throw Error(ErrorCode::ConfigMismatch, stem.string() + " was trained with a different model configuration");
  }
  SignModel m(cfg, 0);
  nn::restore(m.params_, nn::load_checkpoint(with_suffix(stem, ".ckpt")));
  return m;
}

SignModel SignModel::load(const std::filesystem::path& stem) {
  return load(stem, SignConfig::from_key_values(load_key_values(with_suffix(stem, ".cfg"))));
}

Var sign_loss(const BatchForward& out, std::span<const double> targets, double lambda) {
  if (out.batch == 0) throw Error(ErrorCode::EmptyBatch, "loss over an empty batch");
  if (targets.size() != out.batch) {
    throw Error(ErrorCode::ShapeMismatch, std::to_string(targets.size()) + " targets for a batch of " +
                                              std::to_string(out.batch));
  }
  const Var diff = op::sub(out.g, Var::constant(Tensor({out.batch}, {targets.begin(), targets.end()})));
  Var loss = op::mean(op::mul(diff, diff));
  if (lambda > 0.0) loss = op::add(loss, op::scale(op::mean(op::abs(out.weights)), lambda));
  return loss;
}

double sign_loss(std::span<const SignOutput> outputs, std::span<const double> targets, double lambda) {
  if (outputs.empty()) throw Error(ErrorCode::EmptyBatch, "loss over an empty batch");
  if (targets.size() != outputs.size()) {
    throw Error(ErrorCode::ShapeMismatch, std::to_string(targets.size()) + " targets for a batch of " +
                                              std::to_string(outputs.size()));
  }
  double sq = 0.0, abs_w = 0.0;
  std::size_t count_w = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const double d = outputs[i].predicted_log_gaze - targets[i];
    sq += d * d;
    for (double w : outputs[i].weights) abs_w += std::abs(w);
    count_w += outputs[i].weights.size();
  }
  double loss = sq / static_cast<double>(outputs.size());
  if (lambda > 0.0 && count_w > 0) loss += lambda * abs_w / static_cast<double>(count_w);
  return loss;
}

gaze::WeightMap extract_pattern(const SignOutput& output) { return gaze::WeightMap::from_weights(output.weights); }

double predict_log_gaze(const PreparedInput& input, const SignConfig& cfg, std::span<const SignModel> ensemble) {
  require_ensemble(cfg, ensemble);
  std::vector<double> g(ensemble.size());
  parallel_for(ensemble.size(), [&](std::size_t i) { g[i] = ensemble[i].forward(input).predicted_log_gaze; });
  return std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
}

double predict_gaze_seconds(const imaging::ImageF& image, const std::optional<imaging::ImageF>& context,
                            const SignConfig& cfg, std::span<const SignModel> ensemble) {
  require_ensemble(cfg, ensemble);
  return std::exp(predict_log_gaze(prepare_input(image, context, cfg), cfg, ensemble));
}

std::vector<double> ensemble_pattern(const PreparedInput& input, const SignConfig& cfg,
                                     std::span<const SignModel> ensemble) {
  require_ensemble(cfg, ensemble);
  std::vector<std::vector<double>> patterns(ensemble.size());
  parallel_for(ensemble.size(), [&](std::size_t i) { patterns[i] = ensemble[i].forward(input).pattern; });
  std::vector<double> mean(patterns.front().size(), 0.0);
  for (const auto& p : patterns) {
    for (std::size_t j = 0; j < p.size(); ++j) mean[j] += p[j];
  }
  for (double& v : mean) v /= static_cast<double>(patterns.size());
  return gaze::WeightMap::from_weights(std::move(mean)).pattern;
}

}  // namespace sign::model
