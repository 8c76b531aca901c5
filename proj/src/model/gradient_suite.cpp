#include "sign/gradient_suite.hpp"

#include <functional>
#include <random>

#include "sign/model.hpp"
#include "sign/nn/gradcheck.hpp"
#include "sign/nn/ops.hpp"

namespace sign::model {
namespace {

namespace op = nn::ops;
using nn::InitRng;
using nn::Tensor;
using nn::Var;

constexpr double kTolerance = 1e-4;
constexpr std::size_t kMaxAttempts = 8;

Tensor uniform(nn::Shape shape, InitRng& rng, double half_width) {
  // fan_in 3, gain 1 -> U[-1, 1]
  Tensor t = nn::scaled_uniform(std::move(shape), 3, 1.0, rng);
  for (double& v : t.values()) v *= half_width;
  return t;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void jitter_offsets(nn::ParameterSet& params, InitRng& rng) {
  for (const auto& e : params.entries()) {
    if (ends_with(e.name, ".bias") || ends_with(e.name, ".beta")) {
      Var v = e.var;
      v.mutable_value() = uniform(v.shape(), rng, 0.1);
    }
  }
}

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : seed_(seed), rng_(seed) {}

  // Probes out with a fixed random projection so every output element matters.
  GradientCase check(const std::string& name, nn::ParameterSet& params, std::vector<Var> extra,
                     const std::function<Var()>& forward, std::size_t max_elements = 0) {
    std::vector<Var> inputs = params.vars();
    inputs.insert(inputs.end(), extra.begin(), extra.end());
    const Var probe = Var::constant(uniform(forward().shape(), rng_, 1.0));
    return run(name, params, inputs, [&] { return op::mean(op::mul(forward(), probe)); }, max_elements);
  }

  GradientCase check_loss(const std::string& name, nn::ParameterSet& params, const std::function<Var()>& loss,
                          std::size_t max_elements) {
    std::vector<Var> inputs = params.vars();
    return run(name, params, inputs, loss, max_elements);
  }

  Var input(nn::Shape shape) { return Var::parameter(uniform(std::move(shape), rng_, 1.0)); }
  InitRng& rng() { return rng_; }

 private:
  // Redraws the offsets until no probe straddles a ReLU kink.
  GradientCase run(const std::string& name, nn::ParameterSet& params, std::vector<Var>& inputs,
                   const std::function<Var()>& loss, std::size_t max_elements) {
    nn::GradcheckOptions o;
    o.tolerance = kTolerance;
    o.max_elements = max_elements;
    nn::GradcheckResult r;
    std::size_t attempts = 0;
    do {
      jitter_offsets(params, rng_);
      r = nn::gradcheck(loss, inputs, o);
      ++attempts;
    } while (r.kinks > 0 && attempts < kMaxAttempts);
    return {name, seed_, r.max_relative_error, r.elements_checked, r.worst, attempts, r.kinks};
  }

  std::uint64_t seed_;
  InitRng rng_;
};

imaging::ImageF random_image(std::size_t h, std::size_t w, InitRng& rng) {
  imaging::ImageF img(h, w, 1);
  for (double& v : img.pixels()) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return img;
}

void run_seed(std::uint64_t seed, std::vector<GradientCase>& out) {
  Suite s(seed);
  {
    nn::ParameterSet p;
    const nn::Linear lin(p, "linear", 6, 4, 1.0, s.rng());
    const Var x = s.input({5, 6});
    out.push_back(s.check("linear", p, {x}, [&] { return lin(x); }));
  }
  {
    nn::ParameterSet p;
    const nn::Mlp mlp(p, "mlp", {6, 9, 3}, s.rng());
    const Var x = s.input({5, 6});
    out.push_back(s.check("mlp", p, {x}, [&] { return mlp(x); }));
  }
  {
    nn::ParameterSet p;
    const Var x = s.input({4, 7});
    out.push_back(s.check("sigmoid", p, {x}, [&] { return op::sigmoid(op::scale(x, 3.0)); }));
    out.push_back(s.check("softmax", p, {x}, [&] { return op::softmax(op::scale(x, 3.0)); }));
  }
  {
    nn::ParameterSet p;
    const nn::LayerNorm ln(p, "layer_norm", 7);
    const Var x = s.input({4, 7});
    out.push_back(s.check("layer_norm", p, {x}, [&] { return ln(x); }));
  }
  {
    nn::ParameterSet p;
    const nn::ConvNet cnn(p, "conv_net", 1, nn::default_conv_stack(8), s.rng());
    const Var x = s.input({3, 16, 16, 1});
    out.push_back(s.check("conv_net", p, {x}, [&] { return cnn(x); }, 40));
  }
  {
    nn::ParameterSet p;
    const nn::MultiHeadSelfAttention attn(p, "attention", 8, 2, s.rng());
    const Var x = s.input({2 * 5, 8});
    out.push_back(s.check("attention", p, {x}, [&] { return attn(x, 2); }));
  }
  {
    nn::ParameterSet p;
    nn::TransformerOptions o;
    o.dim = 8;
    o.tokens = 5;
    o.heads = 2;
    o.mlp_hidden = 12;
    const nn::TransformerEncoder enc(p, "transformer", o, s.rng());
    const Var x = s.input({2 * 5, 8});
    out.push_back(s.check("transformer", p, {x}, [&] { return enc(x, 2); }, 40));
  }
  {
    SignConfig cfg;
    cfg.image_height = 32;
    cfg.image_width = 32;
    cfg.patch_size = 8;
    cfg.feature_dim = 8;
    cfg.gist_size = 16;
    cfg.gist_sigma = 1.0;
    cfg.transformer_heads = 2;
    cfg.transformer_mlp_hidden = 12;
    cfg.mu_hidden = 8;
    cfg.weight_hidden = 8;
    cfg.lambda = 0.05;
    SignModel model(cfg, seed);
    std::vector<PreparedInput> inputs;
    std::vector<double> targets;
    for (int i = 0; i < 3; ++i) {
      inputs.push_back(prepare_input(random_image(32, 32, s.rng()), random_image(32, 32, s.rng()), cfg));
      targets.push_back(static_cast<double>(s.rng()() % 1000) / 500.0);
    }
    std::vector<const PreparedInput*> ptrs;
    for (const auto& in : inputs) ptrs.push_back(&in);
    out.push_back(s.check_loss("sign_forward_loss", model.parameters(),
                               [&] { return sign_loss(model.forward_batch(ptrs), targets, cfg.lambda); }, 12));
  }
}

}  // namespace

bool GradientSuiteResult::passed() const {
  for (const auto& c : cases) {
    if (!(c.max_relative_error < tolerance) || c.elements_checked == 0 || c.kinks > 0) return false;
  }
  return !cases.empty();
}

GradientSuiteResult run_gradient_suite(std::span<const std::uint64_t> seeds) {
  GradientSuiteResult result;
  result.tolerance = kTolerance;
  for (std::uint64_t seed : seeds) run_seed(seed, result.cases);
  return result;
}

}  // namespace sign::model
