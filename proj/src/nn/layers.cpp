#include "sign/nn/layers.hpp"

#include <cmath>

#include "sign/error.hpp"
#include "sign/nn/ops.hpp"

namespace sign::nn {
namespace {

constexpr double kReluGain = 1.4142135623730951;

double uniform_signed(InitRng& rng) {
  return 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;
}

}  // namespace

Var ParameterSet::add(std::string name, Tensor init) {
  for (const auto& e : entries_) {
    if (e.name == name) throw Error(ErrorCode::InvalidArgument, "duplicate parameter name " + name);
  }
  Var v = Var::parameter(std::move(init));
  entries_.push_back({std::move(name), v});
  return v;
}

std::vector<Var> ParameterSet::vars() const {
  std::vector<Var> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.var);
  return out;
}

Var ParameterSet::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.var;
  }
  throw Error(ErrorCode::InvalidArgument, "no parameter named " + name);
}

std::size_t ParameterSet::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var.value().size();
  return n;
}

void ParameterSet::zero_grads() {
  for (auto& e : entries_) e.var.grad_buffer().fill(0.0);
}

Tensor scaled_uniform(Shape shape, std::size_t fan_in, double gain, InitRng& rng) {
  Tensor t(std::move(shape));
  const double a = gain * std::sqrt(3.0 / static_cast<double>(fan_in == 0 ? 1 : fan_in));
  for (double& v : t.values()) v = a * uniform_signed(rng);
  return t;
}

Linear::Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, double gain,
               InitRng& rng)
    : weight(params.add(name + ".weight", scaled_uniform({in, out}, in, gain, rng))),
      bias(params.add(name + ".bias", Tensor({out}))) {}

Var Linear::operator()(const Var& x) const { return ops::add_bias(ops::matmul(x, weight), bias); }

Mlp::Mlp(ParameterSet& params, const std::string& name, const std::vector<std::size_t>& dims, InitRng& rng) {
  if (dims.size() < 2) throw Error(ErrorCode::InvalidArgument, "an MLP needs at least input and output sizes");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    layers_.emplace_back(params, name + "." + std::to_string(i), dims[i], dims[i + 1], last ? 1.0 : kReluGain,
                         rng);
  }
}

Var Mlp::operator()(const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i + 1 < layers_.size()) h = ops::relu(h);
  }
  return h;
}

std::vector<ConvLayerSpec> default_conv_stack(std::size_t feature_dim) {
  return {
      {4, 5, 2, 2},
      {8, 3, 2, 1},
      {8, 3, 1, 1},
      {16, 3, 2, 1},
      {feature_dim, 3, 1, 1},
  };
}

ConvNet::ConvNet(ParameterSet& params, const std::string& name, std::size_t in_channels,
                 const std::vector<ConvLayerSpec>& stack, InitRng& rng) {
  std::size_t cin = in_channels;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const ConvLayerSpec& s = stack[i];
    const std::size_t fan_in = s.kernel * s.kernel * cin;
    const std::string prefix = name + "." + std::to_string(i);
    Var w = params.add(prefix + ".weight",
                       scaled_uniform({s.out_channels, s.kernel, s.kernel, cin}, fan_in, kReluGain, rng));
    Var b = params.add(prefix + ".bias", Tensor({s.out_channels}));
    layers_.push_back({w, b, s});
    cin = s.out_channels;
  }
}

Var ConvNet::operator()(const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    h = ops::conv2d(h, l.weight, l.bias, l.spec.stride, l.spec.padding, i + 1 < layers_.size());
  }
  return ops::global_avg_pool(h);
}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, std::size_t dim)
    : gamma(params.add(name + ".gamma", Tensor({dim}, 1.0))), beta(params.add(name + ".beta", Tensor({dim}))) {}

Var LayerNorm::operator()(const Var& x) const { return ops::layer_norm(x, gamma, beta); }

MultiHeadSelfAttention::MultiHeadSelfAttention(ParameterSet& params, const std::string& name, std::size_t dim,
                                               std::size_t heads, InitRng& rng)
    : dim_(dim), heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw Error(ErrorCode::InvalidArgument,
                "attention width " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  qkv = Linear(params, name + ".qkv", dim, 3 * dim, 1.0, rng);
  out = Linear(params, name + ".out", dim, dim, 1.0, rng);
}

Var MultiHeadSelfAttention::operator()(const Var& x, std::size_t batch) const {
  const std::size_t head_dim = dim_ / heads_;
  const Var packed = qkv(x);
  const Var q = ops::split_heads(packed, batch, heads_, head_dim, 0);
  const Var k = ops::split_heads(packed, batch, heads_, head_dim, dim_);
  const Var v = ops::split_heads(packed, batch, heads_, head_dim, 2 * dim_);
  const Var scores = ops::scale(ops::bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  const Var context = ops::bmm(ops::softmax(scores), v);
  return out(ops::merge_heads(context, batch, heads_));
}

TransformerEncoder::TransformerEncoder(ParameterSet& params, const std::string& name,
                                       const TransformerOptions& options, InitRng& rng)
    : options_(options) {
  if (options.positional_embeddings) {
    positional_ = params.add(name + ".positional", scaled_uniform({options.tokens, options.dim}, 1, 0.02, rng));
  }
  for (std::size_t i = 0; i < options.layers; ++i) {
    const std::string prefix = name + ".block" + std::to_string(i);
    Block b;
    b.norm1 = LayerNorm(params, prefix + ".norm1", options.dim);
    b.attention = MultiHeadSelfAttention(params, prefix + ".attention", options.dim, options.heads, rng);
    b.norm2 = LayerNorm(params, prefix + ".norm2", options.dim);
    b.mlp = Mlp(params, prefix + ".mlp", {options.dim, options.mlp_hidden, options.dim}, rng);
    blocks_.push_back(std::move(b));
  }
  final_norm_ = LayerNorm(params, name + ".final_norm", options.dim);
}

Var TransformerEncoder::operator()(const Var& x, std::size_t batch) const {
  const Shape& s = x.shape();
  if (s.size() != 2 || s[1] != options_.dim || batch == 0 || s[0] % batch != 0 ||
      (positional_ && s[0] / batch != options_.tokens)) {
    throw Error(ErrorCode::ShapeMismatch, "transformer input " + shape_string(s) + " for batch " +
                                              std::to_string(batch) + " does not match [tokens " +
                                              std::to_string(options_.tokens) + ", dim " +
                                              std::to_string(options_.dim) + "]");
  }
  Var h = positional_ ? ops::add_tiled(x, positional_) : x;
  for (const Block& b : blocks_) {
    h = ops::add(h, b.attention(b.norm1(h), batch));
    h = ops::add(h, b.mlp(b.norm2(h)));
  }
  return final_norm_(h);
}

}  // namespace sign::nn
