#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sign/nn/autodiff.hpp"

namespace sign::nn {

using InitRng = std::mt19937_64;

struct NamedParameter {
  std::string name;
  Var var;
};

// Registry of trainable tensors in creation order. Layers hold handles to the
// same nodes, so updating a value here is visible to every layer.
class ParameterSet {
 public:
  Var add(std::string name, Tensor init);

  [[nodiscard]] const std::vector<NamedParameter>& entries() const noexcept { return entries_; }
  [[nodiscard]] std::vector<Var> vars() const;
  // Throws Error(InvalidArgument) for unknown names.
  [[nodiscard]] Var find(const std::string& name) const;
  [[nodiscard]] std::size_t parameter_count() const noexcept;
  void zero_grads();

 private:
  std::vector<NamedParameter> entries_;
};

// Uniform in [-a, a] with a = gain * sqrt(3 / fan_in).
[[nodiscard]] Tensor scaled_uniform(Shape shape, std::size_t fan_in, double gain, InitRng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, double gain,
         InitRng& rng);

  // x: [rows, in] -> [rows, out]
  [[nodiscard]] Var operator()(const Var& x) const;

  Var weight;  // [in, out]
  Var bias;    // [out]
};

// Linear layers with ReLU between them; no activation after the last.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterSet& params, const std::string& name, const std::vector<std::size_t>& dims, InitRng& rng);

  [[nodiscard]] Var operator()(const Var& x) const;
  [[nodiscard]] const std::vector<Linear>& layers() const noexcept { return layers_; }

 private:
  std::vector<Linear> layers_;
};

struct ConvLayerSpec {
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
  std::size_t padding;
};

// One 5x5 layer then four 3x3 layers, ending in feature_dim channels.
[[nodiscard]] std::vector<ConvLayerSpec> default_conv_stack(std::size_t feature_dim);

// Conv layers with ReLU between them, then global average pooling.
class ConvNet {
 public:
  ConvNet() = default;
  ConvNet(ParameterSet& params, const std::string& name, std::size_t in_channels,
          const std::vector<ConvLayerSpec>& stack, InitRng& rng);

  // x: [batch, h, w, in_channels] -> [batch, out_channels of the last layer]
  [[nodiscard]] Var operator()(const Var& x) const;

 private:
  struct Layer {
    Var weight;
    Var bias;
    ConvLayerSpec spec;
  };
  std::vector<Layer> layers_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, std::size_t dim);

  [[nodiscard]] Var operator()(const Var& x) const;

  Var gamma;
  Var beta;
};

class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t heads,
                         InitRng& rng);

  // x: [batch * tokens, dim] with tokens contiguous per batch element.
  [[nodiscard]] Var operator()(const Var& x, std::size_t batch) const;

  Linear qkv;
  Linear out;

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 0;
};

struct TransformerOptions {
  std::size_t dim = 32;
  std::size_t tokens = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 64;
  bool positional_embeddings = true;
};

// Pre-norm encoder: x += attn(ln(x)); x += mlp(ln(x)), with learned
// positional embeddings added to the input and a closing layer norm.
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(ParameterSet& params, const std::string& name, const TransformerOptions& options,
                     InitRng& rng);

  // x: [batch * tokens, dim] -> same shape.
  [[nodiscard]] Var operator()(const Var& x, std::size_t batch) const;

  [[nodiscard]] const TransformerOptions& options() const noexcept { return options_; }
  // Empty when positional embeddings are disabled.
  [[nodiscard]] const Var& positional() const noexcept { return positional_; }

 private:
  struct Block {
    LayerNorm norm1;
    MultiHeadSelfAttention attention;
    LayerNorm norm2;
    Mlp mlp;
  };
  TransformerOptions options_;
  Var positional_;
  std::vector<Block> blocks_;
  LayerNorm final_norm_;
};

}  // namespace sign::nn
