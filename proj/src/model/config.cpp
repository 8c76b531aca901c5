#include "sign/error.hpp"
#include "sign/model.hpp"

namespace sign::model {

void SignConfig::validate() const {
  if (patch_size != 8 && patch_size != 16 && patch_size != 32) {
    throw Error(ErrorCode::InvalidArgument, "patch_size must be 8, 16 or 32, got " + std::to_string(patch_size));
  }
  if (image_height == 0 || image_width == 0 || image_height % patch_size != 0 || image_width % patch_size != 0) {
    throw Error(ErrorCode::IndivisibleDims, "image " + std::to_string(image_height) + "x" +
                                                std::to_string(image_width) + " is not divisible into " +
                                                std::to_string(patch_size) + "px patches");
  }
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0, got " + format_double(lambda));
  if (!(gist_sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "gist_sigma must be >= 0");
  if (feature_dim == 0 || transformer_heads == 0 || feature_dim % transformer_heads != 0) {
    throw Error(ErrorCode::InvalidArgument, "feature_dim " + std::to_string(feature_dim) +
                                                " must be a positive multiple of transformer_heads " +
                                                std::to_string(transformer_heads));
  }
  if (gist_size < 8 || mu_hidden == 0 || weight_hidden == 0 || transformer_mlp_hidden == 0) {
    throw Error(ErrorCode::InvalidArgument, "gist_size must be >= 8 and hidden widths positive");
  }
}

bool SignConfig::apply(const std::string& key, const std::string& value) {
  auto size = [&](std::size_t& field) { field = parse_unsigned(key, value); };
  if (key == "image_height") size(image_height);
  else if (key == "image_width") size(image_width);
  else if (key == "patch_size") size(patch_size);
  else if (key == "feature_dim") size(feature_dim);
  else if (key == "gist_size") size(gist_size);
  else if (key == "gist_sigma") gist_sigma = parse_double(key, value);
  else if (key == "transformer_layers") size(transformer_layers);
  else if (key == "transformer_heads") size(transformer_heads);
  else if (key == "transformer_mlp_hidden") size(transformer_mlp_hidden);
  else if (key == "positional_embeddings") positional_embeddings = parse_bool(key, value);
  else if (key == "mu_hidden") size(mu_hidden);
  else if (key == "weight_hidden") size(weight_hidden);
  else if (key == "lambda") lambda = parse_double(key, value);
  else if (key == "context_enabled") context_enabled = parse_bool(key, value);
  else return false;
  return true;
}

KeyValues SignConfig::to_key_values() const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"image_height", std::to_string(image_height)},
      {"image_width", std::to_string(image_width)},
      {"patch_size", std::to_string(patch_size)},
      {"feature_dim", std::to_string(feature_dim)},
      {"gist_size", std::to_string(gist_size)},
      {"gist_sigma", format_double(gist_sigma)},
      {"transformer_layers", std::to_string(transformer_layers)},
      {"transformer_heads", std::to_string(transformer_heads)},
      {"transformer_mlp_hidden", std::to_string(transformer_mlp_hidden)},
      {"positional_embeddings", b(positional_embeddings)},
      {"mu_hidden", std::to_string(mu_hidden)},
      {"weight_hidden", std::to_string(weight_hidden)},
      {"lambda", format_double(lambda)},
      {"context_enabled", b(context_enabled)},
  };
}

SignConfig SignConfig::from_key_values(const KeyValues& values) {
  SignConfig cfg;
  for (const auto& [k, v] : values) {
    if (!cfg.apply(k, v)) throw Error(ErrorCode::InvalidArgument, "unknown model setting " + k);
  }
  cfg.validate();
  return cfg;
}

bool SignConfig::same_architecture(const SignConfig& o) const {
  SignConfig a = *this;
  a.lambda = o.lambda;
  a.context_enabled = o.context_enabled;
  return a == o;
}

}  // namespace sign::model
