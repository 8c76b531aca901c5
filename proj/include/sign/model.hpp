#pragma once

// The gaze network: a gist branch predicting the initial log-duration mu0 and a
// local branch that assigns every image patch a log-duration mu_j and a weight
// w_j in (0, 1). The prediction is g = mu0 + sum_j mu_j * w_j (log-seconds).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sign/gaze.hpp"
#include "sign/imaging.hpp"
#include "sign/keyvalue.hpp"
#include "sign/nn/layers.hpp"

namespace sign::model {

struct SignConfig {
  std::size_t image_height = 128;
  std::size_t image_width = 128;
  std::size_t patch_size = 16;
  std::size_t feature_dim = 32;
  std::size_t gist_size = 32;
  double gist_sigma = 4.0;
  std::size_t transformer_layers = 2;
  std::size_t transformer_heads = 4;
  std::size_t transformer_mlp_hidden = 64;
  bool positional_embeddings = true;
  std::size_t mu_hidden = 32;
  std::size_t weight_hidden = 32;
  double lambda = 0.0;
  bool context_enabled = true;

  // Throws InvalidArgument or IndivisibleDims.
  void validate() const;
  [[nodiscard]] std::size_t grid_rows() const { return image_height / patch_size; }
  [[nodiscard]] std::size_t grid_cols() const { return image_width / patch_size; }
  [[nodiscard]] std::size_t regions() const { return grid_rows() * grid_cols(); }

  // Returns false for keys this struct does not own.
  bool apply(const std::string& key, const std::string& value);
  [[nodiscard]] KeyValues to_key_values() const;
  // Unknown keys are rejected.
  [[nodiscard]] static SignConfig from_key_values(const KeyValues& values);

  // Equal in every field that fixes parameter shapes or input layout, that is
  // all fields except lambda and context_enabled.
  [[nodiscard]] bool same_architecture(const SignConfig& other) const;
  friend bool operator==(const SignConfig&, const SignConfig&) = default;
};

// Image converted to model tensors: grayscale, resized to the configured size.
struct PreparedInput {
  std::size_t patch_size = 0;
  std::size_t regions = 0;
  nn::Tensor patches;      // [regions, P, P, 1]
  nn::Tensor gist;         // [gist, gist, 1]
  nn::Tensor context_gist; // [gist, gist, 1]; zeros when absent
  bool has_context = false;
};

[[nodiscard]] PreparedInput prepare_input(const imaging::ImageF& image,
                                          const std::optional<imaging::ImageF>& context,
                                          const SignConfig& cfg);
[[nodiscard]] PreparedInput prepare_input(const imaging::Image& image, const std::optional<imaging::Image>& context,
                                          const SignConfig& cfg);

struct SignOutput {
  double predicted_log_gaze = 0.0;
  double gist_term = 0.0;
  double local_term = 0.0;
  std::vector<double> weights;
  std::vector<double> pattern;
  std::vector<double> local_durations;
};

// Graph handles for a batch, for training.
struct BatchForward {
  nn::Var g;          // [B]
  nn::Var gist_term;  // [B]
  nn::Var local_term; // [B]
  nn::Var weights;    // [B, N]
  nn::Var mu;         // [B, N]
  std::size_t batch = 0;
  std::size_t regions = 0;

  [[nodiscard]] SignOutput output(std::size_t i) const;
};

class SignModel {
 public:
  SignModel(const SignConfig& cfg, std::uint64_t seed);
  // Layers share parameter nodes with the registry, so copies would alias.
  SignModel(const SignModel&) = delete;
  SignModel& operator=(const SignModel&) = delete;
  SignModel(SignModel&&) = default;
  SignModel& operator=(SignModel&&) = default;

  [[nodiscard]] const SignConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] nn::ParameterSet& parameters() noexcept { return params_; }
  [[nodiscard]] const nn::ParameterSet& parameters() const noexcept { return params_; }

  // Throws ConfigMismatch for inputs prepared under a different layout,
  // EmptyBatch for an empty batch.
  [[nodiscard]] BatchForward forward_batch(std::span<const PreparedInput* const> batch) const;
  [[nodiscard]] SignOutput forward(const PreparedInput& input) const;
  [[nodiscard]] SignOutput forward(const imaging::ImageF& image, const std::optional<imaging::ImageF>& context) const;

  // Writes <stem>.ckpt and <stem>.cfg.
  void save(const std::filesystem::path& stem) const;
  // Throws ConfigMismatch when the stored architecture differs from cfg.
  [[nodiscard]] static SignModel load(const std::filesystem::path& stem, const SignConfig& cfg);
  // Architecture taken from the sidecar file.
  [[nodiscard]] static SignModel load(const std::filesystem::path& stem);

  // Named sub-networks, exposed for tests and diagnostics.
  nn::ConvNet local_cnn;
  nn::ConvNet gist_cnn;
  nn::Mlp mu0_head;
  nn::Mlp mu_head;
  nn::TransformerEncoder encoder;
  nn::Mlp weight_head;

 private:
  SignConfig cfg_;
  nn::ParameterSet params_;
};

// Mean squared error on log-gaze plus lambda * mean |w| over all regions.
// Throws EmptyBatch, or ShapeMismatch when targets and batch differ in length.
[[nodiscard]] nn::Var sign_loss(const BatchForward& out, std::span<const double> targets, double lambda);
[[nodiscard]] double sign_loss(std::span<const SignOutput> outputs, std::span<const double> targets, double lambda);

[[nodiscard]] gaze::WeightMap extract_pattern(const SignOutput& output);

// Ensemble prediction: member log-gaze values are averaged, then exponentiated
// (a geometric mean in seconds). Members run in parallel. Throws EmptyEnsemble
// or ConfigMismatch when a member's architecture differs from cfg.
[[nodiscard]] double predict_log_gaze(const PreparedInput& input, const SignConfig& cfg,
                                      std::span<const SignModel> ensemble);
[[nodiscard]] double predict_gaze_seconds(const imaging::ImageF& image, const std::optional<imaging::ImageF>& context,
                                          const SignConfig& cfg, std::span<const SignModel> ensemble);
// Mean of member patterns; sums to 1.
[[nodiscard]] std::vector<double> ensemble_pattern(const PreparedInput& input, const SignConfig& cfg,
                                                   std::span<const SignModel> ensemble);

}  // namespace sign::model
