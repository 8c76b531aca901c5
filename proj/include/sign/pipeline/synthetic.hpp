#pragma once

// Procedural scenes with known scan-path ground truth.
//
// Each scene is a grayscale image of bright Gaussian blobs over a noisy
// background. Region saliency is s_j = floor + I_j^gamma, where I_j is the
// mean intensity of patch j. The first-fixation distribution and the
// transition affinities are both proportional to saliency, with infinite
// inhibition of return. Local log-durations are mu_j = a + b * I_j and the
// gist duration is mu0 = c + d * mean(image) + e * mean(context).
//
// Region weights come from exact enumeration when the number of paths is
// within enumeration_limit, and from Monte-Carlo visit frequencies otherwise.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sign/gaze.hpp"
#include "sign/imaging.hpp"
#include "sign/keyvalue.hpp"
#include "sign/pipeline/dataset.hpp"

namespace sign::pipeline {

struct SyntheticSpec {
  std::size_t image_size = 128;
  std::size_t patch_size = 16;
  std::size_t min_blobs = 1;
  std::size_t max_blobs = 4;
  double background = 0.15;
  double background_noise = 0.05;
  double blob_amplitude_min = 0.5;
  double blob_amplitude_max = 0.85;
  double blob_sigma_min = 5.0;
  double blob_sigma_max = 12.0;

  double saliency_floor = 0.05;
  double saliency_gamma = 2.0;
  double mu_intercept = 0.0;
  double mu_slope = 1.5;
  double mu0_intercept = 0.3;
  double mu0_image_slope = 1.0;
  double mu0_context_slope = 0.5;

  std::size_t max_length = 4;
  double noise_sigma = 0.05;
  std::size_t train_count = 500;
  std::size_t test_count = 50;
  bool with_context = true;
  std::size_t mc_samples = 20000;
  std::uint64_t enumeration_limit = 1'000'000;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t grid() const { return image_size / patch_size; }
  [[nodiscard]] std::size_t regions() const { return grid() * grid(); }
  [[nodiscard]] std::size_t count() const { return train_count + test_count; }

  void validate() const;
  bool apply(const std::string& key, const std::string& value);
  [[nodiscard]] KeyValues to_key_values() const;
  [[nodiscard]] static SyntheticSpec from_key_values(const KeyValues& values);
};

struct SceneTruth {
  std::vector<double> weights;
  std::vector<double> pattern;
  std::vector<double> local_durations;
  double gist_log_duration = 0.0;
  double expected_log_gaze = 0.0;
  bool exact = true;
  // Largest per-region standard error of the weights; 0 when exact.
  double weight_std_error = 0.0;
};

struct Scene {
  imaging::Image image;
  std::optional<imaging::Image> context;
  SceneTruth truth;
  double gaze_seconds = 0.0;
};

// Mean intensity per patch, in [0, 1], row-major.
[[nodiscard]] std::vector<double> patch_intensities(const imaging::Image& image, std::size_t patch_size);

[[nodiscard]] gaze::TransitionKernel saliency_kernel(const SyntheticSpec& spec, std::span<const double> intensities);

// Ground truth for an arbitrary image under the generative process a SyntheticSpec describes.
[[nodiscard]] SceneTruth scene_truth(const SyntheticSpec& spec, const imaging::Image& image,
                                     const std::optional<imaging::Image>& context, std::uint64_t mc_seed);

// Scene number `index` of the dataset; depends only on (spec, index).
[[nodiscard]] Scene make_scene(const SyntheticSpec& spec, std::size_t index);

struct TruthRecord {
  std::string id;
  SceneTruth truth;
};

struct SyntheticDataset {
  Manifest manifest;
  std::vector<TruthRecord> truth;
};

// Writes images/, manifest.jsonl, truth.jsonl and spec.cfg under out_dir.
// Output bytes depend only on the spec.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

void save_truth(const std::filesystem::path& path, const std::vector<TruthRecord>& truth);
[[nodiscard]] std::vector<TruthRecord> load_truth(const std::filesystem::path& path);

}  // namespace sign::pipeline
