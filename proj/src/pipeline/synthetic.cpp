#include "sign/pipeline/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <random>
#include <sstream>

#include "sign/error.hpp"
#include "sign/parallel.hpp"

namespace sign::pipeline {
namespace {

using json = nlohmann::ordered_json;

class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t between(std::size_t lo, std::size_t hi) {
    return lo + std::min(hi - lo, static_cast<std::size_t>(uniform() * static_cast<double>(hi - lo + 1)));
  }
  // Box-Muller; spelled out so the stream is the same on every standard library.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 rng_;
};

imaging::Image render(const SyntheticSpec& spec, SceneRng& rng) {
  const std::size_t n = spec.image_size;
  std::vector<double> px(n * n);
  for (double& v : px) v = spec.background + spec.background_noise * (2.0 * rng.uniform() - 1.0);
  const std::size_t blobs = rng.between(spec.min_blobs, spec.max_blobs);
  for (std::size_t b = 0; b < blobs; ++b) {
    const double cy = rng.uniform(0.0, static_cast<double>(n));
    const double cx = rng.uniform(0.0, static_cast<double>(n));
    const double sigma = rng.uniform(spec.blob_sigma_min, spec.blob_sigma_max);
    const double amp = rng.uniform(spec.blob_amplitude_min, spec.blob_amplitude_max);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t y = 0; y < n; ++y) {
      const double dy = static_cast<double>(y) + 0.5 - cy;
      for (std::size_t x = 0; x < n; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx;
        px[y * n + x] += amp * std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  for (double& v : px) v = std::clamp(v, 0.0, 1.0);
  return imaging::to_bytes(imaging::ImageF(n, n, 1, std::move(px)));
}

double mean_intensity(const imaging::Image& image) {
  const imaging::ImageF f = imaging::convert_channels(imaging::to_float(image), 1);
  double s = 0.0;
  for (double v : f.pixels()) s += v;
  return s / static_cast<double>(f.pixels().size());
}

std::string scene_id(std::size_t i) {
  std::ostringstream os;
  os << "scene_";
  os.width(5);
  os.fill('0');
  os << i;
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

}  // namespace

void SyntheticSpec::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw Error(ErrorCode::IndivisibleDims, "image_size " + std::to_string(image_size) +
                                                " is not a multiple of patch_size " + std::to_string(patch_size));
  }
  if (min_blobs > max_blobs) throw Error(ErrorCode::InvalidArgument, "min_blobs exceeds max_blobs");
  if (max_length == 0) throw Error(ErrorCode::InvalidArgument, "max_length must be at least 1");
  if (!(saliency_floor > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "saliency_floor must be positive so every region stays reachable");
  }
  if (!(noise_sigma >= 0.0) || !(blob_sigma_min > 0.0) || blob_sigma_min > blob_sigma_max ||
      blob_amplitude_min > blob_amplitude_max) {
    throw Error(ErrorCode::InvalidArgument, "noise and blob ranges must be ordered and non-negative");
  }
  if (mc_samples < 2) throw Error(ErrorCode::InvalidArgument, "mc_samples must be at least 2");
}

bool SyntheticSpec::apply(const std::string& key, const std::string& value) {
  auto size = [&](std::size_t& f) { f = parse_unsigned(key, value); };
  auto real = [&](double& f) { f = parse_double(key, value); };
  if (key == "image_size") size(image_size);
  else if (key == "patch_size") size(patch_size);
  else if (key == "min_blobs") size(min_blobs);
  else if (key == "max_blobs") size(max_blobs);
  else if (key == "background") real(background);
  else if (key == "background_noise") real(background_noise);
  else if (key == "blob_amplitude_min") real(blob_amplitude_min);
  else if (key == "blob_amplitude_max") real(blob_amplitude_max);
  else if (key == "blob_sigma_min") real(blob_sigma_min);
  else if (key == "blob_sigma_max") real(blob_sigma_max);
  else if (key == "saliency_floor") real(saliency_floor);
  else if (key == "saliency_gamma") real(saliency_gamma);
  else if (key == "mu_intercept") real(mu_intercept);
  else if (key == "mu_slope") real(mu_slope);
  else if (key == "mu0_intercept") real(mu0_intercept);
  else if (key == "mu0_image_slope") real(mu0_image_slope);
  else if (key == "mu0_context_slope") real(mu0_context_slope);
  else if (key == "max_length") size(max_length);
  else if (key == "noise_sigma") real(noise_sigma);
  else if (key == "train_count") size(train_count);
  else if (key == "test_count") size(test_count);
  else if (key == "with_context") with_context = parse_bool(key, value);
  else if (key == "mc_samples") size(mc_samples);
  else if (key == "enumeration_limit") enumeration_limit = parse_unsigned(key, value);
  else if (key == "seed") seed = parse_unsigned(key, value);
  else return false;
  return true;
}

KeyValues SyntheticSpec::to_key_values() const {
  auto n = [](std::uint64_t v) { return std::to_string(v); };
  return {
      {"image_size", n(image_size)},
      {"patch_size", n(patch_size)},
      {"min_blobs", n(min_blobs)},
      {"max_blobs", n(max_blobs)},
      {"background", format_double(background)},
      {"background_noise", format_double(background_noise)},
      {"blob_amplitude_min", format_double(blob_amplitude_min)},
      {"blob_amplitude_max", format_double(blob_amplitude_max)},
      {"blob_sigma_min", format_double(blob_sigma_min)},
      {"blob_sigma_max", format_double(blob_sigma_max)},
      {"saliency_floor", format_double(saliency_floor)},
      {"saliency_gamma", format_double(saliency_gamma)},
      {"mu_intercept", format_double(mu_intercept)},
      {"mu_slope", format_double(mu_slope)},
      {"mu0_intercept", format_double(mu0_intercept)},
      {"mu0_image_slope", format_double(mu0_image_slope)},
      {"mu0_context_slope", format_double(mu0_context_slope)},
      {"max_length", n(max_length)},
      {"noise_sigma", format_double(noise_sigma)},
      {"train_count", n(train_count)},
      {"test_count", n(test_count)},
      {"with_context", with_context ? "true" : "false"},
      {"mc_samples", n(mc_samples)},
      {"enumeration_limit", n(enumeration_limit)},
      {"seed", n(seed)},
  };
}

SyntheticSpec SyntheticSpec::from_key_values(const KeyValues& values) {
  SyntheticSpec s;
  for (const auto& [k, v] : values) {
    if (!s.apply(k, v)) throw Error(ErrorCode::InvalidArgument, "unknown synthetic-data setting " + k);
  }
  s.validate();
  return s;
}

std::vector<double> patch_intensities(const imaging::Image& image, std::size_t patch_size) {
  const imaging::ImageF gray = imaging::convert_channels(imaging::to_float(image), 1);
  const auto grid = imaging::patchify(gray, patch_size);
  std::vector<double> out;
  out.reserve(grid.size());
  for (const auto& patch : grid.patches) {
    double s = 0.0;
    for (double v : patch) s += v;
    out.push_back(s / static_cast<double>(patch.size()));
  }
  return out;
}

gaze::TransitionKernel saliency_kernel(const SyntheticSpec& spec, std::span<const double> intensities) {
  const std::size_t n = intensities.size();
  std::vector<double> saliency(n);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    saliency[j] = spec.saliency_floor + std::pow(intensities[j], spec.saliency_gamma);
    total += saliency[j];
  }
  std::vector<double> affinity(n * n);
  for (std::size_t i = 0; i < n; ++i) std::copy(saliency.begin(), saliency.end(), affinity.begin() + i * n);
  std::vector<double> initial(n);
  for (std::size_t j = 0; j < n; ++j) initial[j] = saliency[j] / total;
  return gaze::TransitionKernel(n, std::move(affinity), std::move(initial));
}

SceneTruth scene_truth(const SyntheticSpec& spec, const imaging::Image& image,
                       const std::optional<imaging::Image>& context, std::uint64_t mc_seed) {
  const std::vector<double> intensity = patch_intensities(image, spec.patch_size);
  const std::size_t rows = image.height() / spec.patch_size;
  const std::size_t cols = image.width() / spec.patch_size;
  const gaze::GazeField field(rows, cols, 1, intensity);
  const gaze::TransitionKernel kernel = saliency_kernel(spec, intensity);

  SceneTruth t;
  const std::size_t n = field.size();
  const std::uint64_t paths = gaze::ordered_path_count(n, gaze::effective_length(n, spec.max_length));
  gaze::WeightMap w;
  if (paths <= spec.enumeration_limit) {
    w = gaze::enumerate_weights(field, kernel, spec.max_length);
  } else {
    auto mc = gaze::monte_carlo_weights(field, kernel, spec.max_length, spec.mc_samples, mc_seed);
    w = std::move(mc.map);
    t.exact = false;
    t.weight_std_error = mc.max_std_error;
  }
  t.weights = std::move(w.weights);
  t.pattern = std::move(w.pattern);

  t.gist_log_duration = spec.mu0_intercept + spec.mu0_image_slope * mean_intensity(image);
  if (context) t.gist_log_duration += spec.mu0_context_slope * mean_intensity(*context);
  t.expected_log_gaze = t.gist_log_duration;
  t.local_durations.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    t.local_durations[j] = spec.mu_intercept + spec.mu_slope * intensity[j];
    t.expected_log_gaze += t.local_durations[j] * t.weights[j];
  }
  return t;
}

Scene make_scene(const SyntheticSpec& spec, std::size_t index) {
  spec.validate();
  const std::uint64_t scene_seed = derive_seed(spec.seed, index);
  SceneRng rng(scene_seed);
  Scene s;
  s.image = render(spec, rng);
  if (spec.with_context) s.context = render(spec, rng);
  s.truth = scene_truth(spec, s.image, s.context, derive_seed(scene_seed, 1));
  s.gaze_seconds = std::exp(s.truth.expected_log_gaze + spec.noise_sigma * rng.normal());
  return s;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::vector<Scene> scenes(spec.count());
  parallel_for(scenes.size(), [&](std::size_t i) { scenes[i] = make_scene(spec, i); });

  std::filesystem::create_directories(out_dir / "images");
  SyntheticDataset ds;
  ds.manifest.base_dir = out_dir;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    Record r;
    r.id = scene_id(i);
    r.image_path = std::filesystem::path("images") / (r.id + ".pgm");
    imaging::save_image(out_dir / r.image_path, scenes[i].image);
    if (scenes[i].context) {
      r.context_path = std::filesystem::path("images") / (r.id + "_context.pgm");
      imaging::save_image(out_dir / *r.context_path, *scenes[i].context);
    }
    r.gaze_seconds = scenes[i].gaze_seconds;
    r.split_tag = i < spec.train_count ? "train" : "test";
    ds.manifest.records.push_back(std::move(r));
    ds.truth.push_back({ds.manifest.records.back().id, std::move(scenes[i].truth)});
  }
  save_manifest(out_dir / "manifest.jsonl", ds.manifest);
  save_truth(out_dir / "truth.jsonl", ds.truth);
  save_key_values(out_dir / "spec.cfg", spec.to_key_values());
  return ds;
}

void save_truth(const std::filesystem::path& path, const std::vector<TruthRecord>& truth) {
  std::string text;
  for (const TruthRecord& r : truth) {
    json j;
    j["id"] = r.id;
    j["exact"] = r.truth.exact;
    j["weight_std_error"] = r.truth.weight_std_error;
    j["gist_log_duration"] = r.truth.gist_log_duration;
    j["expected_log_gaze"] = r.truth.expected_log_gaze;
    j["weights"] = r.truth.weights;
    j["pattern"] = r.truth.pattern;
    j["local_durations"] = r.truth.local_durations;
    text += j.dump();
    text += '\n';
  }
  write_text(path, text);
}

std::vector<TruthRecord> load_truth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open truth file " + path.string());
  std::vector<TruthRecord> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      TruthRecord r;
      r.id = j.at("id").get<std::string>();
      r.truth.exact = j.at("exact").get<bool>();
      r.truth.weight_std_error = j.at("weight_std_error").get<double>();
      r.truth.gist_log_duration = j.at("gist_log_duration").get<double>();
      r.truth.expected_log_gaze = j.at("expected_log_gaze").get<double>();
      r.truth.weights = j.at("weights").get<std::vector<double>>();
      r.truth.pattern = j.at("pattern").get<std::vector<double>>();
      r.truth.local_durations = j.at("local_durations").get<std::vector<double>>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument,
                  path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace sign::pipeline
