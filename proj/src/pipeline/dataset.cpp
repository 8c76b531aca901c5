#include "sign/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <random>
#include <sstream>

#include "sign/error.hpp"

namespace sign::pipeline {
namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void bad_line(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::InvalidArgument, "manifest line " + std::to_string(line) + ": " + what);
}

Record parse_record(const std::string& text, std::size_t line) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    bad_line(line, std::string("invalid JSON (") + e.what() + ")");
  }
  if (!j.is_object()) bad_line(line, "expected a JSON object");
  Record r;
  try {
    if (!j.contains("image_path")) bad_line(line, "missing image_path");
    if (!j.contains("gaze_seconds")) bad_line(line, "missing gaze_seconds");
    r.image_path = j.at("image_path").get<std::string>();
    r.gaze_seconds = j.at("gaze_seconds").get<double>();
    r.id = j.contains("id") ? j.at("id").get<std::string>() : "line" + std::to_string(line);
    if (j.contains("context_path") && !j.at("context_path").is_null()) {
      r.context_path = std::filesystem::path(j.at("context_path").get<std::string>());
    }
    if (j.contains("split_tag")) r.split_tag = j.at("split_tag").get<std::string>();
  } catch (const json::exception& e) {
    bad_line(line, std::string("wrong field type (") + e.what() + ")");
  }
  if (!(r.gaze_seconds > 0.0) || !std::isfinite(r.gaze_seconds)) {
    bad_line(line, "gaze_seconds must be a positive finite number");
  }
  return r;
}

// Uniform index in [0, bound) from 53 random bits; identical on every platform.
std::size_t draw_below(std::mt19937_64& rng, std::size_t bound) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::min(bound - 1, static_cast<std::size_t>(u * static_cast<double>(bound)));
}

void shuffle(std::vector<std::size_t>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw_below(rng, i)]);
}

}  // namespace

std::filesystem::path Manifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
  Manifest m;
  m.base_dir = base_dir;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    m.records.push_back(parse_record(line, n));
  }
  return m;
}

std::string format_manifest(const Manifest& manifest) {
  std::string out;
  for (const Record& r : manifest.records) {
    json j;
    j["id"] = r.id;
    j["image_path"] = r.image_path.generic_string();
    if (r.context_path) j["context_path"] = r.context_path->generic_string();
    j["gaze_seconds"] = r.gaze_seconds;
    j["split_tag"] = r.split_tag;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open manifest " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  Manifest m = parse_manifest(text.str(), path.parent_path());
  for (const Record& r : m.records) {
    for (const auto* p : {&r.image_path, r.context_path ? &*r.context_path : nullptr}) {
      if (p && !std::filesystem::is_regular_file(m.resolve(*p))) {
        throw Error(ErrorCode::Io, "record " + r.id + ": file " + m.resolve(*p).string() + " does not exist");
      }
    }
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  out << format_manifest(manifest);
  if (!out) throw Error(ErrorCode::Io, "cannot write manifest " + path.string());
}

std::vector<std::size_t> Split::fold_training(std::size_t f) const {
  const auto& held = folds.at(f);
  std::vector<std::size_t> out;
  out.reserve(train.size() - held.size());
  for (std::size_t i : train) {
    if (!std::binary_search(held.begin(), held.end(), i)) out.push_back(i);
  }
  return out;
}

Split kfold_split(const Manifest& manifest, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k-fold split needs k >= 1");
  const std::size_t n = manifest.records.size();
  std::size_t tagged = 0;
  for (const Record& r : manifest.records) {
    if (r.split_tag == "train" || r.split_tag == "test") {
      ++tagged;
    } else if (!r.split_tag.empty()) {
      throw Error(ErrorCode::InvalidArgument, "record " + r.id + " has unknown split tag '" + r.split_tag + "'");
    }
  }
  if (tagged != 0 && tagged != n) {
    throw Error(ErrorCode::InvalidArgument, "split tags must be set on every record or on none");
  }

  Split s;
  if (tagged == n && n > 0) {
    for (std::size_t i = 0; i < n; ++i) (manifest.records[i].split_tag == "test" ? s.test : s.train).push_back(i);
  } else {
    if (n < 2) throw Error(ErrorCode::TooFewRecords, "need at least 2 records for a train/test split");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, derive_seed(seed, 0));
    const std::size_t n_test = std::max<std::size_t>(1, (n + 5) / 10);
    s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(s.test.begin(), s.test.end());
    std::sort(s.train.begin(), s.train.end());
  }
  if (s.train.size() < k) {
    throw Error(ErrorCode::TooFewRecords, std::to_string(s.train.size()) + " training records cannot form " +
                                              std::to_string(k) + " folds");
  }

  s.folds.resize(k);
  if (k > 1) {
    std::vector<std::size_t> order = s.train;
    shuffle(order, derive_seed(seed, 1));
    for (std::size_t p = 0; p < order.size(); ++p) s.folds[p % k].push_back(order[p]);
    for (auto& f : s.folds) std::sort(f.begin(), f.end());
  }
  return s;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace sign::pipeline
