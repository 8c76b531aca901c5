#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sign::pipeline {

// One manifest line. Paths are stored relative to the manifest's directory
// and resolved against it on load.
struct Record {
  std::string id;
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> context_path;
  double gaze_seconds = 0.0;
  std::string split_tag;  // "train", "test" or empty

  friend bool operator==(const Record&, const Record&) = default;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<Record> records;

  [[nodiscard]] std::filesystem::path resolve(const std::filesystem::path& p) const;
};

// JSON Lines; blank lines are skipped. Throws InvalidArgument naming the line
// for malformed JSON, missing fields or gaze_seconds that is not a positive
// finite number.
[[nodiscard]] Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
[[nodiscard]] std::string format_manifest(const Manifest& manifest);
// Also checks that every referenced file exists (Io otherwise).
[[nodiscard]] Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  // Validation folds over train; fold f trains on train minus folds[f].
  // A single fold (k = 1) is empty: the model trains on all of train.
  std::vector<std::vector<std::size_t>> folds;

  [[nodiscard]] std::vector<std::size_t> fold_training(std::size_t f) const;
};

// Records tagged "train"/"test" keep their tags. When no record is tagged,
// a seeded 90/10 train/test split is drawn first. Throws TooFewRecords when
// there are fewer than k training records (or none for testing when the split
// is drawn), InvalidArgument when k is 0 or tags are mixed with untagged records.
[[nodiscard]] Split kfold_split(const Manifest& manifest, std::size_t k, std::uint64_t seed);

// Stateless 64-bit mixer used to derive independent seeds.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace sign::pipeline
