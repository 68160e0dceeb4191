#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hymor/category.hpp"

namespace hymor {

enum class GradeBand { primary, secondary, high };

std::string_view to_string(GradeBand g) noexcept;
std::optional<GradeBand> parse_grade_band(std::string_view s) noexcept;

struct EvalSample {
  std::string image_ref;  // path or URL, verbatim from the manifest
  std::string ground_truth;
  Category gt_category = Category::other;
  std::string dataset;
  std::string split;
  std::optional<GradeBand> grade;

  friend bool operator==(const EvalSample&, const EvalSample&) = default;
};

struct DatasetManifest {
  std::string name;
  Granularity granularity = Granularity::coarse;
  std::vector<EvalSample> samples;
  std::size_t class_count = 0;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// One object of a textbook-style test set: a name plus its images.
struct TextbookObjectRecord {
  std::string object_name;
  GradeBand grade_band = GradeBand::primary;
  std::vector<std::string> image_refs;
  Category category = Category::other;
};

enum class MissingImagePolicy { error, warn_and_drop, skip_check };

struct ManifestLoadOptions {
  MissingImagePolicy missing_images = MissingImagePolicy::error;
  // Relative image paths resolve against this directory; defaults to the
  // manifest's own directory when loading from a file.
  std::optional<std::filesystem::path> base_dir;
  std::optional<std::string> name;
  std::optional<Granularity> granularity;
};

bool is_remote_ref(std::string_view ref) noexcept;

// JSONL rows {"image", "label", "category", "dataset"?, "split"?, "grade"?}.
// Throws ManifestError naming the offending line.
DatasetManifest parse_manifest(std::istream& in, const ManifestLoadOptions& options);
DatasetManifest load_manifest(const std::filesystem::path& path, ManifestLoadOptions options = {});

void save_manifest(const DatasetManifest& manifest, std::ostream& out);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Builds a manifest from already-validated samples; computes class_count and
// default name/granularity.
DatasetManifest make_manifest(std::vector<EvalSample> samples, std::optional<std::string> name = std::nullopt,
                              std::optional<Granularity> granularity = std::nullopt);

// JSONL rows {"object", "grade", "images": [...], "category"?}.
std::vector<TextbookObjectRecord> parse_textbook_records(std::istream& in);
// One sample per image; dataset = name, split = "test".
DatasetManifest manifest_from_textbook(const std::vector<TextbookObjectRecord>& records, const std::string& name);

struct BucketCount {
  std::size_t samples = 0;
  std::size_t classes = 0;

  friend bool operator==(const BucketCount&, const BucketCount&) = default;
};

struct ManifestStats {
  std::string name;
  Granularity granularity = Granularity::coarse;
  std::size_t samples = 0;
  std::size_t classes = 0;
  std::map<std::string, BucketCount> per_split;
  std::map<std::string, BucketCount> per_dataset;
  // primary, secondary, high, unspecified; always all four.
  std::array<BucketCount, 4> per_grade{};
  // animal, plant, other.
  std::array<std::size_t, 3> per_category{};

  double images_per_class() const noexcept {
    return classes == 0 ? 0.0 : static_cast<double>(samples) / static_cast<double>(classes);
  }
  friend bool operator==(const ManifestStats&, const ManifestStats&) = default;
};

ManifestStats summarize(const DatasetManifest& manifest);
std::string render_stats(const ManifestStats& stats);
nlohmann::json to_json(const ManifestStats& stats);

// Stratified by label with largest-remainder quotas; deterministic for a
// given seed. Samples keep their original relative order.
DatasetManifest sample_subset(const DatasetManifest& manifest, std::size_t n, std::uint64_t seed);

}  // namespace hymor
