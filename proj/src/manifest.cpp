#include "hymor/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "hymor/errors.hpp"
#include "hymor/log.hpp"

namespace hymor {

std::string_view to_string(GradeBand g) noexcept {
  switch (g) {
    case GradeBand::primary: return "primary";
    case GradeBand::secondary: return "secondary";
    case GradeBand::high: return "high";
  }
  return "primary";
}

std::optional<GradeBand> parse_grade_band(std::string_view s) noexcept {
  if (s == "primary") return GradeBand::primary;
  if (s == "secondary") return GradeBand::secondary;
  if (s == "high") return GradeBand::high;
  return std::nullopt;
}

bool is_remote_ref(std::string_view ref) noexcept {
  return ref.rfind("http://", 0) == 0 || ref.rfind("https://", 0) == 0;
}

namespace {

const std::string& required_string(const nlohmann::json& row, const char* key, std::size_t line) {
  if (!row.contains(key)) throw ManifestError(line, std::string("missing field \"") + key + "\"");
  if (!row[key].is_string()) throw ManifestError(line, std::string("field \"") + key + "\" must be a string");
  const auto& v = row[key].get_ref<const std::string&>();
  if (v.empty()) throw ManifestError(line, std::string("field \"") + key + "\" is empty");
  return v;
}

std::string optional_string(const nlohmann::json& row, const char* key, const std::string& fallback,
                            std::size_t line) {
  if (!row.contains(key) || row[key].is_null()) return fallback;
  if (!row[key].is_string()) throw ManifestError(line, std::string("field \"") + key + "\" must be a string");
  return row[key].get<std::string>();
}

bool image_exists(const std::string& ref, const std::optional<std::filesystem::path>& base_dir) {
  if (is_remote_ref(ref)) return true;
  std::filesystem::path p(ref);
  if (p.is_relative() && base_dir) p = *base_dir / p;
  std::error_code ec;
  return std::filesystem::is_regular_file(p, ec);
}

std::size_t grade_slot(const std::optional<GradeBand>& g) {
  return g ? static_cast<std::size_t>(*g) : 3;
}

}  // namespace

DatasetManifest make_manifest(std::vector<EvalSample> samples, std::optional<std::string> name,
                              std::optional<Granularity> granularity) {
  if (samples.empty()) throw DataError("manifest has no samples");
  DatasetManifest m;
  std::set<std::string> labels;
  std::set<std::string> datasets;
  bool all_specialized = true;
  for (const auto& s : samples) {
    labels.insert(s.ground_truth);
    datasets.insert(s.dataset);
    all_specialized = all_specialized && s.gt_category != Category::other;
  }
  m.class_count = labels.size();
  if (name) {
    m.name = *name;
  } else if (datasets.size() == 1) {
    m.name = *datasets.begin();
  } else {
    m.name = "mixed";
  }
  m.granularity = granularity.value_or(all_specialized ? Granularity::fine : Granularity::coarse);
  m.samples = std::move(samples);
  return m;
}

DatasetManifest parse_manifest(std::istream& in, const ManifestLoadOptions& options) {
  const std::string default_dataset = options.name.value_or("default");
  std::vector<EvalSample> samples;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t dropped = 0;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto row = nlohmann::json::parse(text, nullptr, false);
    if (row.is_discarded() || !row.is_object()) throw ManifestError(line, "not a JSON object");

    EvalSample s;
    s.image_ref = required_string(row, "image", line);
    s.ground_truth = required_string(row, "label", line);
    const auto category = parse_category(required_string(row, "category", line));
    if (!category) throw ManifestError(line, "category must be animal, plant or other");
    s.gt_category = *category;
    s.dataset = optional_string(row, "dataset", default_dataset, line);
    s.split = optional_string(row, "split", "test", line);
    if (row.contains("grade") && !row["grade"].is_null()) {
      const auto g = row["grade"].is_string() ? parse_grade_band(row["grade"].get<std::string>()) : std::nullopt;
      if (!g) throw ManifestError(line, "grade must be primary, secondary or high");
      s.grade = g;
    }
    if (!seen.emplace(s.image_ref, s.ground_truth).second) {
      throw ManifestError(line, "duplicate (image, label) row: " + s.image_ref);
    }
    if (options.missing_images != MissingImagePolicy::skip_check && !image_exists(s.image_ref, options.base_dir)) {
      if (options.missing_images == MissingImagePolicy::error) {
        throw ManifestError(line, "image not found: " + s.image_ref);
      }
      log::warn("manifest_image_missing", {{"line", line}, {"image", s.image_ref}});
      ++dropped;
      continue;
    }
    samples.push_back(std::move(s));
  }
  if (in.bad()) throw IoError("failed reading manifest");
  if (samples.empty()) {
    throw DataError(dropped > 0 ? "manifest has no samples with existing images" : "manifest has no samples");
  }
  return make_manifest(std::move(samples), options.name, options.granularity);
}

DatasetManifest load_manifest(const std::filesystem::path& path, ManifestLoadOptions options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  if (!options.base_dir) options.base_dir = path.parent_path();
  return parse_manifest(in, options);
}

void save_manifest(const DatasetManifest& manifest, std::ostream& out) {
  for (const auto& s : manifest.samples) {
    nlohmann::json row = {
        {"image", s.image_ref},
        {"label", s.ground_truth},
        {"category", to_string(s.gt_category)},
        {"dataset", s.dataset},
        {"split", s.split},
    };
    if (s.grade) row["grade"] = to_string(*s.grade);
    out << row.dump() << '\n';
  }
  if (!out) throw IoError("failed writing manifest");
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  save_manifest(manifest, out);
}

std::vector<TextbookObjectRecord> parse_textbook_records(std::istream& in) {
  std::vector<TextbookObjectRecord> records;
  std::set<std::string> names;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto row = nlohmann::json::parse(text, nullptr, false);
    if (row.is_discarded() || !row.is_object()) throw ManifestError(line, "not a JSON object");
    TextbookObjectRecord r;
    r.object_name = required_string(row, "object", line);
    const auto grade = parse_grade_band(required_string(row, "grade", line));
    if (!grade) throw ManifestError(line, "grade must be primary, secondary or high");
    r.grade_band = *grade;
    if (!row.contains("images") || !row["images"].is_array() || row["images"].empty()) {
      throw ManifestError(line, "field \"images\" must be a non-empty array");
    }
    for (const auto& img : row["images"]) {
      if (!img.is_string() || img.get_ref<const std::string&>().empty()) {
        throw ManifestError(line, "image references must be non-empty strings");
      }
      r.image_refs.push_back(img.get<std::string>());
    }
    if (row.contains("category")) {
      const auto c = row["category"].is_string() ? parse_category(row["category"].get<std::string>()) : std::nullopt;
      if (!c) throw ManifestError(line, "category must be animal, plant or other");
      r.category = *c;
    }
    if (!names.insert(r.object_name).second) throw ManifestError(line, "duplicate object " + r.object_name);
    records.push_back(std::move(r));
  }
  return records;
}

DatasetManifest manifest_from_textbook(const std::vector<TextbookObjectRecord>& records, const std::string& name) {
  std::vector<EvalSample> samples;
  for (const auto& r : records) {
    for (const auto& img : r.image_refs) {
      samples.push_back(EvalSample{img, r.object_name, r.category, name, "test", r.grade_band});
    }
  }
  return make_manifest(std::move(samples), name, Granularity::coarse);
}

ManifestStats summarize(const DatasetManifest& manifest) {
  ManifestStats st;
  st.name = manifest.name;
  st.granularity = manifest.granularity;
  st.samples = manifest.samples.size();

  std::set<std::string> labels;
  std::map<std::string, std::set<std::string>> split_labels;
  std::map<std::string, std::set<std::string>> dataset_labels;
  std::array<std::set<std::string>, 4> grade_labels;
  for (const auto& s : manifest.samples) {
    labels.insert(s.ground_truth);
    ++st.per_split[s.split].samples;
    split_labels[s.split].insert(s.ground_truth);
    ++st.per_dataset[s.dataset].samples;
    dataset_labels[s.dataset].insert(s.ground_truth);
    const auto g = grade_slot(s.grade);
    ++st.per_grade[g].samples;
    grade_labels[g].insert(s.ground_truth);
    ++st.per_category[static_cast<std::size_t>(s.gt_category)];
  }
  st.classes = labels.size();
  for (auto& [k, b] : st.per_split) b.classes = split_labels[k].size();
  for (auto& [k, b] : st.per_dataset) b.classes = dataset_labels[k].size();
  for (std::size_t g = 0; g < 4; ++g) st.per_grade[g].classes = grade_labels[g].size();
  return st;
}

std::string render_stats(const ManifestStats& st) {
  std::string out;
  auto row = [&out](std::string_view key, std::size_t classes, std::size_t samples) {
    out += fmt::format("  {:<24} {:>10} {:>10}\n", key, classes, samples);
  };
  out += fmt::format("Dataset {} ({} granularity)\n", st.name, to_string(st.granularity));
  out += fmt::format("  {:<24} {:>10} {:>10}\n", "", "#classes", "#images");
  row("total", st.classes, st.samples);
  out += fmt::format("  {:<24} {:>21.1f}\n", "images per class", st.images_per_class());
  out += "By split\n";
  for (const auto& [k, b] : st.per_split) row(k, b.classes, b.samples);
  out += "By dataset\n";
  for (const auto& [k, b] : st.per_dataset) row(k, b.classes, b.samples);
  out += "By grade\n";
  static constexpr std::array<std::string_view, 4> kGrades{"primary", "secondary", "high", "unspecified"};
  for (std::size_t g = 0; g < 4; ++g) row(kGrades[g], st.per_grade[g].classes, st.per_grade[g].samples);
  out += "By category\n";
  static constexpr std::array<std::string_view, 3> kCategories{"animal", "plant", "other"};
  for (std::size_t c = 0; c < 3; ++c) out += fmt::format("  {:<24} {:>21}\n", kCategories[c], st.per_category[c]);
  return out;
}

nlohmann::json to_json(const ManifestStats& st) {
  auto bucket = [](const BucketCount& b) { return nlohmann::json{{"classes", b.classes}, {"images", b.samples}}; };
  nlohmann::json splits = nlohmann::json::object();
  for (const auto& [k, b] : st.per_split) splits[k] = bucket(b);
  nlohmann::json datasets = nlohmann::json::object();
  for (const auto& [k, b] : st.per_dataset) datasets[k] = bucket(b);
  return {
      {"name", st.name},
      {"granularity", to_string(st.granularity)},
      {"classes", st.classes},
      {"images", st.samples},
      {"images_per_class", st.images_per_class()},
      {"splits", splits},
      {"datasets", datasets},
      {"grades",
       {{"primary", bucket(st.per_grade[0])},
        {"secondary", bucket(st.per_grade[1])},
        {"high", bucket(st.per_grade[2])},
        {"unspecified", bucket(st.per_grade[3])}}},
      {"categories",
       {{"animal", st.per_category[0]}, {"plant", st.per_category[1]}, {"other", st.per_category[2]}}},
  };
}

DatasetManifest sample_subset(const DatasetManifest& manifest, std::size_t n, std::uint64_t seed) {
  const std::size_t total = manifest.samples.size();
  if (n == 0) throw DataError("subset size must be positive");
  if (n > total) {
    throw DataError("subset size " + std::to_string(n) + " exceeds " + std::to_string(total) + " samples");
  }

  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < total; ++i) by_label[manifest.samples[i].ground_truth].push_back(i);

  std::mt19937_64 rng(seed);
  // Portable Fisher-Yates; std::shuffle's draw sequence is implementation-defined.
  auto shuffle = [&rng](auto& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
  };

  struct Quota {
    const std::string* label;
    std::size_t take;
    std::uint64_t remainder;  // numerator of the fractional part, over `total`
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [label, idx] : by_label) {
    const std::uint64_t exact = static_cast<std::uint64_t>(n) * idx.size();
    const auto take = static_cast<std::size_t>(exact / total);
    quotas.push_back({&label, take, static_cast<std::uint64_t>(exact % total)});
    assigned += take;
  }
  shuffle(quotas);
  std::stable_sort(quotas.begin(), quotas.end(), [](const Quota& a, const Quota& b) { return a.remainder > b.remainder; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++quotas[k].take;

  std::sort(quotas.begin(), quotas.end(), [](const Quota& a, const Quota& b) { return *a.label < *b.label; });
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  for (const auto& q : quotas) {
    auto idx = by_label[*q.label];
    shuffle(idx);
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(q.take));
  }
  std::sort(chosen.begin(), chosen.end());

  std::vector<EvalSample> samples;
  samples.reserve(n);
  for (auto i : chosen) samples.push_back(manifest.samples[i]);
  return make_manifest(std::move(samples), manifest.name, manifest.granularity);
}

}  // namespace hymor
