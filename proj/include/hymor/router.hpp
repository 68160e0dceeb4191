#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "hymor/centroid_index.hpp"
#include "hymor/errors.hpp"
#include "hymor/gateway.hpp"

namespace hymor {

using CategorySet = std::set<Category>;

inline const CategorySet kDefaultSpecialized{Category::animal, Category::plant};

struct RouterConfig {
  // Inclusive: similarity >= threshold adopts the fine label. No default.
  double threshold = 0.0;
  CategorySet specialized_categories = kDefaultSpecialized;
  std::filesystem::path index_path;
  // Embedding or search failure returns the coarse label instead of failing.
  bool degrade_on_retrieval_error = true;

  // Throws ConfigError: threshold in [-1, 1], specialized excludes other.
  void validate() const;
};

enum class Decision { direct_coarse, fine_adopted, fallback_below_threshold, fallback_degenerate };
enum class Source { mllm, centroid_retrieval };
enum class Stage { coarse, embed, search };

std::string_view to_string(Decision d) noexcept;
std::string_view to_string(Source s) noexcept;
std::string_view to_string(Stage s) noexcept;
std::optional<Decision> parse_decision(std::string_view s) noexcept;

// Routing kernel. Truth table (S = category in `specialized`):
//
//   category  retrieval                  decision
//   !S        anything                   direct_coarse
//   S         none (not run / failed)    fallback_degenerate
//   S         degenerate (no_match)      fallback_degenerate
//   S         similarity <  threshold    fallback_below_threshold
//   S         similarity >= threshold    fine_adopted
Decision decide(Category category, const std::optional<Match>& match, double threshold,
                const CategorySet& specialized = kDefaultSpecialized) noexcept;

struct StageTimings {
  double coarse_ms = 0.0;
  double embed_ms = 0.0;
  double search_ms = 0.0;
  double total_ms = 0.0;
};

struct RoutingTrace {
  CoarsePrediction coarse;
  std::optional<Match> retrieval;
  Decision decision = Decision::direct_coarse;
  double threshold = 0.0;
  StageTimings timings;
  // Retrieval failed and the coarse label was returned instead.
  std::optional<std::string> degraded;
};

struct RecognitionResult {
  std::string label;
  Granularity granularity = Granularity::coarse;
  Source source = Source::mllm;
  Category category = Category::other;
  // Present iff retrieval produced a usable match.
  std::optional<double> similarity;
  RoutingTrace trace;
};

// Pipeline failure that could not be degraded, tagged with the stage that failed.
class RouterError : public Error {
 public:
  RouterError(Stage stage, ErrorKind kind, const std::string& detail)
      : Error(kind, std::string(to_string(stage)) + " stage failed: " + detail), stage_(stage) {}
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

class Router {
 public:
  Router(RouterConfig cfg, CoarseRecognizer& recognizer, ImageEmbedder& embedder)
      : cfg_(std::move(cfg)), recognizer_(recognizer), embedder_(embedder) {}

  const RouterConfig& config() const noexcept { return cfg_; }

  // Reentrant; the index is only read.
  RecognitionResult recognize(const CentroidIndex& index, const ImagePayload& image) const;

 private:
  RouterConfig cfg_;
  CoarseRecognizer& recognizer_;
  ImageEmbedder& embedder_;
};

// Empty when the result's fields agree with its trace decision and
// threshold; otherwise a description of the first inconsistency.
std::optional<std::string> check_consistency(const RecognitionResult& result);

struct JsonOptions {
  bool include_trace = true;
  // raw_response is cut to this many bytes; 0 keeps it whole.
  std::size_t raw_response_limit = 0;
};

nlohmann::json to_json(const RecognitionResult& result, const JsonOptions& options = {});

// Structural check against docs/recognition_result.schema.json. Returns the
// list of violations (empty when valid).
std::vector<std::string> validate_recognition_json(const nlohmann::json& doc);

}  // namespace hymor
