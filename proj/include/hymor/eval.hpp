#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hymor/gateway.hpp"
#include "hymor/manifest.hpp"
#include "hymor/router.hpp"

namespace hymor {

// What the system answered for one image, from a live router or a
// predictions file.
struct Prediction {
  std::string image;
  std::string label;
  Granularity granularity = Granularity::coarse;
  std::optional<double> similarity;
  // Category the chat model routed to; needed for routing accuracy.
  std::optional<Category> category;
  // Routing trace as emitted by to_json(RecognitionResult); null when absent.
  nlohmann::json trace;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

Prediction prediction_from(const RecognitionResult& result, const std::string& image);
nlohmann::json to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& row);

// Predictions JSONL keyed by image reference. Throws ManifestError on bad rows.
std::map<std::string, Prediction> read_predictions(std::istream& in);
std::map<std::string, Prediction> read_predictions(const std::filesystem::path& path);

struct MetricSet {
  bool em = true;
  bool sbert = false;
  bool llm = false;
  bool routing = false;

  // Comma-separated subset of em,sbert,llm,routing, or "all".
  static MetricSet parse(std::string_view spec);
  std::string to_string() const;
};

double judge_score(Rating rating) noexcept;

// Cosine similarity of the two strings' text embeddings.
double semantic_similarity(TextEmbedder& embedder, const std::string& prediction, const std::string& ground_truth);

struct EvalOutcome {
  EvalSample sample;
  std::optional<Prediction> prediction;
  std::optional<bool> em;
  std::optional<double> sbert_sim;
  std::optional<std::string> sbert_error;
  std::optional<Rating> judge;
  std::optional<double> judge_score;
  std::optional<std::string> judge_error;
  // Whole-sample failure (no prediction); excluded from every mean.
  std::optional<std::string> error;

  friend bool operator==(const EvalOutcome&, const EvalOutcome&) = default;
};

std::string outcome_key(const EvalSample& sample);
nlohmann::json to_json(const EvalOutcome& o);
EvalOutcome outcome_from_json(const nlohmann::json& row);

struct RoutingAccuracy {
  std::size_t specialized_total = 0;
  std::size_t specialized_correct = 0;
  std::size_t general_total = 0;
  std::size_t general_correct = 0;

  // nullopt for an empty group (not applicable, never 0).
  std::optional<double> specialized_pct() const;
  std::optional<double> general_pct() const;
};

RoutingAccuracy routing_accuracy(std::span<const EvalOutcome> outcomes,
                                 const CategorySet& specialized = kDefaultSpecialized);

struct MetricRow {
  std::string dataset;
  std::size_t samples = 0;
  std::size_t failed = 0;
  std::size_t sbert_excluded = 0;
  std::size_t llm_excluded = 0;
  std::optional<double> em_pct;
  std::optional<double> sbert_pct;
  std::optional<double> llm_pct;
  RoutingAccuracy routing;
};

enum class Averaging { macro, micro };

struct EvalReport {
  MetricSet metrics;
  Averaging averaging = Averaging::macro;
  std::vector<MetricRow> datasets;  // sorted by name
  MetricRow average;                // dataset "Avg."
  RoutingAccuracy routing;          // pooled over all samples
};

// Outcomes in any order; the report only depends on their content.
EvalReport aggregate(std::span<const EvalOutcome> outcomes, const MetricSet& metrics,
                     Averaging averaging = Averaging::macro);

nlohmann::json to_json(const EvalReport& report);
std::string render_table(const EvalReport& report);

using PredictFn = std::function<Prediction(const EvalSample&)>;

struct EvalDeps {
  PredictFn predict;
  std::shared_ptr<TextEmbedder> text_embedder;  // required for sbert
  std::shared_ptr<PairJudge> judge;             // required for llm
};

struct EvalOptions {
  MetricSet metrics;
  std::size_t concurrency = 4;
  Averaging averaging = Averaging::macro;
  // Per-sample JSONL, append-only; completed samples found there are reused.
  std::optional<std::filesystem::path> outcomes_path;
  // Stop after this many newly computed samples (the rest stay pending).
  std::optional<std::size_t> max_new_samples;
};

struct EvalRun {
  EvalReport report;
  std::vector<EvalOutcome> outcomes;  // manifest order; pending samples omitted
  std::size_t reused = 0;
  std::size_t computed = 0;
  std::size_t pending = 0;
};

EvalOutcome evaluate_sample(const EvalSample& sample, const EvalDeps& deps, const MetricSet& metrics);

EvalRun run_eval(const DatasetManifest& manifest, const EvalDeps& deps, const EvalOptions& options);

// Prediction source backed by a predictions file; missing images throw DataError.
PredictFn predictions_lookup(std::map<std::string, Prediction> predictions);

}  // namespace hymor
