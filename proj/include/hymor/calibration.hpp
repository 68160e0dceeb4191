#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hymor/eval.hpp"
#include "hymor/router.hpp"

namespace hymor {

// Everything needed to replay the routing decision for one validation image
// at any threshold.
struct CalibrationSample {
  std::string ground_truth;
  Category coarse_category = Category::other;
  std::string coarse_label;
  std::optional<Match> retrieval;
};

// Score of a final label against the ground truth, higher is better.
using LabelScorer = std::function<double(const std::string& prediction, const std::string& ground_truth)>;

struct CalibrationOptions {
  std::size_t grid_points = 101;
  double grid_min = 0.0;
  double grid_max = 1.0;
  std::string objective = "em";
  LabelScorer scorer;  // exact match when empty
  CategorySet specialized = kDefaultSpecialized;
};

struct CalibrationResult {
  double threshold = 0.0;
  double score = 0.0;
  std::string objective;
  std::vector<std::pair<double, double>> curve;  // (threshold, mean score)
};

// i-th of n evenly spaced points from lo to hi inclusive.
double grid_point(double lo, double hi, std::size_t i, std::size_t n) noexcept;

// Sweeps the threshold grid, replays decide() per sample, and returns the
// threshold with the highest mean score (smallest threshold on ties).
CalibrationResult calibrate_threshold(std::span<const CalibrationSample> samples,
                                      const CalibrationOptions& options = {});

// Extracts replayable samples from evaluation outcomes carrying routing
// traces. Outcomes without a trace are skipped.
std::vector<CalibrationSample> calibration_samples(std::span<const EvalOutcome> outcomes);

nlohmann::json to_json(const CalibrationResult& result);

}  // namespace hymor
