#include "hymor/calibration.hpp"

#include "hymor/errors.hpp"
#include "hymor/text_canon.hpp"

namespace hymor {

double grid_point(double lo, double hi, std::size_t i, std::size_t n) noexcept {
  if (n <= 1) return lo;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

CalibrationResult calibrate_threshold(std::span<const CalibrationSample> samples, const CalibrationOptions& options) {
  if (samples.empty()) throw DataError("calibration needs at least one validation sample");
  if (options.grid_points == 0) throw ConfigError("calibration grid needs at least one point");
  if (!(options.grid_min <= options.grid_max)) throw ConfigError("calibration grid bounds are inverted");

  LabelScorer scorer = options.scorer;
  if (!scorer) {
    scorer = [](const std::string& p, const std::string& gt) { return exact_match(p, gt) ? 1.0 : 0.0; };
  }

  // Both candidate labels are scored once; the sweep only replays decide().
  struct Scored {
    const CalibrationSample* sample;
    double coarse;
    double fine;
  };
  std::vector<Scored> scored;
  scored.reserve(samples.size());
  for (const auto& s : samples) {
    const bool has_fine = s.retrieval && !s.retrieval->no_match;
    scored.push_back({&s, scorer(s.coarse_label, s.ground_truth),
                      has_fine ? scorer(s.retrieval->label, s.ground_truth) : 0.0});
  }

  CalibrationResult result;
  result.objective = options.objective;
  result.curve.reserve(options.grid_points);
  bool first = true;
  for (std::size_t i = 0; i < options.grid_points; ++i) {
    const double tau = grid_point(options.grid_min, options.grid_max, i, options.grid_points);
    double total = 0.0;
    for (const auto& sc : scored) {
      const auto d = decide(sc.sample->coarse_category, sc.sample->retrieval, tau, options.specialized);
      total += d == Decision::fine_adopted ? sc.fine : sc.coarse;
    }
    const double mean = total / static_cast<double>(scored.size());
    result.curve.emplace_back(tau, mean);
    if (first || mean > result.score) {
      result.threshold = tau;
      result.score = mean;
      first = false;
    }
  }
  return result;
}

std::vector<CalibrationSample> calibration_samples(std::span<const EvalOutcome> outcomes) {
  std::vector<CalibrationSample> out;
  for (const auto& o : outcomes) {
    if (o.error || !o.prediction || !o.prediction->trace.is_object()) continue;
    const auto& trace = o.prediction->trace;
    if (!trace.contains("coarse") || !trace["coarse"].is_object()) continue;
    const auto& coarse = trace["coarse"];
    CalibrationSample s;
    s.ground_truth = o.sample.ground_truth;
    s.coarse_label = coarse.value("name", "");
    const auto cat = parse_category(coarse.value("category", ""));
    if (!cat || s.coarse_label.empty()) continue;
    s.coarse_category = *cat;
    if (trace.contains("retrieval") && trace["retrieval"].is_object()) {
      const auto& r = trace["retrieval"];
      Match m;
      m.label = r.value("label", "");
      m.category = parse_category(r.value("category", "other")).value_or(Category::other);
      m.similarity = r.value("similarity", -1.0);
      m.no_match = r.value("no_match", true);
      s.retrieval = m;
    }
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json to_json(const CalibrationResult& result) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [tau, score] : result.curve) curve.push_back({{"threshold", tau}, {"score", score}});
  return {{"threshold", result.threshold}, {"score", result.score}, {"objective", result.objective}, {"curve", curve}};
}

}  // namespace hymor
