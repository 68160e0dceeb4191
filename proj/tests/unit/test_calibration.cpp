#include <doctest.h>

#include <cmath>

#include "hymor/calibration.hpp"
#include "support/calibration_sets.hpp"

using namespace hymor;
using namespace hymor::testing;

namespace {

CalibrationSample fine_case(double sim, bool fine_right, bool coarse_right) {
  CalibrationSample s;
  s.ground_truth = "gt";
  s.coarse_category = Category::animal;
  s.coarse_label = coarse_right ? "gt" : "coarse";
  s.retrieval = Match{fine_right ? "gt" : "fine", Category::animal, sim, false};
  return s;
}

}  // namespace

TEST_CASE("grid points") {
  CHECK(grid_point(0, 1, 0, 101) == 0.0);
  CHECK(grid_point(0, 1, 100, 101) == 1.0);
  CHECK(grid_point(0, 1, 50, 101) == 0.5);
  CHECK(grid_point(0.3, 0.3, 0, 1) == 0.3);
}

TEST_CASE("correct retrievals with high similarity favor adoption") {
  std::vector<CalibrationSample> v;
  for (double s : {0.9, 0.93, 0.97, 1.0}) v.push_back(fine_case(s, true, false));
  const auto r = calibrate_threshold(v);
  CHECK(r.threshold <= 0.9);
  CHECK(r.score == 1.0);
  CHECK(r.threshold == 0.0);  // smallest on ties
  CHECK(r.curve.size() == 101);
}

TEST_CASE("wrong retrievals push the threshold to the grid maximum") {
  std::vector<CalibrationSample> v;
  for (double s : {0.2, 0.5, 0.99}) v.push_back(fine_case(s, false, true));
  const auto r = calibrate_threshold(v);
  CHECK(r.threshold == 1.0);
  CHECK(r.score == 1.0);
}

TEST_CASE("planted crossover matches the replay oracle") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    const double crossover = 0.2 + 0.06 * trial;
    const auto v = planted_crossover(rng, crossover, 400);
    const auto r = calibrate_threshold(v);
    const auto o = oracle_calibrate(v);
    CHECK(r.threshold == o.threshold);
    CHECK(std::abs(r.score - o.score) <= 1e-12);
    CHECK(std::abs(r.threshold - crossover) <= 0.01 + 1e-12);
  }
}

TEST_CASE("chosen threshold attains the curve maximum") {
  std::mt19937_64 rng(73);
  const auto v = planted_crossover(rng, 0.45, 300);
  const auto r = calibrate_threshold(v);
  double best = -1;
  for (const auto& [t, s] : r.curve) best = std::max(best, s);
  CHECK(r.score == best);
  for (const auto& [t, s] : r.curve) {
    if (t < r.threshold) CHECK(s < best);
  }
}

TEST_CASE("custom scorer and grid") {
  std::vector<CalibrationSample> v{fine_case(0.5, true, false), fine_case(0.3, false, true)};
  CalibrationOptions opt;
  opt.grid_points = 5;
  opt.grid_min = 0.2;
  opt.grid_max = 1.0;
  opt.objective = "half-credit";
  opt.scorer = [](const std::string& p, const std::string& g) { return p == g ? 1.0 : 0.5; };
  const auto r = calibrate_threshold(v, opt);
  CHECK(r.curve.size() == 5);
  CHECK(r.threshold == 0.4);
  CHECK(r.score == 1.0);
  CHECK(to_json(r)["objective"] == "half-credit");
}

TEST_CASE("calibration errors") {
  CHECK_THROWS_AS(calibrate_threshold({}), DataError);
  std::vector<CalibrationSample> v{fine_case(0.4, true, false)};
  CalibrationOptions opt;
  opt.grid_points = 0;
  CHECK_THROWS_AS(calibrate_threshold(v, opt), ConfigError);
}

TEST_CASE("samples extracted from traces replay the same decisions") {
  EvalOutcome o;
  o.sample = EvalSample{"i", "Labrador Retriever", Category::animal, "d", "val", std::nullopt};
  Prediction p;
  p.label = "Labrador Retriever";
  p.trace = {{"coarse", {{"category", "animal"}, {"name", "Dog"}}},
             {"retrieval", {{"label", "Labrador Retriever"}, {"category", "animal"}, {"similarity", 0.7},
                            {"no_match", false}}}};
  o.prediction = p;
  EvalOutcome bare = o;
  bare.prediction->trace = nullptr;
  const std::vector<EvalOutcome> outcomes{o, bare};
  const auto samples = calibration_samples(outcomes);
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].coarse_label == "Dog");
  CHECK(samples[0].retrieval->similarity == 0.7);
  const auto r = calibrate_threshold(samples);
  CHECK(r.threshold == 0.0);
  CHECK(r.score == 1.0);
}
