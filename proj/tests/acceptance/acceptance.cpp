// Acceptance suite: one PASS/FAIL line per criterion, exit 1 if any fails.
// Everything runs against mock endpoints.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hymor/calibration.hpp"
#include "hymor/centroid_index.hpp"
#include "hymor/errors.hpp"
#include "hymor/eval.hpp"
#include "hymor/gateway.hpp"
#include "hymor/index_io.hpp"
#include "hymor/log.hpp"
#include "hymor/prompts.hpp"
#include "hymor/router.hpp"
#include "support/calibration_sets.hpp"
#include "support/coarse_fixtures.hpp"
#include "support/mocks.hpp"
#include "support/oracles.hpp"
#include "support/planted.hpp"
#include "support/scenarios.hpp"

using namespace hymor;
using namespace hymor::testing;
using nlohmann::json;

namespace {

// Collects failure messages for one criterion.
struct Checks {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- 1

void retrieval_oracle(Checks& c) {
  constexpr std::size_t kInstances = 50, kClasses = 500, kQueries = 1000, kDim = 64;
  std::mt19937_64 rng(1001);
  std::size_t mismatches = 0;
  for (std::size_t inst = 0; inst < kInstances; ++inst) {
    IndexBuilder b;
    std::vector<OracleSample> plain;
    for (std::size_t k = 0; k < kClasses; ++k) {
      char name[16];
      std::snprintf(name, sizeof name, "c%04zu", k);
      // One to three samples per class.
      const std::size_t n = 1 + rng() % 3;
      for (std::size_t s = 0; s < n; ++s) {
        const auto v = random_vec(rng, kDim);
        b.accumulate(name, k % 2 ? Category::plant : Category::animal, v);
        plain.push_back({name, v});
      }
    }
    const auto idx = b.finalize();
    const auto means = oracle_class_means(plain);
    const auto gm = oracle_mean_of(means);
    std::vector<std::pair<std::string, Vec>> dirs;
    for (const auto& [label, m] : means) {
      if (auto d = oracle_direction(m, gm)) dirs.emplace_back(label, *d);
    }
    for (std::size_t q = 0; q < kQueries; ++q) {
      const auto query = random_vec(rng, kDim);
      const auto qd = oracle_direction(query, gm);
      std::string best;
      long double best_sim = -10.0L;
      // Labels iterate in ascending order, so strict > keeps the smallest on ties.
      for (const auto& [label, d] : dirs) {
        const auto s = oracle_dot(*qd, d);
        if (s > best_sim) best_sim = s, best = label;
      }
      if (idx.search(query).label != best) ++mismatches;
    }
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " mismatches against the brute-force argmax");
}

// ---------------------------------------------------------------- 2

void preprocessing(Checks& c) {
  std::mt19937_64 rng(2002);
  double worst_norm = 0.0, worst_shift = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dim = 2 + rng() % 31;
    const std::size_t classes = 2 + rng() % 19;
    const Vec shift = random_vec(rng, dim, 10.0);
    IndexBuilder a, b;
    for (std::size_t k = 0; k < classes; ++k) {
      const std::string label = "class " + std::to_string(k);
      const Vec center = random_vec(rng, dim, 3.0);
      const std::size_t n = 1 + rng() % 4;
      for (std::size_t s = 0; s < n; ++s) {
        Vec v = random_vec(rng, dim);
        for (std::size_t i = 0; i < dim; ++i) v[i] += center[i];
        a.accumulate(label, Category::animal, v);
        for (std::size_t i = 0; i < dim; ++i) v[i] += shift[i];
        b.accumulate(label, Category::animal, v);
      }
    }
    const auto ia = a.finalize(), ib = b.finalize();
    for (std::size_t k = 0; k < ia.size(); ++k) {
      const auto& pa = ia.classes()[k].processed;
      const auto& pb = ib.classes()[k].processed;
      worst_norm = std::max(worst_norm, std::abs(std::sqrt(static_cast<double>(oracle_dot(pa, pa))) - 1.0));
      for (std::size_t i = 0; i < dim; ++i) worst_shift = std::max(worst_shift, std::abs(pa[i] - pb[i]));
    }
    // Queries shifted by the same constant retrieve the same class at the same similarity.
    for (int q = 0; q < 5; ++q) {
      Vec x = random_vec(rng, dim, 3.0);
      Vec y = x;
      for (std::size_t i = 0; i < dim; ++i) y[i] += shift[i];
      const auto ma = ia.search(x), mb = ib.search(y);
      if (ma.label != mb.label) worst_shift = std::max(worst_shift, 1.0);
      worst_shift = std::max(worst_shift, std::abs(ma.similarity - mb.similarity));
    }
  }
  c.expect(worst_norm <= 1e-6, "processed norm off by " + fmt_double(worst_norm));
  c.expect(worst_shift <= 1e-9, "translation changed values by " + fmt_double(worst_shift));

  IndexBuilder two;
  two.accumulate("a", Category::animal, std::vector<double>{1.0, 0.0});
  two.accumulate("b", Category::animal, std::vector<double>{0.0, 1.0});
  const auto idx = two.finalize();
  const double h = std::sqrt(2.0) / 2.0;
  const auto& pa = idx.find("a")->processed;
  const auto& pb = idx.find("b")->processed;
  c.expect(std::abs(pa[0] - h) <= 1e-9 && std::abs(pa[1] + h) <= 1e-9, "(1,0) did not map to (sqrt2/2, -sqrt2/2)");
  c.expect(std::abs(pb[0] + h) <= 1e-9 && std::abs(pb[1] - h) <= 1e-9, "(0,1) did not map to (-sqrt2/2, sqrt2/2)");
}

// ---------------------------------------------------------------- 3

// The routing rule restated from scratch.
Decision oracle_decision(Category cat, const std::optional<Match>& m, double tau) {
  if (cat != Category::animal && cat != Category::plant) return Decision::direct_coarse;
  if (!m || m->no_match) return Decision::fallback_degenerate;
  return m->similarity >= tau ? Decision::fine_adopted : Decision::fallback_below_threshold;
}

void routing_table(Checks& c) {
  const double tau = 0.5;
  auto hit = [](double s) { return std::optional<Match>(Match{"x", Category::animal, s, false}); };
  const std::optional<Match> none;
  const std::optional<Match> degenerate = Match::none();
  struct Row {
    Category cat;
    std::optional<Match> m;
    Decision want;
  };
  const std::vector<Row> table = {
      {Category::other, none, Decision::direct_coarse},
      {Category::other, hit(0.9), Decision::direct_coarse},
      {Category::animal, none, Decision::fallback_degenerate},
      {Category::animal, degenerate, Decision::fallback_degenerate},
      {Category::animal, hit(0.2), Decision::fallback_below_threshold},
      {Category::animal, hit(0.5), Decision::fine_adopted},
      {Category::plant, hit(std::nextafter(0.5, 0.0)), Decision::fallback_below_threshold},
      {Category::plant, hit(0.8), Decision::fine_adopted},
  };
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& r = table[i];
    c.expect(decide(r.cat, r.m, tau) == r.want, "row " + std::to_string(i) + " disagrees with the table");
    c.expect(oracle_decision(r.cat, r.m, tau) == r.want, "oracle row " + std::to_string(i));
  }
  // Randomized agreement with the restated rule.
  std::mt19937_64 rng(3003);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 100000; ++k) {
    const auto cat = static_cast<Category>(rng() % 3);
    std::optional<Match> m;
    switch (rng() % 3) {
      case 0: break;
      case 1: m = Match::none(); break;
      default: m = Match{"x", cat, u(rng), false};
    }
    const double t = rng() % 4 == 0 && m ? m->similarity : u(rng);
    if (decide(cat, m, t) != oracle_decision(cat, m, t)) {
      c.expect(false, "random case disagrees with the restated rule");
      break;
    }
  }

  // The full pipeline over a 101-point sweep: the fine-adopted set only shrinks.
  const auto index = labrador_index();
  std::vector<double> sims;
  for (int k = 0; k <= 50; ++k) sims.push_back(k / 50.0 * 0.999);
  std::set<std::size_t> previous;
  for (std::size_t i = 0; i < sims.size(); ++i) previous.insert(i);
  for (int step = 0; step <= 100; ++step) {
    const double t = step / 100.0;
    std::set<std::size_t> fine;
    for (std::size_t i = 0; i < sims.size(); ++i) {
      MockRecognizer rec(i % 2 ? Category::plant : Category::animal, "Dog");
      MockImageEmbedder emb{EmbeddingVector(query_at(index, sims[i]))};
      if (Router(RouterConfig{t}, rec, emb).recognize(index, tiny_image()).granularity == Granularity::fine) {
        fine.insert(i);
      }
    }
    if (!std::includes(previous.begin(), previous.end(), fine.begin(), fine.end())) {
      c.expect(false, "fine-adopted set grew at threshold " + fmt_double(t));
    }
    previous = std::move(fine);
  }
}

// ---------------------------------------------------------------- 4

void no_retrieval_for_other(Checks& c) {
  auto transport = std::make_shared<ScriptedTransport>();
  transport->fallback = HttpResponse{200, R"({"embedding":[1,0,0]})", {}};
  EmbeddingClient embedder(fast_endpoint("http://embed.local/v1"), transport);
  MockImageEmbedder counted([&embedder](const ImagePayload& p) { return embedder.embed_image(p); });
  MockRecognizer rec(Category::other, "Backpack");
  const auto index = labrador_index();
  Router router(RouterConfig{0.5}, rec, counted);
  std::size_t coarse = 0;
  for (int i = 0; i < 100; ++i) {
    const auto r = router.recognize(index, tiny_image(static_cast<std::uint8_t>(i)));
    if (r.granularity == Granularity::coarse && r.label == "Backpack" && !r.trace.retrieval) ++coarse;
  }
  c.expect(rec.calls == 100, "coarse model called " + std::to_string(rec.calls.load()) + " times");
  c.expect(counted.calls == 0, std::to_string(counted.calls.load()) + " embedder calls");
  c.expect(transport->requests.empty(), std::to_string(transport->requests.size()) + " embedding requests sent");
  c.expect(coarse == 100, std::to_string(coarse) + " of 100 returned the coarse label");
}

// ---------------------------------------------------------------- 5

void judge_protocol(Checks& c) {
  const std::string golden_dir = HYMOR_GOLDEN_DIR;
  struct Example {
    std::string pred, gt, file, reply;
    Rating want;
    double score;
  };
  const std::vector<Example> examples = {
      {"car", "automobile", "judge_car_automobile.txt", "A", Rating::A, 1.0},
      {"vegetable", "bokchoy", "judge_vegetable_bokchoy.txt", "Output: B", Rating::B, 0.8},
      {"airplane", "football", "judge_airplane_football.txt", "C", Rating::C, 0.0},
  };
  for (const auto& e : examples) {
    auto transport = std::make_shared<ScriptedTransport>();
    transport->push_chat(e.reply);
    ChatClient judge(fast_endpoint("http://judge.local/v1"), transport);
    const auto rating = judge.judge_pair(e.pred, e.gt);
    c.expect(rating == e.want, e.pred + "/" + e.gt + " rated " + std::string(to_string(rating)));
    c.expect(judge_score(rating) == e.score, e.pred + "/" + e.gt + " scored " + fmt_double(judge_score(rating)));

    const auto golden = read_file(golden_dir + "/" + e.file);
    c.expect(prompts::render_judge_prompt(e.pred, e.gt) == golden, e.file + " does not byte-match");
    if (transport->requests.size() == 1) {
      const auto body = json::parse(transport->requests[0].body);
      c.expect(body["messages"][0]["content"] == golden, e.file + " differs on the wire");
    } else {
      c.expect(false, "expected exactly one judge request");
    }
  }
  c.expect(std::string(prompts::kCoarseRecognition) == read_file(golden_dir + "/coarse_prompt.txt"),
           "coarse prompt does not byte-match");
}

// ---------------------------------------------------------------- 6

void parse_suite(Checks& c) {
  const std::string example = R"({"category": "animal", "name": "Dog"})";
  try {
    const auto p = parse_coarse_response(example);
    c.expect(p.category == Category::animal && p.name == "Dog" && !p.warning, "example output parsed wrongly");
  } catch (const std::exception& e) {
    c.expect(false, std::string("example output threw: ") + e.what());
  }

  const auto fixtures = adversarial_coarse_fixtures();
  c.expect(fixtures.size() == 20, "expected 20 fixtures, have " + std::to_string(fixtures.size()));
  std::size_t panics = 0;
  for (const auto& f : fixtures) {
    try {
      const auto p = parse_coarse_response(f.reply);
      if (f.expect == Expect::typed_error) {
        c.expect(false, f.name + ": parsed but should fail");
      } else {
        c.expect(p.category == *f.category && p.name == f.label, f.name + ": wrong result");
        c.expect(p.warning.has_value() == (f.expect == Expect::map_to_other), f.name + ": wrong warning");
      }
    } catch (const ModelOutputError&) {
      c.expect(f.expect == Expect::typed_error, f.name + ": unexpected typed error");
    } catch (...) {
      ++panics;
    }
  }
  c.expect(panics == 0, std::to_string(panics) + " fixtures raised an untyped failure");

  // The same fixtures through the chat client: typed errors become gateway faults.
  for (const auto& f : fixtures) {
    auto transport = std::make_shared<ScriptedTransport>();
    transport->repeat_last = true;
    transport->push_chat(f.reply);
    ChatClient client(fast_endpoint("http://mllm.local/v1", 1), transport);
    try {
      const auto p = client.classify_coarse(tiny_image());
      c.expect(f.expect != Expect::typed_error && p.name == f.label, f.name + ": client result differs");
    } catch (const GatewayError& e) {
      c.expect(f.expect == Expect::typed_error && e.fault() == GatewayFault::unparseable_output,
               f.name + ": unexpected gateway fault");
    } catch (...) {
      c.expect(false, f.name + ": client raised an untyped failure");
    }
  }
}

// ---------------------------------------------------------------- 7

void metric_arithmetic(Checks& c) {
  const auto set = planted_predictions();
  std::istringstream in(set.predictions_jsonl);
  EvalDeps deps;
  deps.predict = predictions_lookup(read_predictions(in));
  deps.text_embedder = std::make_shared<MockTextEmbedder>(set.text_vectors);
  deps.judge = std::make_shared<PlantedJudge>(set.miss_index);
  EvalOptions opt;
  opt.metrics = MetricSet::parse("all");
  const auto run = run_eval(set.manifest, deps, opt);
  const auto& r = run.report;

  auto near = [&](const std::optional<double>& got, double want, const std::string& what) {
    c.expect(got && std::abs(*got - want) <= 1e-9, what + " = " + (got ? fmt_double(*got) : "n/a") +
                                                        ", want " + fmt_double(want));
  };
  const MetricRow* birds = nullptr;
  const MetricRow* objects = nullptr;
  for (const auto& d : r.datasets) {
    if (d.dataset == "birds") birds = &d;
    if (d.dataset == "objects") objects = &d;
  }
  if (!birds || !objects) {
    c.expect(false, "missing dataset rows");
    return;
  }
  near(birds->em_pct, PlantedExpect::birds_em, "birds EM");
  near(birds->sbert_pct, PlantedExpect::birds_sbert, "birds SBert");
  near(birds->llm_pct, PlantedExpect::birds_llm, "birds LLM");
  near(objects->em_pct, PlantedExpect::objects_em, "objects EM");
  near(objects->sbert_pct, PlantedExpect::objects_sbert, "objects SBert");
  near(objects->llm_pct, PlantedExpect::objects_llm, "objects LLM");
  near(r.average.em_pct, (PlantedExpect::birds_em + PlantedExpect::objects_em) / 2, "average EM");
  near(r.average.sbert_pct, (PlantedExpect::birds_sbert + PlantedExpect::objects_sbert) / 2, "average SBert");
  near(r.average.llm_pct, (PlantedExpect::birds_llm + PlantedExpect::objects_llm) / 2, "average LLM");
  near(r.routing.specialized_pct(), PlantedExpect::specialized_routing, "specialized routing");
  near(r.routing.general_pct(), PlantedExpect::general_routing, "general routing");
  c.expect(birds->llm_excluded == PlantedExpect::birds_llm_excluded, "birds judge exclusions");
  c.expect(objects->llm_excluded == PlantedExpect::objects_llm_excluded, "objects judge exclusions");

  // 998 of 1000 specialized images routed correctly.
  std::vector<EvalOutcome> outcomes;
  for (int i = 0; i < 1000; ++i) {
    EvalOutcome o;
    o.sample = EvalSample{"img" + std::to_string(i), "x", Category::animal, "d", "test", std::nullopt};
    Prediction p;
    p.label = "x";
    p.category = i < 998 ? Category::animal : Category::other;
    o.prediction = p;
    outcomes.push_back(o);
  }
  const auto acc = routing_accuracy(outcomes);
  c.expect(acc.specialized_correct == 998 && acc.specialized_total == 1000, "routing counts");
  c.expect(acc.specialized_pct() && *acc.specialized_pct() == 99.8, "998/1000 is not exactly 99.8");
}

// ---------------------------------------------------------------- 8

CentroidIndex random_index(std::mt19937_64& rng) {
  const std::size_t dim = 1 + rng() % 48;
  const std::size_t classes = 1 + rng() % 40;
  IndexBuilder b;
  std::uniform_int_distribution<int> letter('a', 'z');
  for (std::size_t k = 0; k < classes; ++k) {
    std::string label = "k" + std::to_string(k) + " ";
    for (std::size_t n = rng() % 12; n > 0; --n) label += static_cast<char>(letter(rng));
    if (k % 7 == 3) label += "\xC3\xA9";  // non-ASCII label bytes
    for (std::size_t s = 1 + rng() % 3; s > 0; --s) {
      b.accumulate(label, k % 2 ? Category::plant : Category::animal, random_vec(rng, dim, 2.0));
    }
  }
  return b.finalize();
}

std::optional<IndexFormatFault> fault_of(const std::vector<std::uint8_t>& bytes) {
  try {
    parse_index(bytes);
  } catch (const IndexFormatError& e) {
    return e.fault();
  }
  return std::nullopt;
}

void persistence(Checks& c) {
  std::mt19937_64 rng(8008);
  const auto dir = std::filesystem::temp_directory_path() / ("hymor_acc_" + std::to_string(rng()));
  std::filesystem::create_directories(dir);
  std::size_t differing = 0;
  for (int i = 0; i < 100; ++i) {
    const auto idx = random_index(rng);
    const auto path = dir / ("idx" + std::to_string(i) + ".hymx");
    save_index(idx, path);
    const auto bytes = read_file(path.string());
    const auto loaded = load_index(path);
    const auto path2 = dir / ("again" + std::to_string(i) + ".hymx");
    save_index(loaded, path2);
    // Same bytes on disk, and the loaded index equals the original at storage precision.
    if (read_file(path2.string()) != bytes || !(loaded == idx.rounded_to_storage())) ++differing;
  }
  std::filesystem::remove_all(dir);
  c.expect(differing == 0, std::to_string(differing) + " of 100 round trips differ");

  const auto good = serialize_index(random_index(rng));
  auto bad = good;
  bad[0] = 'Z';
  c.expect(fault_of(bad) == IndexFormatFault::bad_magic, "corrupt magic not reported as bad_magic");

  std::size_t wrong_trunc = 0;
  for (std::size_t n = 8; n < good.size(); ++n) {
    const std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(n));
    if (fault_of(cut) != IndexFormatFault::truncated) ++wrong_trunc;
  }
  c.expect(wrong_trunc == 0, std::to_string(wrong_trunc) + " truncations not reported as truncated");

  std::size_t wrong_crc = 0;
  // A flipped bit anywhere in the global mean, then in the stored checksum.
  const std::size_t dim = good[8] | (good[9] << 8);
  for (std::size_t at = 16; at < 16 + 4 * dim; ++at) {
    bad = good;
    bad[at] ^= 0x10;
    if (fault_of(bad) != IndexFormatFault::checksum_mismatch) ++wrong_crc;
  }
  bad = good;
  bad.back() ^= 0x80;
  if (fault_of(bad) != IndexFormatFault::checksum_mismatch) ++wrong_crc;
  c.expect(wrong_crc == 0, std::to_string(wrong_crc) + " payload corruptions not reported as checksum_mismatch");
}

// ---------------------------------------------------------------- 9

// Minimal JSON Schema evaluator covering the keywords the published schema uses.
class SchemaCheck {
 public:
  explicit SchemaCheck(json root) : root_(std::move(root)) {}
  bool valid(const json& doc) const { return check(root_, doc); }

 private:
  const json& resolve(const json& s) const {
    if (!s.contains("$ref")) return s;
    const auto ref = s["$ref"].get<std::string>();
    const std::string prefix = "#/$defs/";
    if (ref.rfind(prefix, 0) != 0) throw DataError("unsupported $ref " + ref);
    return root_["$defs"][ref.substr(prefix.size())];
  }

  static bool type_ok(const std::string& t, const json& v) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "number") return v.is_number();
    if (t == "integer") return v.is_number_integer() || v.is_number_unsigned();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    return false;
  }

  bool check(const json& schema, const json& v) const {
    const json& s = resolve(schema);
    if (s.contains("type")) {
      bool ok = false;
      if (s["type"].is_array()) {
        for (const auto& t : s["type"]) ok = ok || type_ok(t.get<std::string>(), v);
      } else {
        ok = type_ok(s["type"].get<std::string>(), v);
      }
      if (!ok) return false;
    }
    if (s.contains("enum") && std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end()) return false;
    if (s.contains("const") && s["const"] != v) return false;
    if (v.is_number()) {
      if (s.contains("minimum") && v.get<double>() < s["minimum"].get<double>()) return false;
      if (s.contains("maximum") && v.get<double>() > s["maximum"].get<double>()) return false;
    }
    if (v.is_string() && s.contains("minLength") && v.get_ref<const std::string&>().size() < s["minLength"].get<std::size_t>()) {
      return false;
    }
    if (v.is_object()) {
      if (s.contains("required")) {
        for (const auto& k : s["required"]) {
          if (!v.contains(k.get<std::string>())) return false;
        }
      }
      if (s.contains("properties")) {
        for (const auto& [k, sub] : s["properties"].items()) {
          if (v.contains(k) && !check(sub, v[k])) return false;
        }
      }
    }
    if (s.contains("allOf")) {
      for (const auto& sub : s["allOf"]) {
        if (!check(sub, v)) return false;
      }
    }
    if (s.contains("oneOf")) {
      int n = 0;
      for (const auto& sub : s["oneOf"]) n += check(sub, v) ? 1 : 0;
      if (n != 1) return false;
    }
    if (s.contains("if")) {
      if (check(s["if"], v)) {
        if (s.contains("then") && !check(s["then"], v)) return false;
      } else if (s.contains("else") && !check(s["else"], v)) {
        return false;
      }
    }
    return true;
  }

  json root_;
};

void end_to_end(Checks& c) {
  const SchemaCheck schema(json::parse(read_file(HYMOR_SCHEMA_PATH)));
  const auto index = labrador_index();
  const double tau = 0.5;
  auto run = [&](double sim) {
    MockRecognizer rec(Category::animal, "Dog");
    MockImageEmbedder emb{EmbeddingVector(query_at(index, sim))};
    return Router(RouterConfig{tau}, rec, emb).recognize(index, tiny_image());
  };
  auto validate = [&](const RecognitionResult& r, const std::string& what) {
    const auto doc = to_json(r);
    c.expect(schema.valid(doc), what + ": response does not validate against the schema");
    c.expect(validate_recognition_json(doc).empty(), what + ": response fails the consistency checker");
    c.expect(!check_consistency(r), what + ": fields disagree with the trace");
  };

  const auto above = run(0.91);
  c.expect(above.label == "Labrador Retriever", "above threshold: label " + above.label);
  c.expect(above.granularity == Granularity::fine && above.source == Source::centroid_retrieval, "above: not fine");
  c.expect(above.trace.decision == Decision::fine_adopted, "above: wrong decision");
  c.expect(above.similarity && std::abs(*above.similarity - 0.91) <= 1e-9, "above: similarity not 0.91");
  c.expect(above.trace.coarse.name == "Dog", "above: coarse name lost from trace");
  validate(above, "above");

  const auto below = run(0.30);
  c.expect(below.label == "Dog", "below threshold: label " + below.label);
  c.expect(below.granularity == Granularity::coarse && below.source == Source::mllm, "below: not coarse");
  c.expect(below.trace.decision == Decision::fallback_below_threshold, "below: wrong decision");
  c.expect(below.trace.retrieval && below.trace.retrieval->label == "Labrador Retriever",
           "below: retrieval missing from trace");
  validate(below, "below");

  // Exactly at the threshold the fine label is adopted.
  const auto at = run(tau);
  c.expect(at.trace.retrieval && (at.trace.retrieval->similarity >= tau) == (at.granularity == Granularity::fine),
           "at threshold: decision disagrees with the inclusive rule");

  // The schema rejects a tampered document.
  auto doc = to_json(above);
  doc["granularity"] = "medium";
  c.expect(!schema.valid(doc), "schema accepted an invalid granularity");
}

// ---------------------------------------------------------------- 10

void calibration(Checks& c) {
  std::mt19937_64 rng(10010);
  std::uniform_real_distribution<double> where(0.1, 0.9);
  for (int trial = 0; trial < 20; ++trial) {
    const double crossover = where(rng);
    const auto samples = planted_crossover(rng, crossover, 2000);
    const auto got = calibrate_threshold(samples);
    const auto want = oracle_calibrate(samples);
    const std::string tag = "set " + std::to_string(trial) + ": ";
    c.expect(std::abs(got.threshold - crossover) <= 0.01 + 1e-12,
             tag + "threshold " + fmt_double(got.threshold) + " vs planted " + fmt_double(crossover));
    c.expect(std::abs(got.threshold - want.threshold) <= 1e-12,
             tag + "threshold " + fmt_double(got.threshold) + " vs oracle " + fmt_double(want.threshold));
    c.expect(std::abs(got.score - want.score) <= 1e-12, tag + "score differs from the oracle");
  }
}

// ---------------------------------------------------------------- 11

void resumability(Checks& c) {
  const auto set = planted_predictions();
  auto deps_for = [&set] {
    std::istringstream in(set.predictions_jsonl);
    EvalDeps deps;
    deps.predict = predictions_lookup(read_predictions(in));
    deps.text_embedder = std::make_shared<MockTextEmbedder>(set.text_vectors);
    deps.judge = std::make_shared<PlantedJudge>(set.miss_index);
    return deps;
  };
  EvalOptions opt;
  opt.metrics = MetricSet::parse("all");
  opt.concurrency = 4;
  const auto reference = run_eval(set.manifest, deps_for(), opt);
  const auto ref_json = to_json(reference.report).dump(2);
  const auto ref_table = render_table(reference.report);

  std::mt19937_64 rng(std::random_device{}());
  const auto path = std::filesystem::temp_directory_path() / ("hymor_resume_" + std::to_string(rng()) + ".jsonl");
  opt.outcomes_path = path;
  // Interrupt twice at different points, leaving a torn line the second time.
  opt.max_new_samples = 53;
  run_eval(set.manifest, deps_for(), opt);
  opt.max_new_samples = 71;
  run_eval(set.manifest, deps_for(), opt);
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << R"({"key":"objects\tobjects/7.jpg\tObj)";
  }
  opt.max_new_samples.reset();
  opt.concurrency = 7;
  const auto resumed = run_eval(set.manifest, deps_for(), opt);
  std::filesystem::remove(path);

  c.expect(resumed.reused > 0, "nothing was reused");
  c.expect(resumed.pending == 0, "samples left pending");
  c.expect(to_json(resumed.report).dump(2) == ref_json, "report JSON differs from the uninterrupted run");
  c.expect(render_table(resumed.report) == ref_table, "report table differs from the uninterrupted run");
}

}  // namespace

int main() {
  log::set_level(spdlog::level::err);
  struct Criterion {
    int id;
    const char* name;
    std::function<void(Checks&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "retrieval matches brute-force argmax", retrieval_oracle},
      {2, "preprocessing unit norm, translation invariance, 2-class example", preprocessing},
      {3, "routing truth table and threshold monotonicity", routing_table},
      {4, "no embedding calls for other", no_retrieval_for_other},
      {5, "judge ratings, scores and golden prompts", judge_protocol},
      {6, "coarse reply parse suite", parse_suite},
      {7, "metric arithmetic on planted predictions", metric_arithmetic},
      {8, "index round trip and typed corruption errors", persistence},
      {9, "end-to-end fine adoption and fallback with schema validation", end_to_end},
      {10, "calibration recovers planted crossover", calibration},
      {11, "resumed evaluation is byte-identical", resumability},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Checks checks;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.run(checks);
    } catch (const std::exception& e) {
      checks.failures.push_back(std::string("exception: ") + e.what());
    }
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = checks.failures.empty();
    failed += ok ? 0 : 1;
    std::printf("%s %2d %s (%.0f ms)", ok ? "PASS" : "FAIL", cr.id, cr.name, ms);
    if (!ok) {
      std::printf(": %s", checks.failures.front().c_str());
      if (checks.failures.size() > 1) std::printf(" (+%zu more)", checks.failures.size() - 1);
    }
    std::printf("\n");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
