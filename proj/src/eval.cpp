#include "hymor/eval.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "hymor/errors.hpp"
#include "hymor/log.hpp"
#include "hymor/text_canon.hpp"

namespace hymor {

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
nlohmann::json opt(const std::optional<std::string>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> get_opt_double(const nlohmann::json& row, const char* key) {
  if (!row.contains(key) || row[key].is_null()) return std::nullopt;
  if (!row[key].is_number()) throw DataError(std::string("field \"") + key + "\" must be a number or null");
  return row[key].get<double>();
}

std::optional<std::string> get_opt_string(const nlohmann::json& row, const char* key) {
  if (!row.contains(key) || row[key].is_null()) return std::nullopt;
  if (!row[key].is_string()) throw DataError(std::string("field \"") + key + "\" must be a string or null");
  return row[key].get<std::string>();
}

std::optional<double> mean_pct(double sum, std::size_t n) {
  if (n == 0) return std::nullopt;
  return 100.0 * sum / static_cast<double>(n);
}

bool is_complete(const EvalOutcome& o, const MetricSet& m) {
  if (o.error || !o.prediction) return false;
  if (m.em && !o.em) return false;
  if (m.sbert && !o.sbert_sim) return false;
  if (m.llm && !o.judge) return false;
  return true;
}

MetricRow score_group(std::string name, std::span<const EvalOutcome* const> group, const MetricSet& m) {
  MetricRow row;
  row.dataset = std::move(name);
  row.samples = group.size();
  double em_sum = 0.0, sbert_sum = 0.0, llm_sum = 0.0;
  std::size_t em_n = 0, sbert_n = 0, llm_n = 0;
  std::vector<EvalOutcome> for_routing;
  for (const EvalOutcome* o : group) {
    if (o->error || !o->prediction) {
      ++row.failed;
      continue;
    }
    if (m.em && o->em) {
      em_sum += *o->em ? 1.0 : 0.0;
      ++em_n;
    }
    if (m.sbert) {
      if (o->sbert_sim) {
        sbert_sum += *o->sbert_sim;
        ++sbert_n;
      } else {
        ++row.sbert_excluded;
      }
    }
    if (m.llm) {
      if (o->judge_score) {
        llm_sum += *o->judge_score;
        ++llm_n;
      } else {
        ++row.llm_excluded;
      }
    }
    if (m.routing) for_routing.push_back(*o);
  }
  if (m.em) row.em_pct = mean_pct(em_sum, em_n);
  if (m.sbert) row.sbert_pct = mean_pct(sbert_sum, sbert_n);
  if (m.llm) row.llm_pct = mean_pct(llm_sum, llm_n);
  if (m.routing) row.routing = routing_accuracy(for_routing);
  return row;
}

std::optional<double> macro_of(const std::vector<MetricRow>& rows, std::optional<double> MetricRow::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.*field) {
      sum += *(r.*field);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

nlohmann::json routing_json(const RoutingAccuracy& r) {
  return {
      {"specialized", opt(r.specialized_pct())},
      {"general", opt(r.general_pct())},
      {"specialized_total", r.specialized_total},
      {"specialized_correct", r.specialized_correct},
      {"general_total", r.general_total},
      {"general_correct", r.general_correct},
  };
}

nlohmann::json row_json(const MetricRow& r, const MetricSet& m) {
  nlohmann::json j = {
      {"dataset", r.dataset},
      {"samples", r.samples},
      {"failed", r.failed},
  };
  if (m.em) j["em"] = opt(r.em_pct);
  if (m.sbert) {
    j["sbert"] = opt(r.sbert_pct);
    j["sbert_excluded"] = r.sbert_excluded;
  }
  if (m.llm) {
    j["llm"] = opt(r.llm_pct);
    j["llm_excluded"] = r.llm_excluded;
  }
  if (m.routing) j["routing"] = routing_json(r.routing);
  return j;
}

}  // namespace

Prediction prediction_from(const RecognitionResult& result, const std::string& image) {
  Prediction p;
  p.image = image;
  p.label = result.label;
  p.granularity = result.granularity;
  p.similarity = result.similarity;
  p.category = result.category;
  p.trace = to_json(result)["trace"];
  return p;
}

nlohmann::json to_json(const Prediction& p) {
  nlohmann::json j = {
      {"image", p.image},
      {"label", p.label},
      {"granularity", to_string(p.granularity)},
      {"similarity", opt(p.similarity)},
      {"category", p.category ? nlohmann::json(to_string(*p.category)) : nlohmann::json(nullptr)},
  };
  if (!p.trace.is_null()) j["trace"] = p.trace;
  return j;
}

Prediction prediction_from_json(const nlohmann::json& row) {
  if (!row.is_object()) throw DataError("prediction must be a JSON object");
  Prediction p;
  const auto image = get_opt_string(row, "image");
  const auto label = get_opt_string(row, "label");
  if (!image || image->empty()) throw DataError("prediction lacks \"image\"");
  if (!label) throw DataError("prediction lacks \"label\"");
  p.image = *image;
  p.label = *label;
  if (const auto g = get_opt_string(row, "granularity")) {
    const auto parsed = parse_granularity(*g);
    if (!parsed) throw DataError("granularity must be fine or coarse");
    p.granularity = *parsed;
  }
  p.similarity = get_opt_double(row, "similarity");
  if (const auto c = get_opt_string(row, "category")) {
    const auto parsed = parse_category(*c);
    if (!parsed) throw DataError("category must be animal, plant or other");
    p.category = parsed;
  }
  if (row.contains("trace")) p.trace = row["trace"];
  return p;
}

std::map<std::string, Prediction> read_predictions(std::istream& in) {
  std::map<std::string, Prediction> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto row = nlohmann::json::parse(text, nullptr, false);
    if (row.is_discarded()) throw ManifestError(line, "not valid JSON");
    try {
      auto p = prediction_from_json(row);
      auto key = p.image;
      if (!out.emplace(std::move(key), std::move(p)).second) {
        throw DataError("duplicate prediction for image");
      }
    } catch (const ManifestError&) {
      throw;
    } catch (const DataError& e) {
      throw ManifestError(line, e.what());
    }
  }
  return out;
}

std::map<std::string, Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions file " + path.string());
  return read_predictions(in);
}

MetricSet MetricSet::parse(std::string_view spec) {
  MetricSet m{false, false, false, false};
  std::stringstream ss{std::string(spec)};
  std::string item;
  bool any = false;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (item.empty()) continue;
    any = true;
    if (item == "all") {
      m = MetricSet{true, true, true, true};
    } else if (item == "em") {
      m.em = true;
    } else if (item == "sbert") {
      m.sbert = true;
    } else if (item == "llm") {
      m.llm = true;
    } else if (item == "routing") {
      m.routing = true;
    } else {
      throw ConfigError("unknown metric '" + item + "' (expected em, sbert, llm, routing or all)");
    }
  }
  if (!any) throw ConfigError("no metrics selected");
  return m;
}

std::string MetricSet::to_string() const {
  std::string out;
  auto add = [&out](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(em, "em");
  add(sbert, "sbert");
  add(llm, "llm");
  add(routing, "routing");
  return out;
}

double judge_score(Rating rating) noexcept {
  switch (rating) {
    case Rating::A: return 1.0;
    case Rating::B: return 0.8;
    case Rating::C: return 0.0;
  }
  return 0.0;
}

double semantic_similarity(TextEmbedder& embedder, const std::string& prediction, const std::string& ground_truth) {
  const auto a = embedder.embed_text(prediction);
  const auto b = embedder.embed_text(ground_truth);
  return cosine_similarity(a.values(), b.values());
}

std::string outcome_key(const EvalSample& s) { return s.dataset + '\t' + s.image_ref + '\t' + s.ground_truth; }

nlohmann::json to_json(const EvalOutcome& o) {
  nlohmann::json j = {
      {"key", outcome_key(o.sample)},
      {"dataset", o.sample.dataset},
      {"split", o.sample.split},
      {"image", o.sample.image_ref},
      {"label", o.sample.ground_truth},
      {"gt_category", to_string(o.sample.gt_category)},
      {"prediction", o.prediction ? to_json(*o.prediction) : nlohmann::json(nullptr)},
      {"em", o.em ? nlohmann::json(*o.em) : nlohmann::json(nullptr)},
      {"sbert", opt(o.sbert_sim)},
      {"sbert_error", opt(o.sbert_error)},
      {"judge", o.judge ? nlohmann::json(to_string(*o.judge)) : nlohmann::json(nullptr)},
      {"judge_score", opt(o.judge_score)},
      {"judge_error", opt(o.judge_error)},
      {"error", opt(o.error)},
  };
  if (o.sample.grade) j["grade"] = to_string(*o.sample.grade);
  return j;
}

EvalOutcome outcome_from_json(const nlohmann::json& row) {
  if (!row.is_object()) throw DataError("outcome must be a JSON object");
  EvalOutcome o;
  auto req = [&row](const char* key) {
    auto v = get_opt_string(row, key);
    if (!v) throw DataError(std::string("outcome lacks \"") + key + "\"");
    return *v;
  };
  o.sample.dataset = req("dataset");
  o.sample.split = req("split");
  o.sample.image_ref = req("image");
  o.sample.ground_truth = req("label");
  const auto cat = parse_category(req("gt_category"));
  if (!cat) throw DataError("bad gt_category");
  o.sample.gt_category = *cat;
  if (const auto g = get_opt_string(row, "grade")) o.sample.grade = parse_grade_band(*g);
  if (row.contains("prediction") && !row["prediction"].is_null()) o.prediction = prediction_from_json(row["prediction"]);
  if (row.contains("em") && !row["em"].is_null()) o.em = row["em"].get<bool>();
  o.sbert_sim = get_opt_double(row, "sbert");
  o.sbert_error = get_opt_string(row, "sbert_error");
  if (const auto j = get_opt_string(row, "judge")) {
    o.judge = parse_rating_letter(*j);
    if (!o.judge) throw DataError("bad judge rating");
  }
  o.judge_score = get_opt_double(row, "judge_score");
  o.judge_error = get_opt_string(row, "judge_error");
  o.error = get_opt_string(row, "error");
  return o;
}

std::optional<double> RoutingAccuracy::specialized_pct() const {
  if (specialized_total == 0) return std::nullopt;
  return 100.0 * static_cast<double>(specialized_correct) / static_cast<double>(specialized_total);
}

std::optional<double> RoutingAccuracy::general_pct() const {
  if (general_total == 0) return std::nullopt;
  return 100.0 * static_cast<double>(general_correct) / static_cast<double>(general_total);
}

RoutingAccuracy routing_accuracy(std::span<const EvalOutcome> outcomes, const CategorySet& specialized) {
  RoutingAccuracy r;
  for (const auto& o : outcomes) {
    if (o.error || !o.prediction || !o.prediction->category) continue;
    const bool gt_special = specialized.count(o.sample.gt_category) != 0;
    const bool routed_special = specialized.count(*o.prediction->category) != 0;
    if (gt_special) {
      ++r.specialized_total;
      if (routed_special) ++r.specialized_correct;
    } else {
      ++r.general_total;
      if (!routed_special) ++r.general_correct;
    }
  }
  return r;
}

EvalReport aggregate(std::span<const EvalOutcome> outcomes, const MetricSet& metrics, Averaging averaging) {
  std::map<std::string, std::vector<const EvalOutcome*>> groups;
  std::vector<const EvalOutcome*> all;
  for (const auto& o : outcomes) {
    groups[o.sample.dataset].push_back(&o);
    all.push_back(&o);
  }
  auto by_key = [](const EvalOutcome* a, const EvalOutcome* b) { return outcome_key(a->sample) < outcome_key(b->sample); };
  std::sort(all.begin(), all.end(), by_key);

  EvalReport report;
  report.metrics = metrics;
  report.averaging = averaging;
  for (auto& [name, group] : groups) {
    std::sort(group.begin(), group.end(), by_key);
    report.datasets.push_back(score_group(name, group, metrics));
  }

  if (averaging == Averaging::micro) {
    report.average = score_group("Avg.", all, metrics);
  } else {
    MetricRow avg;
    avg.dataset = "Avg.";
    for (const auto& r : report.datasets) {
      avg.samples += r.samples;
      avg.failed += r.failed;
      avg.sbert_excluded += r.sbert_excluded;
      avg.llm_excluded += r.llm_excluded;
    }
    if (metrics.em) avg.em_pct = macro_of(report.datasets, &MetricRow::em_pct);
    if (metrics.sbert) avg.sbert_pct = macro_of(report.datasets, &MetricRow::sbert_pct);
    if (metrics.llm) avg.llm_pct = macro_of(report.datasets, &MetricRow::llm_pct);
    report.average = std::move(avg);
  }
  if (metrics.routing) {
    std::vector<EvalOutcome> copies;
    copies.reserve(all.size());
    for (const auto* o : all) copies.push_back(*o);
    report.routing = routing_accuracy(copies);
    report.average.routing = report.routing;
  }
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.datasets) rows.push_back(row_json(r, report.metrics));
  nlohmann::json j = {
      {"metrics", report.metrics.to_string()},
      {"averaging", report.averaging == Averaging::macro ? "macro" : "micro"},
      {"datasets", rows},
      {"average", row_json(report.average, report.metrics)},
  };
  if (report.metrics.routing) j["routing"] = routing_json(report.routing);
  return j;
}

std::string render_table(const EvalReport& report) {
  const auto& m = report.metrics;
  auto cell = [](const std::optional<double>& v) { return v ? fmt::format("{:.1f}", *v) : std::string("-"); };
  std::string out = fmt::format("{:<20} {:>8} {:>7}", "Dataset", "N", "Failed");
  if (m.em) out += fmt::format(" {:>7}", "EM");
  if (m.sbert) out += fmt::format(" {:>7}", "SBert");
  if (m.llm) out += fmt::format(" {:>7}", "LLM");
  if (m.routing) out += fmt::format(" {:>9} {:>9}", "Route-S", "Route-G");
  out += '\n';
  auto line = [&](const MetricRow& r) {
    out += fmt::format("{:<20} {:>8} {:>7}", r.dataset, r.samples, r.failed);
    if (m.em) out += fmt::format(" {:>7}", cell(r.em_pct));
    if (m.sbert) out += fmt::format(" {:>7}", cell(r.sbert_pct));
    if (m.llm) out += fmt::format(" {:>7}", cell(r.llm_pct));
    if (m.routing) {
      out += fmt::format(" {:>9} {:>9}", cell(r.routing.specialized_pct()), cell(r.routing.general_pct()));
    }
    out += '\n';
  };
  for (const auto& r : report.datasets) line(r);
  line(report.average);
  if (report.average.sbert_excluded + report.average.llm_excluded > 0) {
    out += fmt::format("excluded: sbert {}, llm {}\n", report.average.sbert_excluded, report.average.llm_excluded);
  }
  return out;
}

EvalOutcome evaluate_sample(const EvalSample& sample, const EvalDeps& deps, const MetricSet& metrics) {
  EvalOutcome o;
  o.sample = sample;
  try {
    o.prediction = deps.predict(sample);
  } catch (const std::exception& e) {
    o.error = e.what();
    return o;
  }
  const auto& label = o.prediction->label;
  if (metrics.em) o.em = exact_match(label, sample.ground_truth);
  if (metrics.sbert) {
    try {
      o.sbert_sim = semantic_similarity(*deps.text_embedder, label, sample.ground_truth);
    } catch (const std::exception& e) {
      o.sbert_error = e.what();
    }
  }
  if (metrics.llm) {
    try {
      o.judge = deps.judge->judge_pair(label, sample.ground_truth);
      o.judge_score = judge_score(*o.judge);
    } catch (const std::exception& e) {
      o.judge_error = e.what();
    }
  }
  return o;
}

namespace {

// Reads completed outcomes and drops a trailing partial line left by an
// interrupted writer.
std::map<std::string, EvalOutcome> load_existing(const std::filesystem::path& path) {
  std::map<std::string, EvalOutcome> out;
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return out;
  std::string content;
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    content = ss.str();
  }
  const auto last_newline = content.rfind('\n');
  const std::size_t keep = last_newline == std::string::npos ? 0 : last_newline + 1;
  if (keep != content.size()) {
    std::filesystem::resize_file(path, keep, ec);
    if (ec) throw IoError("cannot truncate partial record in " + path.string());
    content.resize(keep);
  }
  std::stringstream lines(content);
  std::string text;
  while (std::getline(lines, text)) {
    if (text.empty()) continue;
    auto row = nlohmann::json::parse(text, nullptr, false);
    if (row.is_discarded()) {
      log::warn("eval_outcome_skipped", {{"reason", "invalid JSON"}});
      continue;
    }
    try {
      auto o = outcome_from_json(row);
      auto key = outcome_key(o.sample);
      out.insert_or_assign(std::move(key), std::move(o));
    } catch (const std::exception& e) {
      log::warn("eval_outcome_skipped", {{"reason", e.what()}});
    }
  }
  return out;
}

}  // namespace

EvalRun run_eval(const DatasetManifest& manifest, const EvalDeps& deps, const EvalOptions& options) {
  if (!deps.predict) throw ConfigError("evaluation needs a prediction source");
  if (options.metrics.sbert && !deps.text_embedder) throw ConfigError("sbert metric needs a text-embedding endpoint");
  if (options.metrics.llm && !deps.judge) throw ConfigError("llm metric needs a judge endpoint");
  if (options.concurrency == 0) throw ConfigError("concurrency must be at least 1");

  EvalDeps cached = deps;
  if (deps.text_embedder) cached.text_embedder = std::make_shared<CachedTextEmbedder>(deps.text_embedder);

  std::map<std::string, EvalOutcome> existing;
  if (options.outcomes_path) existing = load_existing(*options.outcomes_path);

  const auto& samples = manifest.samples;
  std::vector<std::optional<EvalOutcome>> slots(samples.size());
  std::vector<std::size_t> todo;
  EvalRun run;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto it = existing.find(outcome_key(samples[i]));
    if (it != existing.end() && is_complete(it->second, options.metrics)) {
      slots[i] = it->second;
      ++run.reused;
    } else {
      todo.push_back(i);
    }
  }
  if (options.max_new_samples && todo.size() > *options.max_new_samples) {
    run.pending = todo.size() - *options.max_new_samples;
    todo.resize(*options.max_new_samples);
  }

  std::ofstream sink;
  if (options.outcomes_path && !todo.empty()) {
    sink.open(*options.outcomes_path, std::ios::app | std::ios::binary);
    if (!sink) throw IoError("cannot append to " + options.outcomes_path->string());
  }
  std::mutex sink_mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < todo.size(); k = next++) {
      const std::size_t i = todo[k];
      auto outcome = evaluate_sample(samples[i], cached, options.metrics);
      if (sink.is_open()) {
        const std::string line = to_json(outcome).dump() + '\n';
        std::lock_guard lock(sink_mu);
        sink << line;
        sink.flush();
      }
      slots[i] = std::move(outcome);
    }
  };
  {
    const std::size_t threads = std::min(options.concurrency, todo.size());
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    if (threads > 0) worker();
  }
  if (sink.is_open() && !sink) throw IoError("failed writing " + options.outcomes_path->string());
  run.computed = todo.size();

  for (auto& s : slots) {
    if (s) run.outcomes.push_back(std::move(*s));
  }
  run.report = aggregate(run.outcomes, options.metrics, options.averaging);
  return run;
}

PredictFn predictions_lookup(std::map<std::string, Prediction> predictions) {
  auto table = std::make_shared<const std::map<std::string, Prediction>>(std::move(predictions));
  return [table](const EvalSample& s) {
    auto it = table->find(s.image_ref);
    if (it == table->end()) throw DataError("no prediction for " + s.image_ref);
    return it->second;
  };
}

}  // namespace hymor
