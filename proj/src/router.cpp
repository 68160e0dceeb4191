#include "hymor/router.hpp"

#include <chrono>

#include "hymor/log.hpp"

namespace hymor {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

ErrorKind kind_of(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return err->kind();
  return ErrorKind::endpoint;
}

}  // namespace

void RouterConfig::validate() const {
  if (!(threshold >= -1.0 && threshold <= 1.0)) {
    throw ConfigError("router threshold must lie in [-1, 1], got " + std::to_string(threshold));
  }
  if (specialized_categories.count(Category::other) != 0) {
    throw ConfigError("specialized categories cannot include other");
  }
}

std::string_view to_string(Decision d) noexcept {
  switch (d) {
    case Decision::direct_coarse: return "direct_coarse";
    case Decision::fine_adopted: return "fine_adopted";
    case Decision::fallback_below_threshold: return "fallback_below_threshold";
    case Decision::fallback_degenerate: return "fallback_degenerate";
  }
  return "direct_coarse";
}

std::string_view to_string(Source s) noexcept {
  return s == Source::centroid_retrieval ? "centroid_retrieval" : "mllm";
}

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::coarse: return "coarse";
    case Stage::embed: return "embed";
    case Stage::search: return "search";
  }
  return "coarse";
}

std::optional<Decision> parse_decision(std::string_view s) noexcept {
  for (auto d : {Decision::direct_coarse, Decision::fine_adopted, Decision::fallback_below_threshold,
                 Decision::fallback_degenerate}) {
    if (to_string(d) == s) return d;
  }
  return std::nullopt;
}

Decision decide(Category category, const std::optional<Match>& match, double threshold,
                const CategorySet& specialized) noexcept {
  if (specialized.count(category) == 0) return Decision::direct_coarse;
  if (!match || match->no_match) return Decision::fallback_degenerate;
  return match->similarity >= threshold ? Decision::fine_adopted : Decision::fallback_below_threshold;
}

RecognitionResult Router::recognize(const CentroidIndex& index, const ImagePayload& image) const {
  const auto start = Clock::now();
  RecognitionResult result;
  auto& trace = result.trace;
  trace.threshold = cfg_.threshold;

  try {
    trace.coarse = recognizer_.classify_coarse(image);
  } catch (const std::exception& e) {
    throw RouterError(Stage::coarse, kind_of(e), e.what());
  }
  trace.timings.coarse_ms = ms_since(start);
  result.category = trace.coarse.category;

  if (cfg_.specialized_categories.count(trace.coarse.category) != 0) {
    std::optional<EmbeddingVector> embedding;
    const auto embed_start = Clock::now();
    try {
      embedding = embedder_.embed_image(image);
    } catch (const std::exception& e) {
      if (!cfg_.degrade_on_retrieval_error) throw RouterError(Stage::embed, kind_of(e), e.what());
      trace.degraded = std::string("embed: ") + e.what();
    }
    trace.timings.embed_ms = ms_since(embed_start);

    if (embedding) {
      const auto search_start = Clock::now();
      try {
        trace.retrieval = index.search(*embedding);
      } catch (const std::exception& e) {
        if (!cfg_.degrade_on_retrieval_error) throw RouterError(Stage::search, kind_of(e), e.what());
        trace.degraded = std::string("search: ") + e.what();
      }
      trace.timings.search_ms = ms_since(search_start);
    }
    if (trace.degraded) log::warn("retrieval_degraded", {{"detail", *trace.degraded}});
  }

  trace.decision = decide(trace.coarse.category, trace.retrieval, cfg_.threshold, cfg_.specialized_categories);
  switch (trace.decision) {
    case Decision::fine_adopted:
      result.label = trace.retrieval->label;
      result.granularity = Granularity::fine;
      result.source = Source::centroid_retrieval;
      result.similarity = trace.retrieval->similarity;
      break;
    case Decision::fallback_below_threshold:
      result.label = trace.coarse.name;
      result.similarity = trace.retrieval->similarity;
      break;
    case Decision::direct_coarse:
    case Decision::fallback_degenerate:
      result.label = trace.coarse.name;
      break;
  }
  trace.timings.total_ms = ms_since(start);
  log::info("recognize", {{"decision", to_string(trace.decision)},
                          {"coarse_ms", trace.timings.coarse_ms},
                          {"embed_ms", trace.timings.embed_ms},
                          {"search_ms", trace.timings.search_ms},
                          {"total_ms", trace.timings.total_ms}});
  return result;
}

std::optional<std::string> check_consistency(const RecognitionResult& r) {
  const auto& t = r.trace;
  const bool fine = r.granularity == Granularity::fine;
  if (fine != (r.source == Source::centroid_retrieval)) return "granularity/source disagree";
  if (fine != (r.similarity.has_value() && *r.similarity >= t.threshold)) {
    return "fine granularity must coincide with similarity >= threshold";
  }
  if (r.category == Category::other && r.similarity) return "category other carries a similarity";
  if (r.category != t.coarse.category) return "result category differs from coarse category";

  const bool usable = t.retrieval && !t.retrieval->no_match;
  switch (t.decision) {
    case Decision::direct_coarse:
      if (t.retrieval || r.similarity || fine || r.label != t.coarse.name) return "direct_coarse fields mismatch";
      break;
    case Decision::fine_adopted:
      if (!usable || !fine || r.label != t.retrieval->label || r.similarity != t.retrieval->similarity) {
        return "fine_adopted fields mismatch";
      }
      break;
    case Decision::fallback_below_threshold:
      if (!usable || fine || !r.similarity || *r.similarity >= t.threshold || r.label != t.coarse.name) {
        return "fallback_below_threshold fields mismatch";
      }
      break;
    case Decision::fallback_degenerate:
      if (usable || fine || r.similarity || r.label != t.coarse.name) return "fallback_degenerate fields mismatch";
      break;
  }
  return std::nullopt;
}

nlohmann::json to_json(const RecognitionResult& r, const JsonOptions& options) {
  nlohmann::json out = {
      {"label", r.label},
      {"granularity", to_string(r.granularity)},
      {"source", to_string(r.source)},
      {"category", to_string(r.category)},
      {"similarity", r.similarity ? nlohmann::json(*r.similarity) : nlohmann::json(nullptr)},
  };
  if (!options.include_trace) return out;

  const auto& t = r.trace;
  std::string raw = t.coarse.raw_response;
  if (options.raw_response_limit > 0 && raw.size() > options.raw_response_limit) {
    raw.resize(options.raw_response_limit);
  }
  nlohmann::json coarse = {
      {"category", to_string(t.coarse.category)},
      {"name", t.coarse.name},
      {"raw_response", raw},
      {"warning", t.coarse.warning ? nlohmann::json(*t.coarse.warning) : nlohmann::json(nullptr)},
  };
  nlohmann::json retrieval = nullptr;
  if (t.retrieval) {
    retrieval = {
        {"label", t.retrieval->label},
        {"category", to_string(t.retrieval->category)},
        {"similarity", t.retrieval->similarity},
        {"no_match", t.retrieval->no_match},
    };
  }
  out["trace"] = {
      {"coarse", coarse},
      {"retrieval", retrieval},
      {"decision", to_string(t.decision)},
      {"threshold", t.threshold},
      {"degraded", t.degraded ? nlohmann::json(*t.degraded) : nlohmann::json(nullptr)},
      {"timings_ms",
       {{"coarse", t.timings.coarse_ms},
        {"embed", t.timings.embed_ms},
        {"search", t.timings.search_ms},
        {"total", t.timings.total_ms}}},
  };
  return out;
}

namespace {

void require(std::vector<std::string>& errors, const nlohmann::json& obj, const std::string& path,
             const std::string& key, nlohmann::json::value_t type, bool nullable = false) {
  if (!obj.contains(key)) {
    errors.push_back(path + "." + key + ": missing");
    return;
  }
  const auto& v = obj[key];
  if (nullable && v.is_null()) return;
  const bool ok = type == nlohmann::json::value_t::number_float ? v.is_number() : v.type() == type;
  if (!ok) errors.push_back(path + "." + key + ": wrong type");
}

void require_enum(std::vector<std::string>& errors, const nlohmann::json& obj, const std::string& path,
                  const std::string& key, std::initializer_list<std::string_view> allowed) {
  if (!obj.contains(key) || !obj[key].is_string()) return;
  const auto& v = obj[key].get_ref<const std::string&>();
  for (auto a : allowed) {
    if (v == a) return;
  }
  errors.push_back(path + "." + key + ": '" + v + "' not in enum");
}

}  // namespace

std::vector<std::string> validate_recognition_json(const nlohmann::json& doc) {
  using T = nlohmann::json::value_t;
  std::vector<std::string> errors;
  if (!doc.is_object()) return {"$: not an object"};
  require(errors, doc, "$", "label", T::string);
  require(errors, doc, "$", "granularity", T::string);
  require(errors, doc, "$", "source", T::string);
  require(errors, doc, "$", "category", T::string);
  require(errors, doc, "$", "similarity", T::number_float, true);
  require_enum(errors, doc, "$", "granularity", {"fine", "coarse"});
  require_enum(errors, doc, "$", "source", {"mllm", "centroid_retrieval"});
  require_enum(errors, doc, "$", "category", {"animal", "plant", "other"});
  if (doc.contains("label") && doc["label"].is_string() && doc["label"].get_ref<const std::string&>().empty()) {
    errors.push_back("$.label: empty");
  }
  if (!errors.empty()) return errors;

  const bool fine = doc["granularity"] == "fine";
  if (fine != (doc["source"] == "centroid_retrieval")) errors.push_back("$: granularity/source disagree");
  if (fine && doc["similarity"].is_null()) errors.push_back("$: fine result without similarity");
  if (doc["category"] == "other" && !doc["similarity"].is_null()) {
    errors.push_back("$: category other with similarity");
  }
  if (doc.contains("similarity") && doc["similarity"].is_number()) {
    const double s = doc["similarity"].get<double>();
    if (s < -1.0 - 1e-6 || s > 1.0 + 1e-6) errors.push_back("$.similarity: outside [-1, 1]");
  }

  if (!doc.contains("trace")) return errors;
  const auto& t = doc["trace"];
  if (!t.is_object()) {
    errors.push_back("$.trace: not an object");
    return errors;
  }
  require(errors, t, "$.trace", "coarse", T::object);
  require(errors, t, "$.trace", "retrieval", T::object, true);
  require(errors, t, "$.trace", "decision", T::string);
  require(errors, t, "$.trace", "threshold", T::number_float);
  require(errors, t, "$.trace", "degraded", T::string, true);
  require(errors, t, "$.trace", "timings_ms", T::object);
  require_enum(errors, t, "$.trace", "decision",
               {"direct_coarse", "fine_adopted", "fallback_below_threshold", "fallback_degenerate"});
  if (!errors.empty()) return errors;

  const auto& c = t["coarse"];
  require(errors, c, "$.trace.coarse", "category", T::string);
  require(errors, c, "$.trace.coarse", "name", T::string);
  require(errors, c, "$.trace.coarse", "raw_response", T::string);
  require(errors, c, "$.trace.coarse", "warning", T::string, true);
  require_enum(errors, c, "$.trace.coarse", "category", {"animal", "plant", "other"});
  if (!t["retrieval"].is_null()) {
    const auto& m = t["retrieval"];
    require(errors, m, "$.trace.retrieval", "label", T::string);
    require(errors, m, "$.trace.retrieval", "category", T::string);
    require(errors, m, "$.trace.retrieval", "similarity", T::number_float);
    require(errors, m, "$.trace.retrieval", "no_match", T::boolean);
  }
  for (const char* key : {"coarse", "embed", "search", "total"}) {
    require(errors, t["timings_ms"], "$.trace.timings_ms", key, T::number_float);
  }
  if (!errors.empty()) return errors;

  const double tau = t["threshold"].get<double>();
  const auto decision = t["decision"].get<std::string>();
  if (fine != (decision == "fine_adopted")) errors.push_back("$.trace.decision: disagrees with granularity");
  if (fine && doc["similarity"].get<double>() < tau) errors.push_back("$: fine result below threshold");
  if (decision == "fallback_below_threshold" &&
      (doc["similarity"].is_null() || doc["similarity"].get<double>() >= tau)) {
    errors.push_back("$: below-threshold fallback without a sub-threshold similarity");
  }
  if (decision == "direct_coarse" && !t["retrieval"].is_null()) {
    errors.push_back("$.trace.retrieval: present for direct_coarse");
  }
  if (!fine && doc["label"] != c["name"]) errors.push_back("$.label: coarse result must carry the coarse name");
  return errors;
}

}  // namespace hymor
