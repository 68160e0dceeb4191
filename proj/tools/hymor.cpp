// hymor: build centroid indexes, recognize images, evaluate and calibrate,
// and serve the recognition API.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hymor/calibration.hpp"
#include "hymor/config.hpp"
#include "hymor/errors.hpp"
#include "hymor/eval.hpp"
#include "hymor/index_io.hpp"
#include "hymor/log.hpp"
#include "hymor/manifest.hpp"
#include "hymor/router.hpp"
#include "hymor/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct Common {
  std::optional<std::string> config_path;
  std::string log_level = "warn";
  bool json_out = false;
  hymor::ConfigOverrides overrides;
  std::optional<double> threshold;
};

hymor::AppConfig app_config(const Common& c) {
  auto flags = c.overrides;
  flags.threshold = c.threshold;
  std::optional<fs::path> file;
  if (c.config_path) file = *c.config_path;
  return hymor::load_app_config(file, hymor::process_environment(), flags);
}

std::shared_ptr<hymor::Transport> make_transport(std::size_t cap) {
  return std::make_shared<hymor::ConcurrencyLimitedTransport>(std::make_shared<hymor::HttpTransport>(),
                                                              static_cast<std::ptrdiff_t>(std::max<std::size_t>(cap, 1)));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw hymor::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw hymor::IoError("failed writing " + path.string());
}

// Live pipeline pieces shared by recognize, eval and calibrate.
struct LiveStack {
  std::shared_ptr<hymor::Transport> transport;
  std::unique_ptr<hymor::ChatClient> chat;
  std::unique_ptr<hymor::EmbeddingClient> image_embed;
  std::shared_ptr<const hymor::CentroidIndex> index;
  std::unique_ptr<hymor::Router> router;

  LiveStack(const hymor::AppConfig& cfg, hymor::RouterConfig router_cfg, std::size_t cap)
      : transport(make_transport(cap)) {
    chat = std::make_unique<hymor::ChatClient>(cfg.require_endpoint(cfg.mllm, "mllm"), transport);
    image_embed = std::make_unique<hymor::EmbeddingClient>(cfg.require_endpoint(cfg.image_embed, "image_embed"), transport);
    if (cfg.index_path.empty()) throw hymor::ConfigError("router.index_path is required");
    index = std::make_shared<const hymor::CentroidIndex>(hymor::load_index(cfg.index_path));
    router = std::make_unique<hymor::Router>(std::move(router_cfg), *chat, *image_embed);
  }

  hymor::PredictFn predictor(const std::optional<fs::path>& base_dir) const {
    return [this, base_dir](const hymor::EvalSample& s) {
      fs::path p(s.image_ref);
      if (p.is_relative() && base_dir) p = *base_dir / p;
      const auto result = router->recognize(*index, hymor::ImagePayload::from_file(p.string()));
      return hymor::prediction_from(result, s.image_ref);
    };
  }
};

int cmd_build_index(const Common& c, const std::string& input, const std::string& output) {
  const auto builder = hymor::read_build_jsonl(fs::path(input));
  const auto index = builder.finalize();
  hymor::save_index(index, fs::path(output));
  const json summary = {{"output", output},
                        {"classes", index.size()},
                        {"dim", index.dim()},
                        {"samples", builder.sample_count()},
                        {"degenerate_classes", index.degenerate_count()}};
  if (c.json_out) {
    std::cout << summary.dump() << '\n';
  } else {
    std::cout << "wrote " << output << ": " << index.size() << " classes, dim " << index.dim() << ", "
              << builder.sample_count() << " samples";
    if (index.degenerate_count() > 0) std::cout << ", " << index.degenerate_count() << " degenerate";
    std::cout << '\n';
  }
  return 0;
}

int cmd_recognize(const Common& c, const std::string& image_path) {
  const auto cfg = app_config(c);
  cfg.validate_for_live();
  LiveStack stack(cfg, cfg.router_config(), 1);
  const auto result = stack.router->recognize(*stack.index, hymor::ImagePayload::from_file(image_path));
  if (c.json_out) {
    auto j = hymor::to_json(result);
    j["image"] = image_path;
    std::cout << j.dump() << '\n';
  } else {
    std::cout << result.label << "  [" << hymor::to_string(result.granularity) << ", "
              << hymor::to_string(result.trace.decision);
    if (result.similarity) std::cout << ", similarity " << *result.similarity;
    std::cout << "]\n";
  }
  return 0;
}

struct EvalArgs {
  std::string manifest;
  std::optional<std::string> predictions;
  std::string metrics = "em";
  std::optional<std::size_t> limit;
  bool micro = false;
  bool check_images = false;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
  const auto cfg = app_config(c);
  const auto metrics = hymor::MetricSet::parse(a.metrics);

  hymor::ManifestLoadOptions mopts;
  const bool live = !a.predictions;
  mopts.missing_images = (live || a.check_images) ? hymor::MissingImagePolicy::error : hymor::MissingImagePolicy::skip_check;
  const auto manifest = hymor::load_manifest(a.manifest, mopts);

  hymor::EvalDeps deps;
  std::unique_ptr<LiveStack> stack;
  std::shared_ptr<hymor::Transport> transport;
  auto get_transport = [&] {
    if (!transport) transport = make_transport(cfg.eval.concurrency);
    return transport;
  };
  if (live) {
    cfg.validate_for_live();
    stack = std::make_unique<LiveStack>(cfg, cfg.router_config(), cfg.eval.concurrency);
    deps.predict = stack->predictor(fs::path(a.manifest).parent_path());
  } else {
    deps.predict = hymor::predictions_lookup(hymor::read_predictions(fs::path(*a.predictions)));
  }
  if (metrics.sbert) {
    deps.text_embedder =
        std::make_shared<hymor::EmbeddingClient>(cfg.require_endpoint(cfg.text_embed, "text_embed"), get_transport());
  }
  if (metrics.llm) {
    deps.judge = std::make_shared<hymor::ChatClient>(cfg.require_endpoint(cfg.judge, "judge"), get_transport());
  }

  std::error_code ec;
  fs::create_directories(cfg.eval.output_dir, ec);
  if (ec) throw hymor::IoError("cannot create " + cfg.eval.output_dir.string() + ": " + ec.message());

  hymor::EvalOptions opts;
  opts.metrics = metrics;
  opts.concurrency = cfg.eval.concurrency;
  opts.averaging = a.micro ? hymor::Averaging::micro : hymor::Averaging::macro;
  opts.outcomes_path = cfg.eval.output_dir / "outcomes.jsonl";
  opts.max_new_samples = a.limit;
  const auto run = hymor::run_eval(manifest, deps, opts);

  const auto report_json = hymor::to_json(run.report);
  const auto table = hymor::render_table(run.report);
  write_text(cfg.eval.output_dir / "report.json", report_json.dump(2) + "\n");
  write_text(cfg.eval.output_dir / "report.txt", table);
  if (c.json_out) {
    std::cout << report_json.dump() << '\n';
  } else {
    std::cout << table;
    std::cout << "reused " << run.reused << ", computed " << run.computed;
    if (run.pending > 0) std::cout << ", pending " << run.pending;
    std::cout << '\n';
  }
  return 0;
}

struct CalibrateArgs {
  std::optional<std::string> outcomes;
  std::optional<std::string> manifest;
  std::size_t grid = 101;
  double lo = 0.0;
  double hi = 1.0;
};

int cmd_calibrate(const Common& c, const CalibrateArgs& a) {
  std::vector<hymor::EvalOutcome> outcomes;
  if (a.outcomes) {
    std::ifstream in(*a.outcomes);
    if (!in) throw hymor::IoError("cannot open " + *a.outcomes);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto row = json::parse(line, nullptr, false);
      if (row.is_discarded()) throw hymor::ManifestError(n, "not valid JSON");
      try {
        outcomes.push_back(hymor::outcome_from_json(row));
      } catch (const hymor::DataError& e) {
        throw hymor::ManifestError(n, e.what());
      }
    }
  } else if (a.manifest) {
    const auto cfg = app_config(c);
    // Traces carry the raw similarity, so the collection threshold is irrelevant.
    hymor::RouterConfig rc;
    rc.threshold = cfg.threshold.value_or(0.0);
    rc.specialized_categories = cfg.specialized_categories;
    rc.index_path = cfg.index_path;
    rc.degrade_on_retrieval_error = cfg.degrade_on_retrieval_error;
    LiveStack stack(cfg, rc, cfg.eval.concurrency);
    const auto manifest = hymor::load_manifest(*a.manifest);
    hymor::EvalDeps deps;
    deps.predict = stack.predictor(fs::path(*a.manifest).parent_path());
    hymor::EvalOptions opts;
    opts.concurrency = cfg.eval.concurrency;
    outcomes = hymor::run_eval(manifest, deps, opts).outcomes;
  } else {
    throw hymor::ConfigError("calibrate needs --outcomes or --manifest");
  }

  const auto samples = hymor::calibration_samples(outcomes);
  hymor::CalibrationOptions opts;
  opts.grid_points = a.grid;
  opts.grid_min = a.lo;
  opts.grid_max = a.hi;
  const auto result = hymor::calibrate_threshold(samples, opts);
  if (c.json_out) {
    std::cout << hymor::to_json(result).dump() << '\n';
  } else {
    std::cout << "threshold " << result.threshold << " (" << result.objective << " " << result.score * 100.0
              << "% over " << samples.size() << " samples)\n";
  }
  return 0;
}

int cmd_stats(const Common& c, const std::string& manifest_path, bool textbook, bool check_images) {
  hymor::DatasetManifest manifest;
  if (textbook) {
    std::ifstream in(manifest_path);
    if (!in) throw hymor::IoError("cannot open " + manifest_path);
    manifest = hymor::manifest_from_textbook(hymor::parse_textbook_records(in), fs::path(manifest_path).stem().string());
  } else {
    hymor::ManifestLoadOptions opts;
    opts.missing_images = check_images ? hymor::MissingImagePolicy::error : hymor::MissingImagePolicy::skip_check;
    manifest = hymor::load_manifest(manifest_path, opts);
  }
  const auto stats = hymor::summarize(manifest);
  if (c.json_out) {
    std::cout << hymor::to_json(stats).dump() << '\n';
  } else {
    std::cout << hymor::render_stats(stats);
  }
  return 0;
}

int cmd_serve(const Common& c) {
  const auto cfg = app_config(c);
  cfg.validate_for_live();
  const auto router_cfg = cfg.router_config();
  auto transport = make_transport(cfg.service.threads);
  hymor::ChatClient chat(cfg.require_endpoint(cfg.mllm, "mllm"), transport);
  hymor::EmbeddingClient embed(cfg.require_endpoint(cfg.image_embed, "image_embed"), transport);

  const auto index_path = cfg.index_path;
  hymor::RecognitionService service(cfg.service, router_cfg, chat, embed, [index_path] {
    return std::make_shared<const hymor::CentroidIndex>(hymor::load_index(index_path));
  });
  const int port = service.bind();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread server([&service] { service.listen(); });

  json status = json::object();
  hymor::HttpTransport probe;
  for (const auto& [name, ep] : {std::pair{"mllm", cfg.mllm}, std::pair{"image_embed", cfg.image_embed}}) {
    const bool ok = probe.reachable(ep->base_url, std::chrono::seconds(3));
    status[name] = ok;
    if (!ok) hymor::log::warn("endpoint_unreachable", {{"endpoint", name}, {"url", ep->base_url}});
  }
  service.set_endpoint_status(status);

  try {
    service.reload();
  } catch (...) {
    service.stop();
    server.join();
    throw;
  }
  std::cerr << "serving on " << cfg.service.host << ":" << port << '\n';
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  server.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid coarse/fine object recognition: index building, recognition, evaluation, serving"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--log-level", common.log_level, "trace, debug, info, warn, error")->capture_default_str();
  app.add_flag("--json", common.json_out, "machine-readable JSON on stdout");
  app.add_option("--threshold", common.threshold, "retrieval similarity threshold in [-1, 1]");
  app.add_option("--index", common.overrides.index_path, "centroid index file");

  std::string build_in, build_out;
  auto* build = app.add_subcommand("build-index", "build a centroid index from embeddings JSONL");
  build->add_option("-i,--input", build_in, "embeddings JSONL")->required();
  build->add_option("-o,--output", build_out, "index file")->required();

  std::string image;
  auto* recognize = app.add_subcommand("recognize", "recognize one image with the live pipeline");
  recognize->add_option("image", image, "image file")->required()->check(CLI::ExistingFile);

  EvalArgs eval_args;
  std::optional<std::size_t> concurrency;
  std::optional<std::string> out_dir;
  auto* eval = app.add_subcommand("eval", "evaluate predictions or the live pipeline on a manifest");
  eval->add_option("-m,--manifest", eval_args.manifest, "evaluation manifest JSONL")->required();
  eval->add_option("-p,--predictions", eval_args.predictions, "predictions JSONL (offline mode)");
  eval->add_option("--metrics", eval_args.metrics, "em,sbert,llm,routing or all")->capture_default_str();
  eval->add_option("--concurrency", concurrency, "in-flight sample cap");
  eval->add_option("--out", out_dir, "output directory");
  eval->add_option("--limit", eval_args.limit, "stop after this many new samples");
  eval->add_flag("--micro", eval_args.micro, "micro-average over samples instead of datasets");
  eval->add_flag("--check-images", eval_args.check_images, "require manifest images to exist in offline mode");

  CalibrateArgs cal_args;
  auto* calibrate = app.add_subcommand("calibrate", "choose the threshold that maximizes validation EM");
  auto* cal_src = calibrate->add_option_group("source");
  cal_src->add_option("--outcomes", cal_args.outcomes, "per-sample outcomes JSONL from a live eval");
  cal_src->add_option("--manifest", cal_args.manifest, "validation manifest (runs the live pipeline)");
  cal_src->require_option(1);
  calibrate->add_option("--grid", cal_args.grid, "grid points")->capture_default_str();
  calibrate->add_option("--min", cal_args.lo, "lowest threshold")->capture_default_str();
  calibrate->add_option("--max", cal_args.hi, "highest threshold")->capture_default_str();

  std::string stats_manifest;
  bool textbook = false;
  bool stats_check = false;
  auto* stats = app.add_subcommand("stats", "summarize a manifest");
  stats->add_option("-m,--manifest", stats_manifest, "manifest JSONL")->required();
  stats->add_flag("--textbook", textbook, "input holds textbook object records");
  stats->add_flag("--check-images", stats_check, "require images to exist");

  std::optional<std::string> bind;
  auto* serve = app.add_subcommand("serve", "run the HTTP recognition service");
  serve->add_option("--bind", bind, "host:port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : hymor::exit_code_for(hymor::ErrorKind::config);
  }

  try {
    hymor::log::set_level(spdlog::level::from_str(common.log_level));
    common.overrides.concurrency = concurrency;
    common.overrides.output_dir = out_dir;
    common.overrides.bind = bind;
    if (*build) return cmd_build_index(common, build_in, build_out);
    if (*recognize) return cmd_recognize(common, image);
    if (*eval) return cmd_eval(common, eval_args);
    if (*calibrate) return cmd_calibrate(common, cal_args);
    if (*stats) return cmd_stats(common, stats_manifest, textbook, stats_check);
    if (*serve) return cmd_serve(common);
  } catch (const hymor::Error& e) {
    std::cerr << "error (" << hymor::to_string(e.kind()) << "): " << e.what() << '\n';
    return hymor::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
