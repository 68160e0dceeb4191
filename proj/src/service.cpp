#include "hymor/service.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "hymor/errors.hpp"
#include "hymor/log.hpp"

namespace hymor {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message,
                const std::optional<std::string>& stage = std::nullopt) {
  nlohmann::json body = {{"error", message}};
  if (stage) body["stage"] = *stage;
  send_json(res, status, body);
}

}  // namespace

struct RecognitionService::Impl {
  ServiceConfig service;
  Router router;
  IndexLoader loader;

  mutable std::mutex index_mu;
  std::shared_ptr<const CentroidIndex> current;
  mutable std::mutex status_mu;
  nlohmann::json endpoint_status = nlohmann::json::object();

  httplib::Server server;

  Impl(ServiceConfig svc, RouterConfig cfg, CoarseRecognizer& rec, ImageEmbedder& emb, IndexLoader load)
      : service(std::move(svc)), router(std::move(cfg), rec, emb), loader(std::move(load)) {}

  std::shared_ptr<const CentroidIndex> snapshot() const {
    std::lock_guard lock(index_mu);
    return current;
  }

  nlohmann::json index_stats(const CentroidIndex& idx) const {
    return {{"classes", idx.size()},
            {"dim", idx.dim()},
            {"degenerate_classes", idx.degenerate_count()},
            {"format_version", idx.format_version()}};
  }

  void recognize(const httplib::Request& req, httplib::Response& res) {
    const auto idx = snapshot();
    if (!idx) return send_error(res, 503, "index not loaded yet");

    const auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "body must be a JSON object");
    if (!body.contains("image_b64") || !body["image_b64"].is_string()) {
      return send_error(res, 400, "\"image_b64\" must be a string");
    }
    ImagePayload image;
    if (body.contains("media_type")) {
      if (!body["media_type"].is_string()) return send_error(res, 400, "\"media_type\" must be a string");
      image.media_type = body["media_type"].get<std::string>();
    }
    try {
      image.bytes = base64_decode(body["image_b64"].get_ref<const std::string&>());
    } catch (const DataError& e) {
      return send_error(res, 400, e.what());
    }
    if (image.bytes.empty()) return send_error(res, 400, "image is empty");

    try {
      const auto result = router.recognize(*idx, image);
      send_json(res, 200, to_json(result, {service.include_trace, service.raw_response_limit}));
    } catch (const RouterError& e) {
      log::warn("recognize_failed", {{"stage", to_string(e.stage())}, {"error", e.what()}});
      send_error(res, 502, e.what(), std::string(to_string(e.stage())));
    }
  }

  void healthz(httplib::Response& res) {
    const auto idx = snapshot();
    nlohmann::json body;
    {
      std::lock_guard lock(status_mu);
      body["endpoints"] = endpoint_status;
    }
    if (!idx) {
      body["status"] = "loading";
      return send_json(res, 503, body);
    }
    body.update(index_stats(*idx));
    body["status"] = "ready";
    body["threshold"] = router.config().threshold;
    send_json(res, 200, body);
  }

  void install_routes(RecognitionService& owner) {
    server.set_payload_max_length(service.max_body_bytes);
    const auto timeout = static_cast<time_t>(service.request_timeout.count());
    server.set_read_timeout(timeout, 0);
    server.set_write_timeout(timeout, 0);
    const auto threads = std::max<std::size_t>(1, service.threads);
    server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

    server.Post("/v1/recognize", [this](const httplib::Request& req, httplib::Response& res) { recognize(req, res); });
    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) { healthz(res); });
    server.Post("/admin/reload", [this, &owner](const httplib::Request&, httplib::Response& res) {
      try {
        owner.reload();
        send_json(res, 200, index_stats(*snapshot()));
      } catch (const std::exception& e) {
        send_error(res, 500, std::string("reload failed: ") + e.what());
      }
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        if (ep) std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send_error(res, 500, what);
    });
    server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      log::info("http_request", {{"method", req.method}, {"path", req.path}, {"status", res.status}});
    });
  }
};

RecognitionService::RecognitionService(ServiceConfig service, RouterConfig router, CoarseRecognizer& recognizer,
                                       ImageEmbedder& embedder, IndexLoader loader)
    : impl_(std::make_unique<Impl>(std::move(service), std::move(router), recognizer, embedder, std::move(loader))) {
  impl_->install_routes(*this);
}

RecognitionService::~RecognitionService() { stop(); }

void RecognitionService::reload() {
  if (!impl_->loader) throw ConfigError("service has no index loader");
  auto fresh = impl_->loader();
  if (!fresh) throw DataError("index loader returned nothing");
  log::info("index_loaded", impl_->index_stats(*fresh));
  set_index(std::move(fresh));
}

void RecognitionService::set_index(std::shared_ptr<const CentroidIndex> index) {
  std::lock_guard lock(impl_->index_mu);
  impl_->current = std::move(index);
}

std::shared_ptr<const CentroidIndex> RecognitionService::index() const { return impl_->snapshot(); }

void RecognitionService::set_endpoint_status(nlohmann::json status) {
  std::lock_guard lock(impl_->status_mu);
  impl_->endpoint_status = std::move(status);
}

int RecognitionService::bind() {
  const auto& svc = impl_->service;
  int port = svc.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(svc.host);
    if (port < 0) throw IoError("cannot bind to " + svc.host);
  } else if (!impl_->server.bind_to_port(svc.host, port)) {
    throw IoError("cannot bind to " + svc.host + ":" + std::to_string(port));
  }
  log::info("service_bound", {{"host", svc.host}, {"port", port}});
  return port;
}

void RecognitionService::listen() { impl_->server.listen_after_bind(); }

void RecognitionService::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

bool RecognitionService::running() const { return impl_->server.is_running(); }

}  // namespace hymor
