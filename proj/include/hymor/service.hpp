#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "hymor/centroid_index.hpp"
#include "hymor/config.hpp"
#include "hymor/router.hpp"

namespace hymor {

// HTTP recognition service:
//   POST /v1/recognize   {"image_b64", "media_type"?} -> RecognitionResult JSON
//   GET  /healthz        index statistics and endpoint reachability
//   POST /admin/reload   reloads the index file and swaps it in atomically
class RecognitionService {
 public:
  using IndexLoader = std::function<std::shared_ptr<const CentroidIndex>()>;

  RecognitionService(ServiceConfig service, RouterConfig router, CoarseRecognizer& recognizer,
                     ImageEmbedder& embedder, IndexLoader loader);
  ~RecognitionService();

  RecognitionService(const RecognitionService&) = delete;
  RecognitionService& operator=(const RecognitionService&) = delete;

  // Loads through the loader and swaps the new index in. On failure the
  // previous index (if any) stays active and the error is rethrown.
  void reload();
  void set_index(std::shared_ptr<const CentroidIndex> index);
  std::shared_ptr<const CentroidIndex> index() const;

  void set_endpoint_status(nlohmann::json status);

  // Binds to service.host:service.port; port 0 picks a free port. Returns the
  // bound port, throws IoError on failure.
  int bind();
  // Blocks serving requests until stop(). In-flight requests finish first.
  void listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hymor
