#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hymor/category.hpp"
#include "hymor/embedding.hpp"
#include "hymor/errors.hpp"
#include "hymor/transport.hpp"

namespace hymor {

struct EndpointConfig {
  std::string base_url;
  std::string model_id;
  std::chrono::milliseconds timeout{30'000};
  int max_retries = 2;
  std::optional<std::string> auth_token;
  // Capped exponential backoff between attempts.
  std::chrono::milliseconds backoff_initial{200};
  std::chrono::milliseconds backoff_max{5'000};
  // Ask the server for schema-constrained output (chat endpoints only).
  bool guided_decoding = true;
  // Passed through verbatim into the request body (temperature, seed, ...).
  nlohmann::json sampling = nlohmann::json::object();

  // Throws ConfigError.
  void validate(std::string_view name) const;
};

struct ImagePayload {
  std::vector<std::uint8_t> bytes;
  std::string media_type = "image/jpeg";

  static ImagePayload from_file(const std::string& path);
};

// Best-effort media type from the file extension.
std::string media_type_for_path(std::string_view path);

struct CoarsePrediction {
  Category category = Category::other;
  std::string name;
  std::string raw_response;
  // Set when the model's category was outside the enum and got mapped to other.
  std::optional<std::string> warning;
};

enum class Rating { A, B, C };

std::string_view to_string(Rating r) noexcept;
std::optional<Rating> parse_rating_letter(std::string_view s) noexcept;

// Parses the chat model's reply. Accepts prose or markdown fences around
// the first well-formed JSON object carrying "category" and "name".
// Throws ModelOutputError on failure.
CoarsePrediction parse_coarse_response(std::string_view response);

// First whitespace-separated token equal to A, B or C once surrounding
// punctuation is stripped.
std::optional<Rating> parse_judge_response(std::string_view response);

// First balanced {...} that parses as a JSON object; nullopt when there is none.
std::optional<nlohmann::json> extract_first_json_object(std::string_view text);

class CoarseRecognizer {
 public:
  virtual ~CoarseRecognizer() = default;
  virtual CoarsePrediction classify_coarse(const ImagePayload& image) = 0;
};

class ImageEmbedder {
 public:
  virtual ~ImageEmbedder() = default;
  virtual EmbeddingVector embed_image(const ImagePayload& image) = 0;
};

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual EmbeddingVector embed_text(const std::string& text) = 0;
  // Same order as the input.
  virtual std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts);
};

class PairJudge {
 public:
  virtual ~PairJudge() = default;
  virtual Rating judge_pair(const std::string& prediction, const std::string& ground_truth) = 0;
};

// Shared request/retry machinery for one endpoint.
class EndpointClient {
 public:
  EndpointClient(EndpointConfig cfg, std::shared_ptr<Transport> transport);

  const EndpointConfig& config() const noexcept { return cfg_; }

  // POSTs `body` to `url`, retrying transport failures, 408/429/5xx and any
  // exception thrown by `decode` (as unparseable output). At most
  // max_retries + 1 requests are sent.
  template <typename Decode>
  auto call(const std::string& url, const nlohmann::json& body, Decode&& decode) const
      -> decltype(decode(std::declval<const nlohmann::json&>()));

  std::chrono::milliseconds backoff_for(int attempt) const noexcept;

 private:
  struct Attempt {
    std::optional<nlohmann::json> response;
    GatewayFault fault = GatewayFault::transport;
    std::string failure;
    bool retryable = false;
  };
  Attempt send_once(const std::string& url, const std::string& body) const;
  void pause(int attempt) const;

  EndpointConfig cfg_;
  std::shared_ptr<Transport> transport_;
};

// OpenAI-style chat-completions client: coarse recognition and judging.
class ChatClient final : public CoarseRecognizer, public PairJudge {
 public:
  ChatClient(EndpointConfig cfg, std::shared_ptr<Transport> transport);

  CoarsePrediction classify_coarse(const ImagePayload& image) override;
  Rating judge_pair(const std::string& prediction, const std::string& ground_truth) override;

  nlohmann::json coarse_request(const ImagePayload& image) const;
  nlohmann::json judge_request(const std::string& prediction, const std::string& ground_truth) const;

 private:
  std::string completions_url() const;
  EndpointClient client_;
};

// {"model", "input"} -> {"embedding": [...]}.
class EmbeddingClient final : public ImageEmbedder, public TextEmbedder {
 public:
  EmbeddingClient(EndpointConfig cfg, std::shared_ptr<Transport> transport);

  EmbeddingVector embed_image(const ImagePayload& image) override;
  EmbeddingVector embed_text(const std::string& text) override;

 private:
  EmbeddingVector request(nlohmann::json input);
  EndpointClient client_;
};

// Memoizes embed_text by string. Thread-safe.
class CachedTextEmbedder final : public TextEmbedder {
 public:
  explicit CachedTextEmbedder(std::shared_ptr<TextEmbedder> inner) : inner_(std::move(inner)) {}
  EmbeddingVector embed_text(const std::string& text) override;
  std::size_t cached() const;

 private:
  std::shared_ptr<TextEmbedder> inner_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, EmbeddingVector> cache_;
};

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
// Strict RFC 4648 decoding; throws DataError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Copy of a request body with inline image data replaced by a size marker.
nlohmann::json redact_images(const nlohmann::json& body);

}  // namespace hymor

#include "hymor/gateway_call.inl"
