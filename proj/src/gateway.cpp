#include "hymor/gateway.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <thread>

#include "hymor/errors.hpp"
#include "hymor/log.hpp"
#include "hymor/prompts.hpp"

namespace hymor {

namespace {

std::string_view trim(std::string_view s) {
  auto is_space = [](unsigned char ch) { return std::isspace(ch) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string strip_trailing_slash(std::string url) {
  while (!url.empty() && url.back() == '/') url.pop_back();
  return url;
}

// End of the balanced object starting at text[start] == '{', or npos.
std::size_t balanced_object_end(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (ch == '\\') {
        escaped = true;
      } else if (ch == '"') {
        in_string = false;
      }
      continue;
    }
    if (ch == '"') {
      in_string = true;
    } else if (ch == '{') {
      ++depth;
    } else if (ch == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

std::string message_content(const nlohmann::json& response) {
  const auto& choices = response.at("choices");
  if (!choices.is_array() || choices.empty()) throw DataError("response has no choices");
  const auto& content = choices.at(0).at("message").at("content");
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string text;
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text") text += part.value("text", "");
    }
    return text;
  }
  throw DataError("message content is neither a string nor a list of parts");
}

nlohmann::json coarse_schema() {
  return {
      {"type", "object"},
      {"properties",
       {{"category", {{"type", "string"}, {"enum", {"plant", "animal", "other"}}}},
        {"name", {{"type", "string"}}}}},
      {"required", {"category", "name"}},
      {"additionalProperties", false},
  };
}

void merge_sampling(nlohmann::json& body, const nlohmann::json& sampling) {
  if (!sampling.is_object()) return;
  for (auto it = sampling.begin(); it != sampling.end(); ++it) body[it.key()] = it.value();
}

}  // namespace

void EndpointConfig::validate(std::string_view name) const {
  const std::string who(name);
  if (base_url.empty()) throw ConfigError(who + ": base_url is required");
  split_url(base_url);
  if (timeout.count() <= 0) throw ConfigError(who + ": timeout must be positive");
  if (max_retries < 0) throw ConfigError(who + ": max_retries must be >= 0");
  if (backoff_initial.count() < 0 || backoff_max.count() < 0) {
    throw ConfigError(who + ": backoff must be non-negative");
  }
}

std::string media_type_for_path(std::string_view path) {
  std::string ext;
  if (auto dot = path.rfind('.'); dot != std::string_view::npos) ext = std::string(path.substr(dot + 1));
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == "png") return "image/png";
  if (ext == "webp") return "image/webp";
  if (ext == "gif") return "image/gif";
  if (ext == "bmp") return "image/bmp";
  return "image/jpeg";
}

ImagePayload ImagePayload::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  ImagePayload p;
  p.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (p.bytes.empty()) throw DataError("image file is empty: " + path);
  p.media_type = media_type_for_path(path);
  return p;
}

std::string_view to_string(Rating r) noexcept {
  switch (r) {
    case Rating::A: return "A";
    case Rating::B: return "B";
    case Rating::C: return "C";
  }
  return "C";
}

std::optional<Rating> parse_rating_letter(std::string_view s) noexcept {
  if (s == "A") return Rating::A;
  if (s == "B") return Rating::B;
  if (s == "C") return Rating::C;
  return std::nullopt;
}

std::optional<nlohmann::json> extract_first_json_object(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos;
       start = text.find('{', start + 1)) {
    const auto end = balanced_object_end(text, start);
    if (end == std::string_view::npos) continue;
    auto parsed = nlohmann::json::parse(text.substr(start, end - start + 1), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
  }
  return std::nullopt;
}

CoarsePrediction parse_coarse_response(std::string_view response) {
  const auto obj = extract_first_json_object(response);
  if (!obj) throw ModelOutputError("no JSON object in model output");
  if (!obj->contains("category") || !(*obj)["category"].is_string()) {
    throw ModelOutputError("JSON object lacks a string \"category\"");
  }
  if (!obj->contains("name") || !(*obj)["name"].is_string()) {
    throw ModelOutputError("JSON object lacks a string \"name\"");
  }
  CoarsePrediction out;
  out.raw_response = std::string(response);
  out.name = std::string(trim((*obj)["name"].get_ref<const std::string&>()));
  if (out.name.empty()) throw ModelOutputError("\"name\" is empty");

  const auto& raw_category = (*obj)["category"].get_ref<const std::string&>();
  if (auto c = parse_category(raw_category)) {
    out.category = *c;
  } else {
    out.category = Category::other;
    out.warning = "category '" + raw_category + "' outside {animal, plant, other}; mapped to other";
  }
  return out;
}

std::optional<Rating> parse_judge_response(std::string_view response) {
  std::size_t i = 0;
  while (i < response.size()) {
    while (i < response.size() && std::isspace(static_cast<unsigned char>(response[i]))) ++i;
    const std::size_t start = i;
    while (i < response.size() && !std::isspace(static_cast<unsigned char>(response[i]))) ++i;
    std::string_view token = response.substr(start, i - start);
    while (!token.empty() && std::ispunct(static_cast<unsigned char>(token.front()))) token.remove_prefix(1);
    while (!token.empty() && std::ispunct(static_cast<unsigned char>(token.back()))) token.remove_suffix(1);
    if (auto r = parse_rating_letter(token)) return r;
  }
  return std::nullopt;
}

std::vector<EmbeddingVector> TextEmbedder::embed_texts(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_text(t));
  return out;
}

EndpointClient::EndpointClient(EndpointConfig cfg, std::shared_ptr<Transport> transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)) {
  if (!transport_) throw ConfigError("endpoint client needs a transport");
}

std::chrono::milliseconds EndpointClient::backoff_for(int attempt) const noexcept {
  // attempt counts retries from 1.
  auto delay = cfg_.backoff_initial;
  for (int i = 1; i < attempt && delay < cfg_.backoff_max; ++i) delay *= 2;
  return std::min(delay, cfg_.backoff_max);
}

void EndpointClient::pause(int attempt) const {
  const auto delay = backoff_for(attempt);
  if (delay.count() > 0) std::this_thread::sleep_for(delay);
}

EndpointClient::Attempt EndpointClient::send_once(const std::string& url, const std::string& body) const {
  HeaderList headers;
  if (cfg_.auth_token && !cfg_.auth_token->empty()) {
    headers.emplace_back("Authorization", "Bearer " + *cfg_.auth_token);
  }
  if (log::logger().should_log(spdlog::level::debug)) {
    log::debug("gateway_request", {{"url", url}, {"body", redact_images(nlohmann::json::parse(body))}});
  }
  const auto res = transport_->post(url, body, headers, cfg_.timeout);

  Attempt a;
  if (res.status == 0) {
    a.fault = GatewayFault::transport;
    a.failure = url + ": " + (res.error.empty() ? "no response" : res.error);
    a.retryable = true;
    return a;
  }
  log::debug("gateway_response", {{"url", url}, {"status", res.status}, {"body", res.body}});
  if (res.status < 200 || res.status >= 300) {
    a.fault = GatewayFault::http_status;
    a.failure = url + ": HTTP " + std::to_string(res.status);
    a.retryable = res.status == 408 || res.status == 429 || res.status >= 500;
    return a;
  }
  auto parsed = nlohmann::json::parse(res.body, nullptr, false);
  if (parsed.is_discarded()) {
    a.fault = GatewayFault::bad_response;
    a.failure = url + ": response body is not JSON";
    a.retryable = true;
    return a;
  }
  a.response = std::move(parsed);
  return a;
}

ChatClient::ChatClient(EndpointConfig cfg, std::shared_ptr<Transport> transport)
    : client_(std::move(cfg), std::move(transport)) {}

std::string ChatClient::completions_url() const {
  return strip_trailing_slash(client_.config().base_url) + "/chat/completions";
}

nlohmann::json ChatClient::coarse_request(const ImagePayload& image) const {
  const auto& cfg = client_.config();
  nlohmann::json body = {
      {"model", cfg.model_id},
      {"messages",
       {{{"role", "user"},
         {"content",
          {{{"type", "image_url"},
            {"image_url", {{"url", "data:" + image.media_type + ";base64," + base64_encode(image.bytes)}}}},
           {{"type", "text"}, {"text", std::string(prompts::kCoarseRecognition)}}}}}}},
  };
  merge_sampling(body, cfg.sampling);
  if (cfg.guided_decoding) {
    body["response_format"] = {
        {"type", "json_schema"},
        {"json_schema", {{"name", "coarse_prediction"}, {"strict", true}, {"schema", coarse_schema()}}},
    };
  }
  return body;
}

nlohmann::json ChatClient::judge_request(const std::string& prediction, const std::string& ground_truth) const {
  const auto& cfg = client_.config();
  nlohmann::json body = {
      {"model", cfg.model_id},
      {"messages", {{{"role", "user"}, {"content", prompts::render_judge_prompt(prediction, ground_truth)}}}},
  };
  merge_sampling(body, cfg.sampling);
  return body;
}

CoarsePrediction ChatClient::classify_coarse(const ImagePayload& image) {
  if (image.bytes.empty()) throw DataError("image payload is empty");
  auto prediction = client_.call(completions_url(), coarse_request(image), [](const nlohmann::json& r) {
    return parse_coarse_response(message_content(r));
  });
  if (prediction.warning) log::warn("coarse_category_remapped", {{"detail", *prediction.warning}});
  return prediction;
}

Rating ChatClient::judge_pair(const std::string& prediction, const std::string& ground_truth) {
  if (prediction.empty() || ground_truth.empty()) throw DataError("judge inputs must be non-empty");
  return client_.call(completions_url(), judge_request(prediction, ground_truth), [](const nlohmann::json& r) {
    const auto content = message_content(r);
    auto rating = parse_judge_response(content);
    if (!rating) throw ModelOutputError("no A/B/C rating in judge reply: " + content.substr(0, 80));
    return *rating;
  });
}

EmbeddingClient::EmbeddingClient(EndpointConfig cfg, std::shared_ptr<Transport> transport)
    : client_(std::move(cfg), std::move(transport)) {}

EmbeddingVector EmbeddingClient::request(nlohmann::json input) {
  const nlohmann::json body = {{"model", client_.config().model_id}, {"input", std::move(input)}};
  return client_.call(client_.config().base_url, body, [](const nlohmann::json& r) {
    const nlohmann::json* arr = nullptr;
    if (r.contains("embedding")) {
      arr = &r["embedding"];
    } else if (r.contains("data") && r["data"].is_array() && !r["data"].empty()) {
      arr = &r["data"][0].at("embedding");
    }
    if (arr == nullptr || !arr->is_array()) throw DataError("response lacks an \"embedding\" array");
    std::vector<double> values;
    values.reserve(arr->size());
    for (const auto& v : *arr) {
      if (!v.is_number()) throw DataError("embedding entries must be numbers");
      values.push_back(v.get<double>());
    }
    return EmbeddingVector(std::move(values));
  });
}

EmbeddingVector EmbeddingClient::embed_image(const ImagePayload& image) {
  if (image.bytes.empty()) throw DataError("image payload is empty");
  return request({{"type", "image"}, {"data", base64_encode(image.bytes)}, {"media_type", image.media_type}});
}

EmbeddingVector EmbeddingClient::embed_text(const std::string& text) {
  if (text.empty()) throw DataError("cannot embed an empty string");
  return request(text);
}

EmbeddingVector CachedTextEmbedder::embed_text(const std::string& text) {
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(text); it != cache_.end()) return it->second;
  }
  auto v = inner_->embed_text(text);
  std::lock_guard lock(mu_);
  return cache_.try_emplace(text, std::move(v)).first->second;
}

std::size_t CachedTextEmbedder::cached() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) return {};
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw DataError("base64 length is not a multiple of 4");
  std::size_t padding = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (ch == '=') {
      if (i + 2 < text.size()) throw DataError("base64 padding in the middle of input");
      ++padding;
      continue;
    }
    if (padding > 0) throw DataError("base64 data after padding");
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '+' && ch != '/') {
      throw DataError("invalid base64 character");
    }
  }
  if (text.empty()) return {};
  std::vector<std::uint8_t> out(text.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw DataError("invalid base64 input");
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

nlohmann::json redact_images(const nlohmann::json& body) {
  if (body.is_object()) {
    nlohmann::json out = nlohmann::json::object();
    for (auto it = body.begin(); it != body.end(); ++it) {
      const bool inline_image =
          it.value().is_string() &&
          ((it.key() == "url" && it.value().get_ref<const std::string&>().rfind("data:", 0) == 0) ||
           (it.key() == "data" && body.value("type", "") == "image") || it.key() == "image_b64");
      if (inline_image) {
        out[it.key()] = "<elided " + std::to_string(it.value().get_ref<const std::string&>().size()) + " chars>";
      } else {
        out[it.key()] = redact_images(it.value());
      }
    }
    return out;
  }
  if (body.is_array()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : body) out.push_back(redact_images(v));
    return out;
  }
  return body;
}

}  // namespace hymor
