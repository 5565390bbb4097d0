#include "fdreward/gateway.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "httplib.h"
#include "fdreward/jsonl.hpp"
#include "fdreward/random.hpp"
#include "fdreward/response_parser.hpp"

namespace fdreward {

using nlohmann::json;

std::string_view to_string(PromptKind k) {
  return k == PromptKind::PreferenceScoring ? "preference_scoring" : "recognition";
}

void ScoreRequest::validate() const {
  if (request_id.empty()) throw std::invalid_argument("request_id is empty");
  if (params.n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  if (params.max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
  if (!image_payload && frame_ref.empty()) throw std::invalid_argument("request carries neither image nor frame_ref");
}

EndpointError::EndpointError(int status, std::string body)
    : GatewayError("endpoint returned HTTP " + std::to_string(status) + ": " + body.substr(0, 512)),
      status_(status),
      body_(std::move(body)) {}

RetriesExhausted::RetriesExhausted(int attempts, const std::string& last_error)
    : GatewayError("RetriesExhausted after " + std::to_string(attempts) + " attempts: " + last_error),
      attempts_(attempts) {}

std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto n = (std::uint32_t(std::uint8_t(bytes[i])) << 16) | (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) |
                   std::uint32_t(std::uint8_t(bytes[i + 2]));
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  if (const auto rest = bytes.size() - i; rest > 0) {
    std::uint32_t n = std::uint32_t(std::uint8_t(bytes[i])) << 16;
    if (rest == 2) n |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += rest == 2 ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string default_prompt(PromptKind kind) {
  std::string p =
      "You are inspecting one frame of a generated video for structural distortions. "
      "Possible issue labels: ";
  bool first = true;
  for (auto l : all_labels()) {
    if (!is_distortion(l)) continue;
    if (!first) p += ", ";
    p += '"';
    p += to_string(l);
    p += '"';
    first = false;
  }
  p += ". Reason step by step inside <think></think>, then give the result inside <answer></answer> as JSON. ";
  if (kind == PromptKind::PreferenceScoring) {
    p += "Use {\"Attribution labels\": [labels, or \"null\" if the frame is clean], \"rating\": score from 1 to 5}.";
  } else {
    p += "List at most three of the most severe issues as {\"Attribution labels\": [labels, or \"null\" if the frame "
         "is clean]}.";
  }
  return p;
}

namespace {

bool is_remote_uri(std::string_view ref) { return ref.starts_with("http://") || ref.starts_with("https://"); }

}  // namespace

ScoreRequest make_score_request(std::string request_id, PromptKind kind, const std::string& frame_ref,
                                GenerationParams params, bool load_local_image, std::size_t max_image_bytes) {
  ScoreRequest req;
  req.request_id = std::move(request_id);
  req.prompt_kind = kind;
  req.prompt_text = default_prompt(kind);
  req.frame_ref = frame_ref;
  req.params = params;
  if (load_local_image && !is_remote_uri(frame_ref)) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(frame_ref, ec);
    if (ec) throw IoError("cannot read frame " + frame_ref);
    if (size > max_image_bytes) {
      throw PayloadTooLarge("frame " + frame_ref + " is " + std::to_string(size) + " bytes; limit is " +
                            std::to_string(max_image_bytes));
    }
    req.image_payload = base64_encode(read_file(frame_ref));
  }
  req.validate();
  return req;
}

// Adapter

json EndpointAdapter::encode(const ScoreRequest& req) const {
  json body = {
      {"request_id", req.request_id},
      {"prompt", req.prompt_text},
      {"max_tokens", req.params.max_tokens},
      {"temperature", req.params.temperature},
      {"n", req.params.n_samples},
  };
  if (req.image_payload) {
    body["image"] = *req.image_payload;
    body["image_encoding"] = "base64";
  } else {
    body["image"] = req.frame_ref;
    body["image_encoding"] = "uri";
  }
  return body;
}

ScoreResponse EndpointAdapter::decode(const json& body, const ScoreRequest& req) const {
  if (!body.is_object()) throw EndpointError(200, "response is not a JSON object");
  const auto outputs = body.find("outputs");
  if (outputs == body.end() || !outputs->is_array()) throw EndpointError(200, "response lacks an \"outputs\" list");
  ScoreResponse r;
  r.request_id = req.request_id;
  for (const auto& o : *outputs) {
    if (!o.is_string()) throw EndpointError(200, "non-string entry in \"outputs\"");
    r.raw_texts.push_back(o.get<std::string>());
  }
  if (static_cast<int>(r.raw_texts.size()) != req.params.n_samples) {
    throw EndpointError(200, "expected " + std::to_string(req.params.n_samples) + " outputs, got " +
                                 std::to_string(r.raw_texts.size()));
  }
  if (const auto m = body.find("model_id"); m != body.end() && m->is_string()) r.model_id = m->get<std::string>();
  return r;
}

EndpointConfig EndpointConfig::from_env() {
  EndpointConfig cfg;
  const char* url = std::getenv("SCORER_BASE_URL");
  if (!url || !*url) throw GatewayError("SCORER_BASE_URL is not set");
  cfg.base_url = url;
  if (const char* key = std::getenv("SCORER_API_KEY")) cfg.api_key = key;
  return cfg;
}

// HttpScorer

HttpScorer::HttpScorer(EndpointConfig cfg, std::shared_ptr<const EndpointAdapter> adapter, Sleeper sleeper)
    : cfg_(std::move(cfg)),
      adapter_(adapter ? std::move(adapter) : std::make_shared<const EndpointAdapter>()),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })) {
  if (cfg_.base_url.empty()) throw GatewayError("endpoint base URL is empty");
  if (cfg_.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
}

ScoreResponse HttpScorer::score_frame(const ScoreRequest& req) const {
  req.validate();
  if (req.image_payload && req.image_payload->size() / 4 * 3 > cfg_.max_image_bytes) {
    throw PayloadTooLarge("image payload exceeds " + std::to_string(cfg_.max_image_bytes) + " bytes");
  }
  const std::string payload = adapter_->encode(req).dump();
  const auto started = std::chrono::steady_clock::now();

  httplib::Client client(cfg_.base_url);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(cfg_.connect_timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(cfg_.read_timeout));
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  std::string last_error;
  auto backoff = cfg_.backoff_base;
  for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
    auto res = client.Post(adapter_->path(), headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
    } else if (res->status == 413) {
      throw PayloadTooLarge("endpoint rejected the payload (HTTP 413)");
    } else if (res->status < 200 || res->status >= 300) {
      throw EndpointError(res->status, res->body);
    } else {
      json body = json::parse(res->body, nullptr, false);
      if (body.is_discarded()) throw EndpointError(res->status, "response body is not JSON");
      ScoreResponse out = adapter_->decode(body, req);
      out.attempt_count = attempt;
      out.latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
      return out;
    }
    if (attempt == cfg_.max_attempts) break;
    if (cfg_.deadline.count() > 0 && std::chrono::steady_clock::now() + backoff - started > cfg_.deadline) {
      throw Timeout("request " + req.request_id + " exceeded its deadline after " + std::to_string(attempt) +
                    " attempts (" + last_error + ")");
    }
    sleeper_(backoff);
    backoff = std::chrono::milliseconds(
        static_cast<long long>(std::llround(static_cast<double>(backoff.count()) * cfg_.backoff_factor)));
  }
  throw RetriesExhausted(cfg_.max_attempts, last_error);
}

// MockScorer

MockScorer::MockScorer(std::vector<FrameAnnotation> fixture, std::uint64_t seed) : seed_(seed) {
  for (auto& a : fixture) {
    auto key = a.frame_ref;
    by_ref_.emplace(std::move(key), std::move(a));
  }
}

ScoreResponse MockScorer::score_frame(const ScoreRequest& req) const {
  req.validate();
  const auto it = by_ref_.find(req.frame_ref);
  if (it == by_ref_.end()) throw UnknownFrame("frame not in mock fixture: " + req.frame_ref);
  const FrameAnnotation& gt = it->second;
  const auto labels = LabelSet::from_mask(gt.labels.distortion_mask(), LabelRole::Prediction);
  const std::uint64_t base = seed_ ^ stable_hash(req.frame_ref);
  ScoreResponse r;
  r.request_id = req.request_id;
  r.model_id = "mock";
  r.attempt_count = 1;
  for (int k = 0; k < req.params.n_samples; ++k) {
    const std::uint64_t seed = k == 0 ? base : mix_seed(base, static_cast<std::uint64_t>(k));
    const std::string think = "Checked the frame against the annotated regions; " +
                              std::to_string(labels.distortion_count()) + " issue(s) present.";
    if (req.prompt_kind == PromptKind::Recognition) {
      r.raw_texts.push_back(render_response(think, labels, std::nullopt));
    } else {
      r.raw_texts.push_back(render_response(think, labels, sample_pseudo_score(labels.distortion_count(), seed)));
    }
  }
  return r;
}

// Pool

std::vector<ScoreOutcome> score_all(const Scorer& scorer, const std::vector<ScoreRequest>& requests,
                                    int parallelism) {
  std::vector<ScoreOutcome> out(requests.size());
  if (requests.empty()) return out;
  const auto workers = static_cast<std::size_t>(std::max(1, parallelism));
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        out[i].response = scorer.score_frame(requests[i]);
      } catch (...) {
        out[i].error = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t w = 1; w < std::min(workers, requests.size()); ++w) pool.emplace_back(work);
  work();
  return out;
}

}  // namespace fdreward
