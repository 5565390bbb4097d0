#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "fdreward/taxonomy.hpp"

namespace fdreward {

enum class PromptKind { PreferenceScoring, Recognition };
std::string_view to_string(PromptKind k);

struct GenerationParams {
  int max_tokens = 1024;
  double temperature = 0.0;
  int n_samples = 1;
};

struct ScoreRequest {
  std::string request_id;
  PromptKind prompt_kind = PromptKind::PreferenceScoring;
  std::string prompt_text;
  std::string frame_ref;
  // Base64 image bytes. When absent, frame_ref is sent as a URI.
  std::optional<std::string> image_payload;
  GenerationParams params;

  void validate() const;
};

struct ScoreResponse {
  std::string request_id;
  std::vector<std::string> raw_texts;
  std::string model_id;
  double latency_ms = 0;
  int attempt_count = 0;
};

class GatewayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Timeout : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class EndpointError : public GatewayError {
 public:
  EndpointError(int status, std::string body);
  int status() const { return status_; }
  const std::string& body() const { return body_; }

 private:
  int status_;
  std::string body_;
};

class RetriesExhausted : public GatewayError {
 public:
  RetriesExhausted(int attempts, const std::string& last_error);
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

class PayloadTooLarge : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class UnknownFrame : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

inline constexpr std::size_t kDefaultMaxImageBytes = 8u << 20;

std::string base64_encode(std::string_view bytes);

// Text of the scoring prompt for each task; the recognition prompt omits the
// rating key from its answer schema.
std::string default_prompt(PromptKind kind);

// Builds a request for `frame_ref`. Remote URIs (http:// or https://) are
// passed through; local files are read and base64-encoded, and files larger
// than `max_image_bytes` raise PayloadTooLarge.
ScoreRequest make_score_request(std::string request_id, PromptKind kind, const std::string& frame_ref,
                                GenerationParams params, bool load_local_image = true,
                                std::size_t max_image_bytes = kDefaultMaxImageBytes);

// Translates between ScoreRequest/ScoreResponse and one endpoint's JSON.
class EndpointAdapter {
 public:
  virtual ~EndpointAdapter() = default;
  virtual std::string path() const { return "/score"; }
  virtual nlohmann::json encode(const ScoreRequest& req) const;
  // Fills raw_texts and model_id; throws EndpointError on a malformed body.
  virtual ScoreResponse decode(const nlohmann::json& body, const ScoreRequest& req) const;
};

struct EndpointConfig {
  std::string base_url;
  std::string api_key;  // sent as a bearer token when non-empty
  std::chrono::milliseconds connect_timeout{5000};
  std::chrono::milliseconds read_timeout{120000};
  int max_attempts = 4;
  std::chrono::milliseconds backoff_base{500};
  double backoff_factor = 2.0;
  // Total time budget per request including backoff; zero disables it.
  std::chrono::milliseconds deadline{0};
  std::size_t max_image_bytes = kDefaultMaxImageBytes;

  // SCORER_BASE_URL and SCORER_API_KEY; throws GatewayError when the URL is unset.
  static EndpointConfig from_env();
};

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual ScoreResponse score_frame(const ScoreRequest& req) const = 0;
};

// HTTP scorer. Retries transport failures and 5xx responses with exponential
// backoff; 4xx responses fail immediately. Safe to share across threads.
class HttpScorer : public Scorer {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpScorer(EndpointConfig cfg, std::shared_ptr<const EndpointAdapter> adapter = nullptr,
                      Sleeper sleeper = nullptr);

  ScoreResponse score_frame(const ScoreRequest& req) const override;
  const EndpointConfig& config() const { return cfg_; }

 private:
  EndpointConfig cfg_;
  std::shared_ptr<const EndpointAdapter> adapter_;
  Sleeper sleeper_;
};

// Answers from ground-truth annotations with a band-consistent pseudo-score.
class MockScorer : public Scorer {
 public:
  MockScorer(std::vector<FrameAnnotation> fixture, std::uint64_t seed);
  ScoreResponse score_frame(const ScoreRequest& req) const override;

 private:
  std::map<std::string, FrameAnnotation> by_ref_;
  std::uint64_t seed_;
};

struct ScoreOutcome {
  std::optional<ScoreResponse> response;
  std::exception_ptr error;  // set iff response is empty
};

// Scores every request with at most `parallelism` in flight. Outcomes are
// returned in request order; each request resolves exactly once.
std::vector<ScoreOutcome> score_all(const Scorer& scorer, const std::vector<ScoreRequest>& requests,
                                    int parallelism = 4);

}  // namespace fdreward
