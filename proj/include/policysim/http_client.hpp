#pragma once

#include <chrono>
#include <string>

#include <json.hpp>

namespace policysim {

struct RetryPolicy {
  int max_retries = 2;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;

  /// Delay before retry number `attempt` (1-based).
  [[nodiscard]] std::chrono::milliseconds delay(int attempt) const;
};

struct HttpEndpoint {
  std::string url;  // e.g. http://127.0.0.1:8080/v1/chat/completions
  std::chrono::seconds timeout{30};
  RetryPolicy retry;
  std::string api_key;  // sent as a bearer token when non-empty
};

/// POSTs a JSON body and returns the parsed JSON response. Connection
/// failures, 429 and 5xx are retried with exponential backoff; other 4xx
/// fail immediately. Throws BackendUnavailable once the budget is spent.
/// Safe to call concurrently: each call opens its own connection.
nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body);

struct ChatOptions {
  std::string model = "default";
  double temperature = 0.9;
  int max_tokens = 512;
};

/// Chat-completion client (system + user message, first choice content).
class ChatClient {
 public:
  ChatClient(HttpEndpoint endpoint, ChatOptions options)
      : endpoint_(std::move(endpoint)), options_(std::move(options)) {}

  [[nodiscard]] std::string complete(const std::string& system, const std::string& user) const;

  [[nodiscard]] const HttpEndpoint& endpoint() const noexcept { return endpoint_; }

 private:
  HttpEndpoint endpoint_;
  ChatOptions options_;
};

}  // namespace policysim
