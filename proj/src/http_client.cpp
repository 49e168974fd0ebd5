#include "policysim/http_client.hpp"

#include <cmath>
#include <thread>

#include <httplib.h>

#include "policysim/error.hpp"

namespace policysim {

std::chrono::milliseconds RetryPolicy::delay(int attempt) const {
  const double scale = std::pow(multiplier, attempt - 1);
  return std::chrono::milliseconds(static_cast<long long>(static_cast<double>(base_delay.count()) * scale));
}

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::kConfig, "endpoint url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body) {
  const SplitUrl target = split_url(endpoint.url);
  const std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= endpoint.retry.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(endpoint.retry.delay(attempt));
    httplib::Client client(target.origin);
    client.set_connection_timeout(endpoint.timeout);
    client.set_read_timeout(endpoint.timeout);
    client.set_write_timeout(endpoint.timeout);
    if (!endpoint.api_key.empty()) client.set_bearer_token_auth(endpoint.api_key);
    auto res = client.Post(target.path, payload, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      auto parsed = nlohmann::json::parse(res->body, nullptr, false);
      if (parsed.is_discarded()) throw Error(ErrorCode::kParse, "endpoint returned non-JSON body: " + endpoint.url);
      return parsed;
    }
    last_error = "HTTP " + std::to_string(res->status);
    if (!retryable_status(res->status)) {
      throw Error(ErrorCode::kBackend, endpoint.url + " rejected request: " + last_error);
    }
  }
  throw BackendUnavailable(endpoint.url + " unavailable after " +
                           std::to_string(endpoint.retry.max_retries + 1) + " attempts (" + last_error + ")");
}

std::string ChatClient::complete(const std::string& system, const std::string& user) const {
  nlohmann::json body{{"model", options_.model},
                      {"temperature", options_.temperature},
                      {"max_tokens", options_.max_tokens},
                      {"messages",
                       {{{"role", "system"}, {"content", system}}, {{"role", "user"}, {"content", user}}}}};
  const auto response = post_json(endpoint_, body);
  try {
    return response.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kParse, "chat response lacks choices[0].message.content");
  }
}

}  // namespace policysim
