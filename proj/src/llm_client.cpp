#include "partstyle/llm_client.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "partstyle/error.hpp"

namespace partstyle {

namespace {

std::string excerpt(const std::string& body) {
  return body.size() <= 200 ? body : body.substr(0, 200) + "...";
}

struct Endpoint {
  std::string origin, path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("llm endpoint: base URL needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  Endpoint e{url.substr(0, slash), slash == std::string::npos ? "" : url.substr(slash)};
  while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
  e.path += "/chat/completions";
  return e;
}

class Slot {
 public:
  explicit Slot(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
  ~Slot() { s_.release(); }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

 private:
  std::counting_semaphore<>& s_;
};

}  // namespace

void validate(const LlmEndpointConfig& cfg) {
  if (cfg.max_retries < 0) throw ConfigError("llm endpoint: max_retries must be >= 0");
  if (cfg.timeout_s <= 0) throw ConfigError("llm endpoint: timeout must be positive");
  if (cfg.max_in_flight == 0) throw ConfigError("llm endpoint: max_in_flight must be positive");
  if (cfg.backoff_initial_s < 0 || cfg.backoff_factor < 1) throw ConfigError("llm endpoint: bad backoff settings");
  if (cfg.model.empty()) throw ConfigError("llm endpoint: model name is empty");
  split_url(cfg.base_url);
}

LlmClient::LlmClient(LlmEndpointConfig cfg, Sleeper sleep) : cfg_(std::move(cfg)), sleep_(std::move(sleep)) {
  validate(cfg_);
  if (!sleep_) sleep_ = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
  slots_ = std::make_shared<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(cfg_.max_in_flight));
}

std::string LlmClient::complete(const std::vector<ChatMessage>& messages, CompletionTrace* trace) const {
  const Endpoint ep = split_url(cfg_.base_url);
  nlohmann::json body{{"model", cfg_.model}, {"temperature", cfg_.temperature}, {"messages", nlohmann::json::array()}};
  for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  CompletionTrace local;
  CompletionTrace& tr = trace ? *trace : local;
  tr = {};
  double delay = cfg_.backoff_initial_s;
  std::string last;
  for (int attempt = 0;; ++attempt) {
    int status = 0;
    std::string reply;
    {
      Slot slot(*slots_);
      httplib::Client cli(ep.origin);
      const auto secs = std::chrono::duration<double>(cfg_.timeout_s);
      cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
      cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
      cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
      auto res = cli.Post(ep.path, headers, payload, "application/json");
      if (res) {
        status = res->status;
        reply = res->body;
      } else {
        last = "transport failure: " + httplib::to_string(res.error());
      }
    }
    tr.attempts = attempt + 1;
    tr.statuses.push_back(status);

    if (status == 200) {
      try {
        const auto j = nlohmann::json::parse(reply);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw BackendError("llm endpoint: malformed reply (" + std::string(e.what()) + "): " + excerpt(reply));
      }
    }
    const bool retryable = status == 0 || status == 429 || status >= 500;
    if (status != 0) last = "HTTP " + std::to_string(status) + ": " + excerpt(reply);
    if (!retryable) throw BackendError("llm endpoint: " + last);
    if (attempt >= cfg_.max_retries)
      throw BackendError("llm endpoint: giving up after " + std::to_string(attempt + 1) + " attempts, last " + last);
    tr.delays_s.push_back(delay);
    sleep_(delay);
    delay = std::min(cfg_.backoff_max_s, delay * cfg_.backoff_factor);
  }
}

}  // namespace partstyle
