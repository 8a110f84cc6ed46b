#pragma once

#include <functional>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

namespace partstyle {

struct LlmEndpointConfig {
  std::string base_url = "https://api.openai.com/v1";  // POSTs to <base_url>/chat/completions
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_s = 60.0;
  int max_retries = 3;
  double temperature = 0.0;
  double backoff_initial_s = 1.0;
  double backoff_factor = 2.0;
  double backoff_max_s = 30.0;
  std::size_t max_in_flight = 4;
};

void validate(const LlmEndpointConfig& cfg);  // ConfigError

struct ChatMessage {
  std::string role, content;
};

struct CompletionTrace {
  int attempts = 0;
  std::vector<int> statuses;     // 0 for transport failures
  std::vector<double> delays_s;  // waits before each retry
};

// Chat-completion client. Retries 429, 5xx and transport failures with
// exponential backoff; other failures surface at once as BackendError.
class LlmClient {
 public:
  using Sleeper = std::function<void(double seconds)>;

  explicit LlmClient(LlmEndpointConfig cfg, Sleeper sleep = {});

  const LlmEndpointConfig& config() const noexcept { return cfg_; }
  std::string complete(const std::vector<ChatMessage>& messages, CompletionTrace* trace = nullptr) const;

 private:
  LlmEndpointConfig cfg_;
  Sleeper sleep_;
  std::shared_ptr<std::counting_semaphore<>> slots_;
};

}  // namespace partstyle
