#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "clip/errors.hpp"

namespace clip {

struct ChatMessage {
  enum class Role { System, User, Assistant };
  Role role = Role::User;
  std::string content;
};

std::string_view to_string(ChatMessage::Role role);

struct EndpointConfig {
  std::string base_url;      // e.g. http://host:8000/v1
  std::string model_name;
  std::string api_key_env;   // name of the env var holding the key; may be empty
  int max_retries = 3;
  double timeout_s = 60.0;
  int max_inflight = 4;
};

// Mean negative log-likelihood per token of a continuation given a prefix.
// exp() is never taken: candidate selection only needs the argmin.
struct ScoreResult {
  double avg_nll = 0.0;
  std::int64_t token_count = 0;
};

// Transport abstraction. Implementations must be callable from multiple
// threads; retry and the in-flight bound live in Gateway.
class ChatClient {
public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const EndpointConfig& cfg,
                               const std::vector<ChatMessage>& messages,
                               double temperature) = 0;
  virtual ScoreResult score_logprob(const EndpointConfig& cfg,
                                    const std::string& prefix,
                                    const std::string& continuation) = 0;
};

// HTTP chat-completions transport. complete() POSTs
// {base_url}/chat/completions; score_logprob() uses the endpoint's
// echo+logprobs completions facility and throws UnsupportedEndpoint when the
// endpoint cannot return token logprobs.
class HttpChatClient : public ChatClient {
public:
  std::string complete(const EndpointConfig& cfg,
                       const std::vector<ChatMessage>& messages,
                       double temperature) override;
  ScoreResult score_logprob(const EndpointConfig& cfg, const std::string& prefix,
                            const std::string& continuation) override;
};

// One scripted exchange. An empty match string matches any request; otherwise
// the request text must contain it as a substring.
struct MockEntry {
  enum class Kind { Reply, Echo, TransportFail, RateLimit, Score };
  Kind kind = Kind::Reply;
  std::string match;
  std::string reply;
  double avg_nll = 0.0;
  std::int64_t token_count = 1;

  static MockEntry replies(std::string text, std::string match = "");
  static MockEntry echo(std::string match = "");
  static MockEntry fails(std::string match = "");
  static MockEntry rate_limited(std::string match = "");
  static MockEntry scores(double avg_nll, std::int64_t tokens, std::string match = "");
};

// In strict mode every request must match the next unconsumed entry; in loose
// mode the first unconsumed matching entry is used.
struct MockScript {
  std::vector<MockEntry> entries;
  bool strict = true;
};

// Deterministic scripted transport with instrumentation for concurrency and
// call-count assertions.
class MockChatClient : public ChatClient {
public:
  explicit MockChatClient(MockScript script);

  std::string complete(const EndpointConfig& cfg,
                       const std::vector<ChatMessage>& messages,
                       double temperature) override;
  ScoreResult score_logprob(const EndpointConfig& cfg, const std::string& prefix,
                            const std::string& continuation) override;

  int calls() const { return calls_.load(); }
  int peak_inflight() const { return peak_inflight_.load(); }
  // Artificial latency per call, to make concurrency observable in tests.
  void set_latency(std::chrono::milliseconds d) { latency_ = d; }

private:
  const MockEntry& next_entry(const std::string& request_text);
  void enter();
  void leave();

  MockScript script_;
  std::size_t cursor_ = 0;
  std::vector<bool> consumed_;
  std::mutex mu_;
  std::atomic<int> calls_{0};
  std::atomic<int> inflight_{0};
  std::atomic<int> peak_inflight_{0};
  std::chrono::milliseconds latency_{0};
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

// Per-endpoint access point: bounds concurrent requests at max_inflight and
// retries transport/rate-limit failures with exponential backoff
// (base 1s, factor 2, jitter +/-20%).
class Gateway {
public:
  Gateway(EndpointConfig cfg, std::shared_ptr<ChatClient> transport,
          Sleeper sleeper = {});

  std::string complete(const std::vector<ChatMessage>& messages, double temperature);
  ScoreResult score_logprob(const std::string& prefix, const std::string& continuation);

  const EndpointConfig& config() const { return cfg_; }

private:
  template <typename Fn>
  auto with_retries(Fn&& fn) -> decltype(fn());
  void acquire();
  void release();
  std::chrono::milliseconds backoff_delay(int attempt);

  EndpointConfig cfg_;
  std::shared_ptr<ChatClient> transport_;
  Sleeper sleeper_;
  std::mutex slot_mu_;
  std::condition_variable slot_cv_;
  int inflight_ = 0;
  std::mutex rng_mu_;
  std::mt19937 rng_;
};

}  // namespace clip
