#include "clip/gateway.hpp"

#include <cstdlib>
#include <thread>

#include "json.hpp"

#include "httplib.h"

namespace clip {

using nlohmann::json;

std::string_view to_string(ChatMessage::Role role) {
  switch (role) {
    case ChatMessage::Role::System: return "system";
    case ChatMessage::Role::User: return "user";
    case ChatMessage::Role::Assistant: return "assistant";
  }
  return "user";
}

namespace {

struct UrlParts {
  std::string scheme_host_port;  // what httplib::Client wants
  std::string path_prefix;       // e.g. /v1
};

UrlParts split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("base_url missing scheme: " + base_url);
  }
  auto path_start = base_url.find('/', scheme_end + 3);
  UrlParts parts;
  if (path_start == std::string::npos) {
    parts.scheme_host_port = base_url;
  } else {
    parts.scheme_host_port = base_url.substr(0, path_start);
    parts.path_prefix = base_url.substr(path_start);
    while (!parts.path_prefix.empty() && parts.path_prefix.back() == '/') {
      parts.path_prefix.pop_back();
    }
  }
  return parts;
}

std::string api_key_for(const EndpointConfig& cfg) {
  if (cfg.api_key_env.empty()) return {};
  const char* v = std::getenv(cfg.api_key_env.c_str());
  if (v == nullptr || *v == '\0') {
    throw AuthError("environment variable " + cfg.api_key_env + " is not set");
  }
  return v;
}

httplib::Result post_json(const EndpointConfig& cfg, const std::string& path,
                          const json& body) {
  UrlParts url = split_base_url(cfg.base_url);
  httplib::Client client(url.scheme_host_port);
  const auto timeout = std::chrono::milliseconds(
      static_cast<long long>(cfg.timeout_s * 1000.0));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  const std::string key = api_key_for(cfg);
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
  return client.Post(url.path_prefix + path, headers, body.dump(), "application/json");
}

[[noreturn]] void raise_http_error(const httplib::Result& res, const std::string& what) {
  if (!res) {
    throw TransportError(what + ": " + httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    throw AuthError(what + ": HTTP " + std::to_string(status));
  }
  if (status == 429 || status >= 500) {
    throw TransportError(what + ": HTTP " + std::to_string(status));
  }
  throw MalformedResponse(what + ": HTTP " + std::to_string(status) + " " + res->body);
}

}  // namespace

std::string HttpChatClient::complete(const EndpointConfig& cfg,
                                     const std::vector<ChatMessage>& messages,
                                     double temperature) {
  json body;
  body["model"] = cfg.model_name;
  json msgs = json::array();
  for (const ChatMessage& m : messages) {
    msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  body["messages"] = std::move(msgs);
  body["temperature"] = temperature;

  auto res = post_json(cfg, "/chat/completions", body);
  if (!res || res->status != 200) raise_http_error(res, "chat completion failed");

  json doc;
  try {
    doc = json::parse(res->body);
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("chat completion is not JSON: ") + e.what());
  }
  try {
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("chat completion lacks choices[0].message.content: ") +
                            e.what());
  }
}

ScoreResult HttpChatClient::score_logprob(const EndpointConfig& cfg,
                                          const std::string& prefix,
                                          const std::string& continuation) {
  if (continuation.empty()) throw Error("score_logprob: empty continuation");
  json body;
  body["model"] = cfg.model_name;
  body["prompt"] = prefix + continuation;
  body["max_tokens"] = 0;
  body["echo"] = true;
  body["logprobs"] = 0;
  body["temperature"] = 0.0;

  auto res = post_json(cfg, "/completions", body);
  if (res && res->status == 400) {
    // Endpoints without the echo/logprobs facility reject the request.
    throw UnsupportedEndpoint("endpoint rejected echo+logprobs scoring: " + res->body);
  }
  if (!res || res->status != 200) raise_http_error(res, "logprob scoring failed");

  json doc;
  try {
    doc = json::parse(res->body);
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("scoring response is not JSON: ") + e.what());
  }
  const json* lp = doc.contains("choices") && !doc["choices"].empty() &&
                           doc["choices"][0].contains("logprobs")
                       ? &doc["choices"][0]["logprobs"]
                       : nullptr;
  if (lp == nullptr || lp->is_null() || !lp->contains("token_logprobs") ||
      !lp->contains("text_offset")) {
    throw UnsupportedEndpoint("endpoint did not return token logprobs");
  }

  const json& logprobs = (*lp)["token_logprobs"];
  const json& offsets = (*lp)["text_offset"];
  if (!logprobs.is_array() || !offsets.is_array() || logprobs.size() != offsets.size()) {
    throw MalformedResponse("token_logprobs/text_offset arrays are inconsistent");
  }
  double total = 0.0;
  std::int64_t count = 0;
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    const auto offset = offsets[i].get<std::size_t>();
    if (offset < prefix.size()) continue;  // prefix token, not scored
    if (logprobs[i].is_null()) continue;   // leading token without a logprob
    total += logprobs[i].get<double>();
    ++count;
  }
  if (count == 0) {
    throw UnsupportedEndpoint("no continuation tokens carried logprobs");
  }
  return ScoreResult{-total / static_cast<double>(count), count};
}

MockEntry MockEntry::replies(std::string text, std::string match) {
  MockEntry e;
  e.kind = Kind::Reply;
  e.reply = std::move(text);
  e.match = std::move(match);
  return e;
}
MockEntry MockEntry::echo(std::string match) {
  MockEntry e;
  e.kind = Kind::Echo;
  e.match = std::move(match);
  return e;
}
MockEntry MockEntry::fails(std::string match) {
  MockEntry e;
  e.kind = Kind::TransportFail;
  e.match = std::move(match);
  return e;
}
MockEntry MockEntry::rate_limited(std::string match) {
  MockEntry e;
  e.kind = Kind::RateLimit;
  e.match = std::move(match);
  return e;
}
MockEntry MockEntry::scores(double avg_nll, std::int64_t tokens, std::string match) {
  MockEntry e;
  e.kind = Kind::Score;
  e.avg_nll = avg_nll;
  e.token_count = tokens;
  e.match = std::move(match);
  return e;
}

MockChatClient::MockChatClient(MockScript script)
    : script_(std::move(script)), consumed_(script_.entries.size(), false) {}

void MockChatClient::enter() {
  calls_.fetch_add(1);
  const int now = inflight_.fetch_add(1) + 1;
  int peak = peak_inflight_.load();
  while (now > peak && !peak_inflight_.compare_exchange_weak(peak, now)) {
  }
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
}

void MockChatClient::leave() { inflight_.fetch_sub(1); }

const MockEntry& MockChatClient::next_entry(const std::string& request_text) {
  std::lock_guard<std::mutex> lock(mu_);
  if (script_.strict) {
    if (cursor_ >= script_.entries.size()) {
      throw std::logic_error("mock script exhausted (strict)");
    }
    const MockEntry& e = script_.entries[cursor_];
    if (!e.match.empty() && request_text.find(e.match) == std::string::npos) {
      throw std::logic_error("mock script mismatch at entry " + std::to_string(cursor_) +
                             ": expected substring \"" + e.match + "\"");
    }
    ++cursor_;
    return e;
  }
  for (std::size_t i = 0; i < script_.entries.size(); ++i) {
    if (consumed_[i]) continue;
    const MockEntry& e = script_.entries[i];
    if (e.match.empty() || request_text.find(e.match) != std::string::npos) {
      consumed_[i] = true;
      return e;
    }
  }
  throw std::logic_error("mock script has no entry matching request");
}

std::string MockChatClient::complete(const EndpointConfig&,
                                     const std::vector<ChatMessage>& messages,
                                     double) {
  enter();
  struct Guard {
    MockChatClient* c;
    ~Guard() { c->leave(); }
  } guard{this};

  std::string last_user;
  std::string all;
  for (const ChatMessage& m : messages) {
    all += m.content;
    all += '\n';
    if (m.role == ChatMessage::Role::User) last_user = m.content;
  }
  const MockEntry& e = next_entry(all);
  switch (e.kind) {
    case MockEntry::Kind::Reply: return e.reply;
    case MockEntry::Kind::Echo: return last_user;
    case MockEntry::Kind::TransportFail:
      throw TransportError("mock transport failure");
    case MockEntry::Kind::RateLimit:
      throw TransportError("mock rate limit (HTTP 429)");
    case MockEntry::Kind::Score:
      throw std::logic_error("mock script: score entry hit by complete()");
  }
  throw std::logic_error("unreachable");
}

ScoreResult MockChatClient::score_logprob(const EndpointConfig&,
                                          const std::string& prefix,
                                          const std::string& continuation) {
  enter();
  struct Guard {
    MockChatClient* c;
    ~Guard() { c->leave(); }
  } guard{this};

  const MockEntry& e = next_entry(prefix + continuation);
  switch (e.kind) {
    case MockEntry::Kind::Score: return ScoreResult{e.avg_nll, e.token_count};
    case MockEntry::Kind::TransportFail:
      throw TransportError("mock transport failure");
    case MockEntry::Kind::RateLimit:
      throw TransportError("mock rate limit (HTTP 429)");
    default:
      throw std::logic_error("mock script: non-score entry hit by score_logprob()");
  }
}

Gateway::Gateway(EndpointConfig cfg, std::shared_ptr<ChatClient> transport,
                 Sleeper sleeper)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      rng_(std::random_device{}()) {
  if (cfg_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (cfg_.max_inflight < 1) throw ConfigError("max_inflight must be >= 1");
  if (!sleeper_) {
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

void Gateway::acquire() {
  std::unique_lock<std::mutex> lock(slot_mu_);
  slot_cv_.wait(lock, [this] { return inflight_ < cfg_.max_inflight; });
  ++inflight_;
}

void Gateway::release() {
  {
    std::lock_guard<std::mutex> lock(slot_mu_);
    --inflight_;
  }
  slot_cv_.notify_one();
}

std::chrono::milliseconds Gateway::backoff_delay(int attempt) {
  // base 1s, doubling per retry, jitter +/-20%
  const double base_ms = 1000.0 * static_cast<double>(1u << attempt);
  double jitter;
  {
    std::lock_guard<std::mutex> lock(rng_mu_);
    jitter = 0.8 + 0.4 * (static_cast<double>(rng_()) /
                          static_cast<double>(std::mt19937::max()));
  }
  return std::chrono::milliseconds(static_cast<long long>(base_ms * jitter));
}

template <typename Fn>
auto Gateway::with_retries(Fn&& fn) -> decltype(fn()) {
  acquire();
  struct Guard {
    Gateway* g;
    ~Guard() { g->release(); }
  } guard{this};

  int attempt = 0;
  for (;;) {
    try {
      return fn();
    } catch (const TransportError& e) {
      if (!e.retryable || attempt >= cfg_.max_retries) throw;
      sleeper_(backoff_delay(attempt));
      ++attempt;
    }
  }
}

std::string Gateway::complete(const std::vector<ChatMessage>& messages,
                              double temperature) {
  if (messages.empty()) throw Error("complete: empty message list");
  for (const ChatMessage& m : messages) {
    if (m.role != ChatMessage::Role::System && m.content.empty()) {
      throw Error("complete: empty user/assistant message content");
    }
  }
  return with_retries(
      [&] { return transport_->complete(cfg_, messages, temperature); });
}

ScoreResult Gateway::score_logprob(const std::string& prefix,
                                   const std::string& continuation) {
  if (continuation.empty()) throw Error("score_logprob: empty continuation");
  return with_retries(
      [&] { return transport_->score_logprob(cfg_, prefix, continuation); });
}

}  // namespace clip
