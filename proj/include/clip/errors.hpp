#pragma once

#include <stdexcept>
#include <string>

namespace clip {

// Base for all library errors. Subclasses mirror the failure modes that
// callers are expected to branch on; anything else surfaces as Error.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A JSON record is missing a field or has a field of the wrong type.
class SchemaError : public Error {
public:
  using Error::Error;
};

// A record parses but violates a structural invariant (answer placement,
// index gaps, alternation).
class StructureError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

// Transport-level failure talking to an endpoint, after retries.
class TransportError : public Error {
public:
  explicit TransportError(const std::string& msg, bool retryable = true)
      : Error(msg), retryable(retryable) {}
  bool retryable;
};

class AuthError : public Error {
public:
  using Error::Error;
};

// Endpoint replied, but the payload does not conform to what the role
// expects (after the single repair reprompt where one is allowed).
class MalformedResponse : public Error {
public:
  explicit MalformedResponse(const std::string& msg, int step = -1)
      : Error(msg), step(step) {}
  int step;  // 1-based trajectory step when the failure is localized, else -1
};

// The endpoint cannot return token logprobs.
class UnsupportedEndpoint : public Error {
public:
  using Error::Error;
};

// Extractor cited an info id that is not in the workspace.
class DanglingSupport : public Error {
public:
  explicit DanglingSupport(const std::string& msg, int step = -1)
      : Error(msg), step(step) {}
  int step;
};

// No directed path from the query node to the answer node.
class UnreachableSink : public Error {
public:
  using Error::Error;
};

// Brute-force search refused: too many action nodes.
class TooLarge : public Error {
public:
  using Error::Error;
};

class MissingAnswer : public Error {
public:
  using Error::Error;
};

class QueryOverlap : public Error {
public:
  using Error::Error;
};

class EmptyPool : public Error {
public:
  using Error::Error;
};

class EmptyInput : public Error {
public:
  using Error::Error;
};

class InvalidBudget : public Error {
public:
  using Error::Error;
};

}  // namespace clip
