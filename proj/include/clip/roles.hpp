#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "clip/gateway.hpp"
#include "clip/prompts.hpp"
#include "clip/state_graph.hpp"

namespace clip {

// Everything the extractor sees for one snippet iteration (A_t, o_t, A_{t+1}).
struct SnippetContext {
  std::string query;
  std::vector<std::pair<int, std::string>> workspace;  // presented (id, statement)
  ActionNode prev;                                     // A_t
  std::string observation;                             // o_t
  ActionNode next;                                     // A_{t+1}
  int step = 0;                                        // t
  int next_free_id = 0;  // id assigned to the first newly created unit
  bool last_snippet = false;
  int variant = 0;  // which of the independent construction runs this is
};

struct ActionSummary {
  std::string kind_name;
  std::string goal;
};

struct RewriteContext {
  std::string query;
  std::string history;  // kept dialogue so far, rendered
  std::string skipped;  // pruned rounds inside the gap, rendered
  std::string original_thought;
  std::string action_kind;
  std::string action_payload;
  int candidate_index = 0;  // 0..2
};

class ExtractorRole {
public:
  virtual ~ExtractorRole() = default;
  virtual ActionSummary summarize_turn(const Trajectory& t, int step) = 0;
  virtual ExtractorTurnOutput analyze_snippet(const SnippetContext& ctx) = 0;
};

class RewriterRole {
public:
  virtual ~RewriterRole() = default;
  virtual std::string rewrite(const RewriteContext& ctx) = 0;
};

class ScorerRole {
public:
  virtual ~ScorerRole() = default;
  virtual ScoreResult score(const std::string& prefix,
                            const std::string& continuation) = 0;
};

class JudgeRole {
public:
  virtual ~JudgeRole() = default;
  virtual bool judge(const std::string& question, const std::string& prediction,
                     const std::string& gold) = 0;
};

struct RoleSet {
  std::shared_ptr<ExtractorRole> extractor;
  std::shared_ptr<RewriterRole> rewriter;
  std::shared_ptr<ScorerRole> scorer;
  std::shared_ptr<JudgeRole> judge;
};

// Returns the contents of the first ``` fence (an optional language tag on
// the opening line is skipped), or nullopt when the text has no closed fence.
std::optional<std::string> find_fenced_block(std::string_view text);

// Lowercases ASCII, collapses whitespace runs to single spaces, trims.
std::string normalize_statement(std::string_view text);

struct LlmRoleOptions {
  double extractor_temperature = 0.2;
  double judge_temperature = 0.2;
  double rewriter_temperature = 0.8;
};

// LLM-backed roles. Responses must be a single fenced JSON block; one repair
// reprompt is attempted before MalformedResponse (or DanglingSupport when the
// extractor cites unknown info ids).
class LlmExtractor : public ExtractorRole {
public:
  LlmExtractor(std::shared_ptr<Gateway> gw, const PromptLibrary& prompts,
               LlmRoleOptions opts = {});

  ActionSummary summarize_turn(const Trajectory& t, int step) override;
  ExtractorTurnOutput analyze_snippet(const SnippetContext& ctx) override;

private:
  std::shared_ptr<Gateway> gw_;
  PromptLibrary prompts_;
  LlmRoleOptions opts_;
};

class LlmRewriter : public RewriterRole {
public:
  LlmRewriter(std::shared_ptr<Gateway> gw, const PromptLibrary& prompts,
              LlmRoleOptions opts = {});

  std::string rewrite(const RewriteContext& ctx) override;

private:
  std::shared_ptr<Gateway> gw_;
  PromptLibrary prompts_;
  LlmRoleOptions opts_;
};

class LlmScorer : public ScorerRole {
public:
  explicit LlmScorer(std::shared_ptr<Gateway> gw);

  ScoreResult score(const std::string& prefix,
                    const std::string& continuation) override;

private:
  std::shared_ptr<Gateway> gw_;
};

class LlmJudge : public JudgeRole {
public:
  LlmJudge(std::shared_ptr<Gateway> gw, const PromptLibrary& prompts,
           LlmRoleOptions opts = {});

  bool judge(const std::string& question, const std::string& prediction,
             const std::string& gold) override;

private:
  std::shared_ptr<Gateway> gw_;
  PromptLibrary prompts_;
  LlmRoleOptions opts_;
};

// Deterministic offline roles driven by text conventions in the inputs:
// observations carry atomic units as lines "fact <tag>: <text>", and a
// thought/payload declares its dependencies as "uses: <tag>, <tag>" ("q"
// names the query node). Matching is normalized-exact-string.
//
// Two query markers steer the vote runs, applied to the final snippet only:
//   [vote:div2]     variant 2 keeps only the first declared support
//   [vote:splitall] variant 1 keeps the first, variant 2 keeps the last
class MockExtractor : public ExtractorRole {
public:
  ActionSummary summarize_turn(const Trajectory& t, int step) override;
  ExtractorTurnOutput analyze_snippet(const SnippetContext& ctx) override;

  int summarize_calls() const { return summarize_calls_.load(); }
  int snippet_calls() const { return snippet_calls_.load(); }

private:
  std::atomic<int> summarize_calls_{0};
  std::atomic<int> snippet_calls_{0};
};

// Emits three distinct deterministic candidates composed from the fixed
// action only, so no pruned-observation text can leak in.
class MockRewriter : public RewriterRole {
public:
  std::string rewrite(const RewriteContext& ctx) override;

  int calls() const { return calls_.load(); }

private:
  std::atomic<int> calls_{0};
};

// Stateless hash of (prefix, continuation) mapped into [0, 4): deterministic
// and order-independent across candidates.
class MockScorer : public ScorerRole {
public:
  ScoreResult score(const std::string& prefix,
                    const std::string& continuation) override;

  int calls() const { return calls_.load(); }

private:
  std::atomic<int> calls_{0};
};

// Normalized exact match of prediction against gold.
class MockJudge : public JudgeRole {
public:
  bool judge(const std::string& question, const std::string& prediction,
             const std::string& gold) override;

  int calls() const { return calls_.load(); }

private:
  std::atomic<int> calls_{0};
};

RoleSet make_mock_roles();

}  // namespace clip
