#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clip/mndag.hpp"
#include "clip/roles.hpp"
#include "clip/trajectory.hpp"

namespace clip {

// A trajectory after pruning: kept rounds verbatim (with their original step
// numbers) plus the seam positions whose thoughts need rewriting because
// their predecessor round was removed.
struct PrunedTrajectory {
  std::string query;
  TrajectoryMeta meta;
  std::vector<std::pair<int, Round>> kept;  // (original_step, round)
  std::set<std::size_t> seams;              // positions into kept; 0 = leading
  Trajectory source;                        // original, for skipped context

  std::set<std::size_t> rewritten;  // filled by rewrite_seams
  std::vector<std::string> warnings;
};

struct Candidate {
  std::string text;
  bool screened_out = false;  // failed the pruned-observation lexical screen
  std::optional<ScoreResult> score;
};

struct CandidateSet {
  std::array<Candidate, 3> candidates;
  int winner = -1;  // index into candidates, -1 when the seam fell back
};

// Per-seam record kept for diagnostics artifacts.
struct SeamRecord {
  std::size_t position = 0;
  std::string original_thought;
  CandidateSet set;
};

struct RewriteOptions {
  int min_span_tokens = 8;        // lexical screen: shortest disqualifying span
  bool screen_hard_fail = false;  // all candidates screened out -> throw
  bool score_hard_fail = false;   // scorer lacks logprobs -> throw
};

// Maps an accepted action set back onto the trajectory. Kept rounds are
// byte-identical copies; a seam is any kept position whose predecessor was
// not original-adjacent, including position 0 when the first kept step > 1.
PrunedTrajectory assemble_pruned(const Trajectory& t, const NecessarySet& final);

// Rewrites exactly the seam thoughts, in order, each seam conditioned on the
// kept dialogue so far (earlier rewrites included). Three candidates are
// drawn, screened against the pruned observations, scored on the chat-format
// prefix, and the lowest mean NLL wins (earliest candidate on ties).
PrunedTrajectory rewrite_seams(const PrunedTrajectory& p, RewriterRole& rewriter,
                               ScorerRole& scorer,
                               const std::string& system_prompt,
                               const RewriteOptions& opts = {},
                               std::vector<SeamRecord>* records = nullptr);

// True when `candidate` contains a verbatim run of at least min_tokens
// consecutive tokens that also occurs in `source`.
bool contains_span(const std::string& candidate, const std::string& source,
                   int min_tokens);

// Contiguous reindexed trajectory (rounds renumbered 1..L).
Trajectory to_trajectory(const PrunedTrajectory& p);

// ---- SFT chat export ----

enum class SftRole { System, User, Assistant, Tool };

std::string_view to_string(SftRole role);
SftRole sft_role_from_string(std::string_view name);

struct SftMessage {
  SftRole role = SftRole::User;
  std::string content;

  bool operator==(const SftMessage&) const = default;
};

struct SFTExample {
  std::string provenance;  // "pruned" | "unpruned"
  std::string query_id;
  std::vector<SftMessage> messages;
};

// system, user=query, then per round an assistant turn
//   <think>{thought}</think>\n<tool_call name="{name}">{payload}</tool_call>
// (terminal rounds use <answer>{payload}</answer>) followed by the raw
// observation as a tool message for non-terminal rounds.
std::vector<SftMessage> chat_messages(const std::string& system_prompt,
                                      const std::string& query,
                                      const std::vector<Round>& rounds);

// <|im_start|>{role}\n{content}<|im_end|>\n per message.
std::string render_chatml(const std::vector<SftMessage>& messages);

std::string query_id_for(const std::string& query);

SFTExample make_sft_example(const Trajectory& t, std::string provenance,
                            const std::string& system_prompt);

std::string serialize_sft_example(const SFTExample& example);
SFTExample parse_sft_example(const std::string& line);

// Alternation, assistant turn shape, and the terminal <answer> turn.
void validate_sft_example(const SFTExample& example);

enum class DatasetMode { Eff, Hybrid };

// Eff emits the pruned pool; Hybrid emits pruned followed by unpruned and
// requires the query sets to be disjoint.
std::string export_sft(const std::vector<SFTExample>& pruned,
                       const std::vector<SFTExample>& unpruned, DatasetMode mode);

}  // namespace clip
