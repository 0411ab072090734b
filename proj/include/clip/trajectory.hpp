#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clip/errors.hpp"

namespace clip {

enum class ToolKind { Search, Visit, Python, Answer, Other };

// One agent action: a tool invocation or the terminal answer. `name` holds
// the raw lowercase tool name and is what serializes; for the four builtin
// kinds it equals the canonical string ("search", "visit", ...).
struct ToolAction {
  ToolKind kind = ToolKind::Other;
  std::string name;
  std::string payload;

  static ToolAction make(std::string_view kind_name, std::string payload);
  bool operator==(const ToolAction&) const = default;
};

std::string_view to_string(ToolKind kind);
ToolKind kind_from_string(std::string_view name);

// One observe-think-act round. `observation` is absent exactly on the
// terminal answer round.
struct Round {
  int index = 0;  // 1-based
  std::string thought;
  ToolAction action;
  std::optional<std::string> observation;

  bool operator==(const Round&) const = default;
};

struct TrajectoryMeta {
  std::string dataset;
  std::string run_id;
  std::int64_t seed = 0;

  bool operator==(const TrajectoryMeta&) const = default;
};

// A full interaction record for one query: ordered rounds ending in an
// answer action. Immutable by convention after construction/validation.
struct Trajectory {
  std::string query;
  TrajectoryMeta meta;
  std::vector<Round> rounds;

  int total_steps() const { return static_cast<int>(rounds.size()); }
  const Round& round(int step) const { return rounds.at(static_cast<std::size_t>(step - 1)); }
  const Round& answer_round() const { return rounds.back(); }

  bool operator==(const Trajectory&) const = default;
};

struct QARecord {
  std::string question;
  std::string gold_answer;
  std::string dataset;
};

// K sampled trajectories for one query plus their judged correctness.
struct SampledBatch {
  QARecord record;
  std::vector<std::pair<Trajectory, bool>> trajectories;

  std::size_t k() const { return trajectories.size(); }
  std::size_t correct_count() const;
};

// One pipeline input line: a QA record and its K sampled trajectories,
// before judging.
struct QueryBatch {
  QARecord record;
  std::vector<Trajectory> trajectories;
};

QueryBatch parse_query_batch(const std::string& raw);
std::string serialize_query_batch(const QueryBatch& batch);

// Throws StructureError if any trajectory invariant fails.
void validate_trajectory(const Trajectory& t);

// Parse one JSONL record. Throws SchemaError / StructureError.
Trajectory parse_trajectory(const std::string& raw);

// Canonical single-line JSON with fixed field order; serialize(parse(x)) == x
// for records already in canonical form.
std::string serialize_trajectory(const Trajectory& t);

// Exact rational count/K reported as a fraction in [0,1].
double pass_rate(const SampledBatch& batch);

// Keep iff 0 < PR <= 1/2, evaluated in integer arithmetic.
bool rejection_filter(const SampledBatch& batch);

// Number of tool-invocation rounds; the terminal answer is not a tool call.
int count_rounds(const Trajectory& t);

class TokenCounter {
public:
  virtual ~TokenCounter() = default;
  virtual std::size_t count(std::string_view text) const = 0;
};

// Whitespace-plus-punctuation segmenter: a token is a maximal alphanumeric
// run (bytes >= 0x80 count as word bytes) or a single other non-space byte.
// Reports using it are labeled "approximate".
class ApproxTokenCounter : public TokenCounter {
public:
  std::size_t count(std::string_view text) const override;
};

// Token sequence under the same segmentation; used by the rewrite screen.
std::vector<std::string> segment_tokens(std::string_view text);

// Sum of thought + action payload + observation tokens over all rounds.
std::size_t count_tokens(const Trajectory& t, const TokenCounter& counter);
std::size_t count_tokens(const Trajectory& t);  // ApproxTokenCounter

std::uint64_t fnv1a64(std::string_view data);

}  // namespace clip
