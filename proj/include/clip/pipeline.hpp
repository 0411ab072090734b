#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "clip/config.hpp"
#include "clip/rewriter.hpp"
#include "clip/roles.hpp"

namespace clip {

// Stage counters. Batches flow input -> filter; each kept batch forwards its
// judged-correct trajectories, and every forwarded trajectory lands in
// exactly one terminal bucket: exported_pruned, exported_unpruned, or failed
// (filtered batches are the fourth, pre-forward bucket).
struct StageCounts {
  int input = 0;            // query batches read
  int kept_by_filter = 0;   // batches with 0 < PR <= 1/2
  int filtered_out = 0;     // batches dropped by the filter
  int forwarded = 0;        // correct trajectories entering the pruner
  int vote_accepted = 0;
  int vote_discarded = 0;
  int unreachable = 0;
  int failed = 0;
  int exported_pruned = 0;
  int exported_unpruned = 0;
};

struct RoleCallCounts {
  long long extractor = 0;
  long long rewriter = 0;
  long long scorer = 0;
  long long judge = 0;
};

struct PipelineReport {
  StageCounts counts;
  RoleCallCounts calls;
  double input_rounds_mean = 0.0;   // tool rounds per forwarded trajectory
  double kept_rounds_mean = 0.0;    // after pruning (unpruned keep all)
  double round_reduction = 0.0;     // 1 - kept/input over forwarded
  int resumed = 0;                  // trajectories restored from state files
  std::vector<std::string> notes;   // warnings and quarantine reasons
  double wall_ms = 0.0;             // stdout only, never serialized
};

// Serializations exclude wall_ms so repeated runs produce byte-identical
// artifacts.
std::string report_json(const PipelineReport& r);
std::string report_text(const PipelineReport& r);

struct PruneOutcome {
  int exit_code = 0;
  PipelineReport report;
};

// Mock roles in mock_mode, otherwise LLM roles over one shared HTTP
// transport with per-endpoint gateways.
RoleSet make_roles(const PipelineConfig& cfg);

// The full pipeline: judge + filter, per-trajectory graph construction,
// 2-of-3 vote, prune, seam rewrite, pool export, report. Artifacts land
// under cfg.out_dir; out_dir/state caches per-batch verdicts and
// per-trajectory results so a rerun makes no role calls for finished work.
// Exit codes: 0 ok, 1 some trajectory hard-failed, 3 unreadable or empty
// input, 4 every forwarded trajectory failed with a transport error among
// the causes. (2 = config error, assigned by the CLI before this runs.)
PruneOutcome run_prune(const PipelineConfig& cfg, const RoleSet& roles);

// Score run records: writes summary.csv, histogram.csv, cumulative.csv and
// report.txt under out_dir and prints the summary. Exit 3 on parse errors.
int run_score(const std::string& records_path, int max_rounds,
              const std::string& out_dir, std::ostream& out);

// Standalone graph construction: per input trajectory, Phase 1 once plus
// `runs` Phase-2 builds; exports each graph and, when runs == 3, the vote.
int run_graph(const std::string& traj_path, int runs, const PipelineConfig& cfg,
              const RoleSet& roles, std::ostream& out);

// Rebuild an SFT dataset from pruned.jsonl / unpruned.jsonl in out_dir.
int run_export(const std::string& out_dir, DatasetMode mode,
               const std::string& prompt_dir, std::ostream& out);

}  // namespace clip
