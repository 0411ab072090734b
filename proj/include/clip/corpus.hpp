#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clip/trajectory.hpp"

namespace clip {

// One synthetic query with its K=4 sampled trajectories and the scripted
// ground truth the mock extractor will reproduce.
struct CorpusQuery {
  QARecord record;
  std::vector<Trajectory> trajectories;
  std::vector<bool> correct;  // aligned with trajectories

  bool forwarded = false;            // survives the rejection filter
  std::string outcome;               // accepted | discarded | unreachable | filtered
  std::string expected_pool;         // pruned | unpruned | none
  std::optional<std::set<int>> expected_kept;  // for accepted outcomes
  int correct_sample = -1;           // index of the forwarded trajectory
};

struct Corpus {
  std::vector<CorpusQuery> queries;
};

// Fixed-seed generator: 20 forwarded trajectories (16 regular prunable ones,
// a pure chain with nothing to prune, an unreachable sink, a 2-of-3 vote
// divergence, an all-distinct vote split) plus two filtered queries at
// pass rates 0 and 0.75.
Corpus make_synthetic_corpus();

// Batch JSONL consumed by the pruning pipeline.
std::string corpus_jsonl(const Corpus& corpus);

// Scripted expectations, for tests.
std::string corpus_truth_json(const Corpus& corpus);

}  // namespace clip
