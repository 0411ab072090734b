#pragma once

#include <vector>

#include "clip/roles.hpp"
#include "clip/state_graph.hpp"

namespace clip {

struct BuildOptions {
  int variant = 0;                // which independent construction run this is
  std::size_t workspace_cap = 0;  // info nodes shown per snippet, 0 = unlimited
};

// Phase 1: one ActionNode per round, in order. The tool kind always comes
// from the trajectory; the extractor contributes only the goal text. With
// parallel=true the per-turn calls fan out across threads.
std::vector<ActionNode> extract_action_nodes(const Trajectory& t,
                                             ExtractorRole& extractor,
                                             bool parallel = false);

// Phase 2: the iterative workspace loop over snippets (A_t, o_t, A_{t+1})
// for t = 1..T-1, starting from {I_0} with the edge I_0 -> A_1. Production
// edges that would close a cycle are skipped so the result stays a DAG.
StateGraph build_state_graph(const Trajectory& t,
                             const std::vector<ActionNode>& actions,
                             ExtractorRole& extractor,
                             const BuildOptions& opts = {});

// Convenience wrapper running both phases.
StateGraph build_state_graph(const Trajectory& t, ExtractorRole& extractor,
                             const BuildOptions& opts = {});

}  // namespace clip
