#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>

#include "clip/state_graph.hpp"

namespace clip {

// Forward pass results. Node costs (1 per action, 0 per info) are realized
// as edge weights w(u->v) = c(v), so d(v) is the summed action count of the
// cheapest path from I_0, excluding I_0 itself.
struct DijkstraState {
  std::map<NodeRef, int> dist;
  std::map<NodeRef, NodeRef> pred;  // absent for I_0 and unreachable nodes

  bool reached(const NodeRef& v) const { return dist.count(v) > 0; }
};

// Deterministic Dijkstra from I_0: ties pop by (distance, type, id) with
// actions before infos, and the predecessor keeps the first settler that
// achieved the final distance.
DijkstraState shortest_costs(const StateGraph& g);

struct NecessarySet {
  std::set<int> action_steps;   // A*, as step indices; always contains the sink
  std::set<NodeRef> node_ids;   // V*, for diagnostics
  bool valid = true;            // false when a needed info node was unreachable
  int d_sink = -1;
};

// A set of actions is a valid closure when the sink is kept and every
// support of every kept action is the query node or produced by a kept
// action.
bool is_valid_closure(const StateGraph& g, const std::set<int>& action_steps);

// Forward Dijkstra, then backward traversal from the sink: action nodes
// enqueue all of their graph predecessors, info nodes enqueue only their
// Dijkstra predecessor when it exists. Throws UnreachableSink when the sink
// has no path from I_0; a needed-but-unreachable info node instead marks the
// result invalid (it cannot vote).
NecessarySet mine_mndag(const StateGraph& g);

// Exhaustive minimum-cardinality valid closure, smallest step set
// lexicographically on ties. Test support only.
std::set<int> brute_force_oracle(const StateGraph& g);

struct VoteResult {
  std::array<NecessarySet, 3> candidates;
  bool accepted = false;
  NecessarySet final;  // meaningful only when accepted
};

// Accepts when at least two valid candidates agree on action_steps.
VoteResult majority_vote(NecessarySet c1, NecessarySet c2, NecessarySet c3);

}  // namespace clip
