#pragma once

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "clip/trajectory.hpp"

namespace clip {

enum class NodeType { Action, Info };  // Action orders before Info everywhere

struct NodeRef {
  NodeType type = NodeType::Action;
  int id = 0;  // step for actions, info id for infos

  auto operator<=>(const NodeRef&) const = default;
};

inline NodeRef action_ref(int step) { return NodeRef{NodeType::Action, step}; }
inline NodeRef info_ref(int id) { return NodeRef{NodeType::Info, id}; }

std::string to_string(const NodeRef& ref);

// Abstract of one agent step: the tool kind (taken from the trajectory, which
// is authoritative) and the extractor's one-line goal.
struct ActionNode {
  int step = 0;
  ToolKind kind = ToolKind::Other;
  std::string kind_name;
  std::string goal;
};

// One atomic unit of information. id 0 is reserved for the query node;
// origin_step records the round that first produced the statement (0 for the
// query itself). Later rounds may re-produce it via additional edges.
struct InfoNode {
  int id = 0;
  std::string statement;
  int origin_step = 0;
};

using Edge = std::pair<NodeRef, NodeRef>;

// Bipartite dependency graph between actions and information.
// Edges: info -> action (the action relied on the info) and
// action -> info (the action produced the info).
struct StateGraph {
  std::vector<ActionNode> actions;  // ascending by step, steps 1..T
  std::vector<InfoNode> infos;      // ascending by id, ids 0..n-1
  std::set<Edge> edges;

  int sink_step() const;            // step of the answer action (last action)
  bool has_edge(const NodeRef& from, const NodeRef& to) const;
  void add_edge(const NodeRef& from, const NodeRef& to);
  std::vector<NodeRef> predecessors(const NodeRef& node) const;
  std::vector<NodeRef> successors(const NodeRef& node) const;
  // True when a directed path from -> to exists.
  bool reaches(const NodeRef& from, const NodeRef& to) const;
};

struct GraphDiagnostics {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Structural checks: bipartiteness, temporal monotonicity (production edges
// A_t->I need I.origin_step <= t, support edges I->A_t need
// I.origin_step < t), acyclicity, unique answer sink, and sink reachability
// from the query node. All violations are reported, none thrown.
GraphDiagnostics validate_graph(const StateGraph& g);

// Canonical JSON export: actions by step, infos by id, edges lexicographic.
std::string export_graph(const StateGraph& g);
StateGraph parse_graph_json(const std::string& text);

// The set of info nodes currently visible to the extractor, in insertion
// order. Starts as {I_0} and only grows.
struct Workspace {
  std::vector<int> visible;

  bool contains(int info_id) const;
  void add(int info_id);
  // Ids shown to the extractor: the query node plus the most recent entries
  // when a cap is set (0 = unlimited).
  std::vector<int> presented(std::size_t cap) const;
};

// Parsed extractor output for one snippet iteration: the observation's
// atomic units (matched against the workspace or new) and the info ids the
// next action relies on.
struct UnitRef {
  std::string statement;
  std::optional<int> match;  // nullopt => create a new node
};

struct ExtractorTurnOutput {
  std::vector<UnitRef> units;
  std::vector<int> supports_next;
  bool next_unsupported = false;  // explicit declaration, allows empty supports
};

}  // namespace clip
