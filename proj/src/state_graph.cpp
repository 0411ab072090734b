#include "clip/state_graph.hpp"

#include <algorithm>
#include <climits>
#include <deque>

#include "json.hpp"

namespace clip {

using ordered_json = nlohmann::ordered_json;

std::string to_string(const NodeRef& ref) {
  return (ref.type == NodeType::Action ? "A" : "I") + std::to_string(ref.id);
}

int StateGraph::sink_step() const {
  if (actions.empty()) throw StructureError("graph has no action nodes");
  return actions.back().step;
}

bool StateGraph::has_edge(const NodeRef& from, const NodeRef& to) const {
  return edges.count({from, to}) > 0;
}

void StateGraph::add_edge(const NodeRef& from, const NodeRef& to) {
  edges.insert({from, to});
}

std::vector<NodeRef> StateGraph::predecessors(const NodeRef& node) const {
  std::vector<NodeRef> out;
  for (const Edge& e : edges) {
    if (e.second == node) out.push_back(e.first);
  }
  return out;
}

std::vector<NodeRef> StateGraph::successors(const NodeRef& node) const {
  std::vector<NodeRef> out;
  // edges is ordered by (from, to), so the range scan stays sorted
  for (auto it = edges.lower_bound({node, NodeRef{NodeType::Action, INT_MIN}});
       it != edges.end() && it->first == node; ++it) {
    out.push_back(it->second);
  }
  return out;
}

bool StateGraph::reaches(const NodeRef& from, const NodeRef& to) const {
  if (from == to) return true;
  std::set<NodeRef> seen{from};
  std::deque<NodeRef> queue{from};
  while (!queue.empty()) {
    NodeRef cur = queue.front();
    queue.pop_front();
    for (const NodeRef& next : successors(cur)) {
      if (next == to) return true;
      if (seen.insert(next).second) queue.push_back(next);
    }
  }
  return false;
}

GraphDiagnostics validate_graph(const StateGraph& g) {
  GraphDiagnostics diag;
  auto report = [&diag](std::string msg) { diag.violations.push_back(std::move(msg)); };

  if (g.actions.empty()) {
    report("no action nodes");
    return diag;
  }
  if (g.infos.empty() || g.infos.front().id != 0) {
    report("info id 0 (query node) is missing");
  }

  std::map<int, const ActionNode*> action_by_step;
  for (std::size_t i = 0; i < g.actions.size(); ++i) {
    const ActionNode& a = g.actions[i];
    const int expect = static_cast<int>(i) + 1;
    if (a.step != expect) {
      report("action steps not contiguous: expected " + std::to_string(expect) +
             ", got " + std::to_string(a.step));
    }
    if (!action_by_step.emplace(a.step, &a).second) {
      report("duplicate action step " + std::to_string(a.step));
    }
  }
  std::map<int, const InfoNode*> info_by_id;
  for (std::size_t i = 0; i < g.infos.size(); ++i) {
    const InfoNode& n = g.infos[i];
    if (n.id != static_cast<int>(i)) {
      report("info ids not contiguous at position " + std::to_string(i));
    }
    if (n.statement.empty()) {
      report("info " + std::to_string(n.id) + " has an empty statement");
    }
    if (!info_by_id.emplace(n.id, &n).second) {
      report("duplicate info id " + std::to_string(n.id));
    }
  }

  int sink_count = 0;
  for (const ActionNode& a : g.actions) {
    if (a.kind == ToolKind::Answer) ++sink_count;
  }
  if (sink_count != 1) {
    report("expected exactly one answer node, found " + std::to_string(sink_count));
  } else if (g.actions.back().kind != ToolKind::Answer) {
    report("answer node is not the last action");
  }

  auto exists = [&](const NodeRef& ref) {
    return ref.type == NodeType::Action ? action_by_step.count(ref.id) > 0
                                        : info_by_id.count(ref.id) > 0;
  };
  for (const Edge& e : g.edges) {
    const auto& [from, to] = e;
    if (!exists(from) || !exists(to)) {
      report("edge " + to_string(from) + "->" + to_string(to) +
             " references a missing node");
      continue;
    }
    if (from.type == to.type) {
      report("bipartiteness violation: " + to_string(from) + "->" + to_string(to));
      continue;
    }
    if (from.type == NodeType::Action) {
      const int origin = info_by_id.at(to.id)->origin_step;
      if (origin > from.id) {
        report("temporal violation: production edge " + to_string(from) + "->" +
               to_string(to) + " but info originates at step " + std::to_string(origin));
      }
    } else {
      const int origin = info_by_id.at(from.id)->origin_step;
      if (origin >= to.id) {
        report("temporal violation: support edge " + to_string(from) + "->" +
               to_string(to) + " but info originates at step " + std::to_string(origin));
      }
    }
  }

  // Kahn's algorithm over whatever edges exist, bipartite or not.
  {
    std::map<NodeRef, int> indegree;
    for (const ActionNode& a : g.actions) indegree[action_ref(a.step)] = 0;
    for (const InfoNode& n : g.infos) indegree[info_ref(n.id)] = 0;
    for (const Edge& e : g.edges) {
      auto it = indegree.find(e.second);
      if (it != indegree.end()) ++it->second;
    }
    std::deque<NodeRef> queue;
    for (const auto& [ref, deg] : indegree) {
      if (deg == 0) queue.push_back(ref);
    }
    std::size_t visited = 0;
    while (!queue.empty()) {
      NodeRef cur = queue.front();
      queue.pop_front();
      ++visited;
      for (const NodeRef& next : g.successors(cur)) {
        auto it = indegree.find(next);
        if (it != indegree.end() && --it->second == 0) queue.push_back(next);
      }
    }
    if (visited != indegree.size()) {
      report("graph contains a cycle");
    }
  }

  if (sink_count == 1 && !g.infos.empty() && g.infos.front().id == 0) {
    if (!g.reaches(info_ref(0), action_ref(g.actions.back().step))) {
      report("answer node is unreachable from the query node");
    }
  }
  return diag;
}

std::string export_graph(const StateGraph& g) {
  ordered_json doc;
  doc["source"] = 0;
  doc["sink_step"] = g.sink_step();
  ordered_json actions = ordered_json::array();
  for (const ActionNode& a : g.actions) {
    actions.push_back({{"step", a.step}, {"kind", a.kind_name}, {"goal", a.goal}});
  }
  doc["actions"] = std::move(actions);
  ordered_json infos = ordered_json::array();
  for (const InfoNode& n : g.infos) {
    infos.push_back(
        {{"id", n.id}, {"statement", n.statement}, {"origin_step", n.origin_step}});
  }
  doc["infos"] = std::move(infos);
  ordered_json edges = ordered_json::array();
  for (const Edge& e : g.edges) {  // std::set order == lexicographic export order
    auto side = [](const NodeRef& ref) {
      return ordered_json{
          {"type", ref.type == NodeType::Action ? "action" : "info"},
          {"id", ref.id}};
    };
    edges.push_back({{"from", side(e.first)}, {"to", side(e.second)}});
  }
  doc["edges"] = std::move(edges);
  return doc.dump();
}

namespace {

NodeRef parse_ref(const ordered_json& side) {
  const std::string type = side.at("type").get<std::string>();
  const int id = side.at("id").get<int>();
  if (type == "action") return action_ref(id);
  if (type == "info") return info_ref(id);
  throw SchemaError("edge endpoint type must be \"action\" or \"info\", got " + type);
}

}  // namespace

StateGraph parse_graph_json(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("invalid graph JSON: ") + e.what());
  }
  StateGraph g;
  try {
    for (const ordered_json& aj : doc.at("actions")) {
      ActionNode a;
      a.step = aj.at("step").get<int>();
      a.kind_name = aj.at("kind").get<std::string>();
      a.kind = kind_from_string(a.kind_name);
      a.goal = aj.at("goal").get<std::string>();
      g.actions.push_back(std::move(a));
    }
    for (const ordered_json& ij : doc.at("infos")) {
      InfoNode n;
      n.id = ij.at("id").get<int>();
      n.statement = ij.at("statement").get<std::string>();
      n.origin_step = ij.at("origin_step").get<int>();
      g.infos.push_back(std::move(n));
    }
    for (const ordered_json& ej : doc.at("edges")) {
      g.add_edge(parse_ref(ej.at("from")), parse_ref(ej.at("to")));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("graph JSON schema error: ") + e.what());
  }
  std::sort(g.actions.begin(), g.actions.end(),
            [](const ActionNode& a, const ActionNode& b) { return a.step < b.step; });
  std::sort(g.infos.begin(), g.infos.end(),
            [](const InfoNode& a, const InfoNode& b) { return a.id < b.id; });
  return g;
}

bool Workspace::contains(int info_id) const {
  return std::find(visible.begin(), visible.end(), info_id) != visible.end();
}

void Workspace::add(int info_id) {
  if (!contains(info_id)) visible.push_back(info_id);
}

std::vector<int> Workspace::presented(std::size_t cap) const {
  if (cap == 0 || visible.size() <= cap) return visible;
  std::vector<int> out;
  out.reserve(cap);
  std::size_t start = visible.size() - cap;
  if (!visible.empty() && visible.front() == 0) {
    out.push_back(0);  // the query node stays visible
    start = visible.size() - (cap - 1);
  }
  for (std::size_t i = start; i < visible.size(); ++i) {
    if (visible[i] == 0 && !out.empty() && out.front() == 0) continue;
    out.push_back(visible[i]);
  }
  return out;
}

}  // namespace clip
