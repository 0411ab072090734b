#include "clip/mndag.hpp"

#include <algorithm>
#include <deque>
#include <vector>

namespace clip {

DijkstraState shortest_costs(const StateGraph& g) {
  DijkstraState state;
  std::set<std::pair<int, NodeRef>> frontier;
  state.dist[info_ref(0)] = 0;
  frontier.insert({0, info_ref(0)});
  while (!frontier.empty()) {
    const auto [d, u] = *frontier.begin();
    frontier.erase(frontier.begin());
    for (const NodeRef& v : g.successors(u)) {
      const int nd = d + (v.type == NodeType::Action ? 1 : 0);
      const auto it = state.dist.find(v);
      if (it != state.dist.end() && it->second <= nd) continue;
      if (it != state.dist.end()) frontier.erase({it->second, v});
      state.dist[v] = nd;
      state.pred[v] = u;
      frontier.insert({nd, v});
    }
  }
  return state;
}

bool is_valid_closure(const StateGraph& g, const std::set<int>& action_steps) {
  if (g.actions.empty() || action_steps.count(g.sink_step()) == 0) return false;
  std::set<int> produced{0};
  for (const Edge& e : g.edges) {
    if (e.first.type == NodeType::Action && action_steps.count(e.first.id)) {
      produced.insert(e.second.id);
    }
  }
  for (const int step : action_steps) {
    for (const NodeRef& u : g.predecessors(action_ref(step))) {
      if (!produced.count(u.id)) return false;
    }
  }
  return true;
}

NecessarySet mine_mndag(const StateGraph& g) {
  const int sink = g.sink_step();
  const DijkstraState state = shortest_costs(g);
  if (!state.reached(action_ref(sink))) {
    throw UnreachableSink("no path from the query node to the answer at step " +
                          std::to_string(sink));
  }

  NecessarySet result;
  result.d_sink = state.dist.at(action_ref(sink));
  std::deque<NodeRef> queue{action_ref(sink)};
  result.node_ids.insert(action_ref(sink));
  while (!queue.empty()) {
    const NodeRef v = queue.front();
    queue.pop_front();
    if (v.type == NodeType::Action) {
      for (const NodeRef& u : g.predecessors(v)) {
        if (result.node_ids.insert(u).second) queue.push_back(u);
      }
    } else {
      const auto it = state.pred.find(v);
      if (it == state.pred.end()) {
        if (v.id != 0) result.valid = false;  // needed info with no path
        continue;
      }
      if (result.node_ids.insert(it->second).second) queue.push_back(it->second);
    }
  }
  for (const NodeRef& v : result.node_ids) {
    if (v.type == NodeType::Action) result.action_steps.insert(v.id);
  }
  if (result.valid) result.valid = is_valid_closure(g, result.action_steps);
  return result;
}

std::set<int> brute_force_oracle(const StateGraph& g) {
  const int sink = g.sink_step();
  std::vector<int> others;
  for (const ActionNode& a : g.actions) {
    if (a.step != sink) others.push_back(a.step);
  }
  if (others.size() + 1 > 20) {
    throw TooLarge("brute force refused: " + std::to_string(others.size() + 1) +
                   " action nodes");
  }
  std::sort(others.begin(), others.end());
  const int n = static_cast<int>(others.size());
  for (int extra = 0; extra <= n; ++extra) {
    // combinations of `others` in lexicographic order; the sink (the largest
    // step) is always included, so this order is lexicographic over full sets
    std::vector<int> pick(static_cast<std::size_t>(extra));
    for (int i = 0; i < extra; ++i) pick[static_cast<std::size_t>(i)] = i;
    while (true) {
      std::set<int> candidate{sink};
      for (const int idx : pick) candidate.insert(others[static_cast<std::size_t>(idx)]);
      if (is_valid_closure(g, candidate)) return candidate;
      int i = extra - 1;
      while (i >= 0 && pick[static_cast<std::size_t>(i)] == n - extra + i) --i;
      if (i < 0) break;
      ++pick[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < extra; ++j) {
        pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
      }
    }
  }
  throw UnreachableSink("no valid closure exists for the answer at step " +
                        std::to_string(sink));
}

VoteResult majority_vote(NecessarySet c1, NecessarySet c2, NecessarySet c3) {
  VoteResult vote;
  vote.candidates = {std::move(c1), std::move(c2), std::move(c3)};
  for (int i = 0; i < 3 && !vote.accepted; ++i) {
    for (int j = i + 1; j < 3 && !vote.accepted; ++j) {
      const NecessarySet& a = vote.candidates[static_cast<std::size_t>(i)];
      const NecessarySet& b = vote.candidates[static_cast<std::size_t>(j)];
      if (a.valid && b.valid && a.action_steps == b.action_steps) {
        vote.accepted = true;
        vote.final = a;
      }
    }
  }
  return vote;
}

}  // namespace clip
