#include "clip/graph_builder.hpp"

#include <future>

namespace clip {

std::vector<ActionNode> extract_action_nodes(const Trajectory& t,
                                             ExtractorRole& extractor,
                                             bool parallel) {
  const int total = t.total_steps();
  std::vector<ActionNode> nodes(static_cast<std::size_t>(total));
  auto fill = [&](int step) {
    const Round& r = t.round(step);
    ActionSummary summary = extractor.summarize_turn(t, step);
    ActionNode& node = nodes[static_cast<std::size_t>(step - 1)];
    node.step = step;
    node.kind = r.action.kind;  // the trajectory is authoritative
    node.kind_name = r.action.name;
    node.goal = std::move(summary.goal);
  };
  if (parallel) {
    std::vector<std::future<void>> pending;
    pending.reserve(static_cast<std::size_t>(total));
    for (int step = 1; step <= total; ++step) {
      pending.push_back(std::async(std::launch::async, fill, step));
    }
    for (auto& f : pending) f.get();
  } else {
    for (int step = 1; step <= total; ++step) fill(step);
  }
  return nodes;
}

StateGraph build_state_graph(const Trajectory& t,
                             const std::vector<ActionNode>& actions,
                             ExtractorRole& extractor, const BuildOptions& opts) {
  const int total = t.total_steps();
  if (static_cast<int>(actions.size()) != total) {
    throw StructureError("action nodes misaligned: trajectory has " +
                         std::to_string(total) + " rounds, got " +
                         std::to_string(actions.size()) + " nodes");
  }
  for (int step = 1; step <= total; ++step) {
    if (actions[static_cast<std::size_t>(step - 1)].step != step) {
      throw StructureError("action nodes out of order at step " +
                           std::to_string(step));
    }
  }

  StateGraph g;
  g.actions = actions;
  g.infos.push_back(InfoNode{0, t.query, 0});
  g.add_edge(info_ref(0), action_ref(1));

  Workspace ws;
  ws.add(0);

  for (int step = 1; step < total; ++step) {
    SnippetContext ctx;
    ctx.query = t.query;
    for (const int id : ws.presented(opts.workspace_cap)) {
      ctx.workspace.emplace_back(id, g.infos[static_cast<std::size_t>(id)].statement);
    }
    ctx.prev = g.actions[static_cast<std::size_t>(step - 1)];
    ctx.observation = t.round(step).observation.value_or("");
    ctx.next = g.actions[static_cast<std::size_t>(step)];
    ctx.step = step;
    ctx.next_free_id = static_cast<int>(g.infos.size());
    ctx.last_snippet = (step == total - 1);
    ctx.variant = opts.variant;

    const ExtractorTurnOutput out = extractor.analyze_snippet(ctx);

    for (const UnitRef& unit : out.units) {
      int id;
      if (unit.match) {
        id = *unit.match;
        if (id < 0 || id >= static_cast<int>(g.infos.size())) {
          throw DanglingSupport(
              "extractor matched nonexistent info id " + std::to_string(id), step);
        }
        // A re-produced fact must not close a loop through earlier supports.
        if (g.reaches(info_ref(id), action_ref(step))) continue;
      } else {
        id = static_cast<int>(g.infos.size());
        g.infos.push_back(InfoNode{id, unit.statement, step});
        ws.add(id);
      }
      g.add_edge(action_ref(step), info_ref(id));
    }

    for (const int id : out.supports_next) {
      if (id < 0 || id >= static_cast<int>(g.infos.size())) {
        throw DanglingSupport(
            "extractor cited nonexistent info id " + std::to_string(id), step);
      }
      g.add_edge(info_ref(id), action_ref(step + 1));
    }
  }
  return g;
}

StateGraph build_state_graph(const Trajectory& t, ExtractorRole& extractor,
                             const BuildOptions& opts) {
  return build_state_graph(t, extract_action_nodes(t, extractor), extractor, opts);
}

}  // namespace clip
