// Acceptance gate: one line per criterion, nonzero exit when any fail.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "clip/corpus.hpp"
#include "clip/graph_builder.hpp"
#include "clip/metrics.hpp"
#include "clip/mndag.hpp"
#include "clip/pipeline.hpp"
#include "clip/rewriter.hpp"
#include "test_support.hpp"

using namespace clip;

namespace {

namespace fs = std::filesystem;

struct GoldenRow {
  double acc;
  double rounds;
  double fae;
};

// Reference operating points with known scores at the 100-round budget.
const GoldenRow kGoldenRows[] = {
    {0.540, 5.98, 0.686},  {0.427, 4.38, 0.590},  {0.490, 8.84, 0.637},
    {0.517, 9.05, 0.659},  {0.713, 14.26, 0.779}, {0.676, 12.50, 0.763},
    {0.603, 8.85, 0.725},  {0.713, 10.81, 0.792}, {0.733, 12.57, 0.797},
    {0.094, 16.65, 0.169}, {0.144, 10.25, 0.248}, {0.046, 13.70, 0.087},
    {0.137, 29.43, 0.229}, {0.410, 63.70, 0.385}, {0.373, 62.80, 0.372},
    {0.220, 37.10, 0.326}, {0.427, 56.50, 0.431}, {0.467, 60.42, 0.428},
    {0.469, 6.45, 0.625},  {0.392, 4.01, 0.557},  {0.456, 7.14, 0.612},
    {0.372, 12.88, 0.521}, {0.682, 20.56, 0.733}, {0.663, 18.70, 0.730},
    {0.514, 15.60, 0.638}, {0.684, 14.44, 0.760}, {0.695, 19.92, 0.744},
    {0.146, 5.17, 0.253},  {0.137, 5.89, 0.239},  {0.199, 7.45, 0.327},
    {0.116, 15.52, 0.203}, {0.358, 23.92, 0.487}, {0.349, 23.91, 0.479},
    {0.327, 18.03, 0.467}, {0.353, 18.60, 0.492}, {0.361, 21.07, 0.495},
};

constexpr double kGoldenTolerance = 0.002;
constexpr int kGoldenBudget = 100;

std::string fmt(const char* pattern, double a, double b = 0, double c = 0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return buf;
}

std::string g_note;  // informational line printed after the criterion result

std::string rstrip(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

std::string criterion_1_golden_values() {
  for (const GoldenRow& row : kGoldenRows) {
    const double got = f_ae(row.acc, row.rounds, kGoldenBudget);
    if (std::abs(got - row.fae) > kGoldenTolerance) {
      return fmt("acc=%.3f rounds=%.2f expected near %.3f", row.acc, row.rounds,
                 row.fae) +
             fmt(" got %.4f", got);
    }
  }
  return {};
}

std::string criterion_2_miner_oracle() {
  std::mt19937 rng(20240901);
  for (int i = 0; i < 1000; ++i) {
    cliptest::RandomGraphOptions opts;
    opts.max_actions = 12;
    opts.unique_producer = true;
    const StateGraph g = cliptest::random_state_graph(rng, opts);
    if (!validate_graph(g).violations.empty()) {
      return "unique-producer graph " + std::to_string(i) + " failed validation";
    }
    const NecessarySet mined = mine_mndag(g);
    if (!mined.valid) return "miner rejected unique-producer graph " + std::to_string(i);
    const std::set<int> oracle = brute_force_oracle(g);
    if (mined.action_steps != oracle) {
      return "miner/oracle mismatch on unique-producer graph " + std::to_string(i);
    }
  }

  std::mt19937 rng2(77020901);
  int checked = 0;
  int oracle_beat_miner = 0;
  for (int i = 0; i < 400; ++i) {
    cliptest::RandomGraphOptions opts;
    opts.max_actions = 12;
    opts.unique_producer = false;
    const StateGraph g = cliptest::random_state_graph(rng2, opts);
    NecessarySet mined;
    try {
      mined = mine_mndag(g);
    } catch (const UnreachableSink&) {
      continue;
    }
    if (!mined.valid) continue;
    ++checked;
    if (!mined.action_steps.count(g.sink_step())) {
      return "general graph " + std::to_string(i) + ": mined set lacks the sink";
    }
    if (!cliptest::reference_closure_check(g, mined.action_steps)) {
      return "general graph " + std::to_string(i) + ": mined set is not a closure";
    }
    const std::set<int> oracle = brute_force_oracle(g);
    if (oracle.size() > mined.action_steps.size()) {
      return "general graph " + std::to_string(i) + ": oracle larger than miner";
    }
    if (oracle.size() < mined.action_steps.size()) ++oracle_beat_miner;
  }
  if (checked < 100) return "too few mineable general graphs: " + std::to_string(checked);
  g_note = "oracle found a smaller closure on " + std::to_string(oracle_beat_miner) +
           " of " + std::to_string(checked) + " general graphs";
  return {};
}

std::string criterion_3_vote() {
  std::vector<std::set<int>> subsets;
  for (int mask = 0; mask < 32; ++mask) {
    std::set<int> s;
    for (int bit = 0; bit < 5; ++bit) {
      if (mask & (1 << bit)) s.insert(bit + 1);
    }
    subsets.push_back(std::move(s));
  }
  auto as_set = [](const std::set<int>& steps, bool valid) {
    NecessarySet ns;
    ns.valid = valid;
    ns.action_steps = steps;
    return ns;
  };
  for (const std::set<int>& a : subsets) {
    for (const std::set<int>& b : subsets) {
      for (const std::set<int>& c : subsets) {
        const VoteResult vote =
            majority_vote(as_set(a, true), as_set(b, true), as_set(c, true));
        const bool expect = a == b || a == c || b == c;
        if (vote.accepted != expect) return "acceptance mismatch on all-valid triple";
        if (vote.accepted) {
          const std::set<int>& majority = (a == b || a == c) ? a : b;
          if (vote.final.action_steps != majority) return "wrong majority value";
        }
        // An invalid candidate cannot form the winning pair.
        const VoteResult degraded =
            majority_vote(as_set(a, false), as_set(b, true), as_set(c, true));
        if (degraded.accepted != (b == c)) {
          return "invalid candidate treated as a vote partner";
        }
        if (degraded.accepted && degraded.final.action_steps != b) {
          return "wrong majority value with an invalid candidate";
        }
      }
    }
  }
  return {};
}

std::string criterion_4_rejection_filter() {
  Trajectory answer_only;
  answer_only.query = "q";
  answer_only.meta = {"test", "answer-only", 1};
  answer_only.rounds.push_back(
      cliptest::make_round(1, "answering immediately", "answer", "a"));
  validate_trajectory(answer_only);

  for (int k = 1; k <= 8; ++k) {
    for (int mask = 0; mask < (1 << k); ++mask) {
      SampledBatch batch;
      batch.record = QARecord{"q", "a", "test"};
      int correct = 0;
      for (int s = 0; s < k; ++s) {
        const bool is_correct = mask & (1 << s);
        correct += is_correct ? 1 : 0;
        batch.trajectories.emplace_back(answer_only, is_correct);
      }
      const bool expect = correct > 0 && 2 * correct <= k;
      if (rejection_filter(batch) != expect) {
        return "filter mismatch at k=" + std::to_string(k) +
               " correct=" + std::to_string(correct);
      }
      const double pr = pass_rate(batch);
      if (std::abs(pr - static_cast<double>(correct) / k) > 1e-12) {
        return "pass rate mismatch at k=" + std::to_string(k);
      }
    }
  }
  return {};
}

PipelineConfig corpus_config(const fs::path& dir) {
  PipelineConfig cfg;
  cfg.input_path = (dir / "corpus.jsonl").string();
  cfg.out_dir = (dir / "out").string();
  cfg.mock_mode = true;
  return cfg;
}

std::string criterion_5_end_to_end() {
  const Corpus corpus = make_synthetic_corpus();

  const fs::path a = cliptest::fresh_dir("acceptance-e2e-a");
  const fs::path b = cliptest::fresh_dir("acceptance-e2e-b");
  for (const fs::path& dir : {a, b}) {
    cliptest::spit(dir / "corpus.jsonl", corpus_jsonl(corpus));
    const PipelineConfig cfg = corpus_config(dir);
    const PruneOutcome outcome = run_prune(cfg, make_roles(cfg));
    if (outcome.exit_code != 0) {
      return "pipeline exit " + std::to_string(outcome.exit_code);
    }
    if (outcome.report.round_reduction < 0.20) {
      return fmt("round reduction %.4f below 0.20", outcome.report.round_reduction);
    }
  }

  for (const char* name : {"pruned.jsonl", "unpruned.jsonl", "sft_eff.jsonl",
                           "sft_hybrid.jsonl", "report.json"}) {
    const std::string left = cliptest::slurp(a / "out" / name);
    if (left.empty()) return std::string(name) + " missing or empty";
    if (left != cliptest::slurp(b / "out" / name)) {
      return std::string(name) + " differs between runs";
    }
    const std::string golden = cliptest::slurp(fs::path(CLIP_GOLDEN_DIR) / name);
    if (golden.empty()) return std::string(name) + " has no golden copy";
    if (left != golden) return std::string(name) + " differs from the golden copy";
  }

  // Rewriting touches exactly the seam positions of every pruned trajectory.
  const RoleSet roles = make_mock_roles();
  const std::string system_prompt = rstrip(PromptLibrary::load_default().agent_system);
  for (const CorpusQuery& q : corpus.queries) {
    if (q.expected_pool != "pruned") continue;
    const Trajectory& t = q.trajectories[static_cast<std::size_t>(q.correct_sample)];
    const std::vector<ActionNode> actions =
        extract_action_nodes(t, *roles.extractor, false);
    std::vector<NecessarySet> sets;
    for (int v = 0; v < 3; ++v) {
      BuildOptions opts;
      opts.variant = v;
      sets.push_back(mine_mndag(build_state_graph(t, actions, *roles.extractor, opts)));
    }
    const VoteResult vote = majority_vote(sets[0], sets[1], sets[2]);
    if (!vote.accepted) return "vote rejected a prunable corpus query";
    if (q.expected_kept && vote.final.action_steps != *q.expected_kept) {
      return "mined steps differ from the scripted necessary set";
    }
    PrunedTrajectory p = assemble_pruned(t, vote.final);
    if (p.seams.empty()) return "prunable corpus query produced no seams";
    p = rewrite_seams(p, *roles.rewriter, *roles.scorer, system_prompt);
    if (p.rewritten != p.seams) return "rewritten positions differ from seam positions";
    const Trajectory out = to_trajectory(p);
    for (int step = 1; step <= out.total_steps(); ++step) {
      if (out.round(step).index != step) return "pruned trajectory is not contiguous";
    }
  }
  return {};
}

std::string criterion_6_graph_invariants() {
  const Corpus corpus = make_synthetic_corpus();
  const RoleSet roles = make_mock_roles();
  for (const CorpusQuery& q : corpus.queries) {
    if (!q.forwarded) continue;
    const Trajectory& t = q.trajectories[static_cast<std::size_t>(q.correct_sample)];
    const std::vector<ActionNode> actions =
        extract_action_nodes(t, *roles.extractor, false);
    const StateGraph g = build_state_graph(t, actions, *roles.extractor, {});
    for (const std::string& v : validate_graph(g).violations) {
      if (v.find("unreachable") == std::string::npos) {
        return "constructed graph violated: " + v;
      }
      if (q.outcome != "unreachable") {
        return "unexpected unreachable answer for a minable query";
      }
    }
  }

  const Trajectory chain = cliptest::mock_chain_trajectory(4);
  const std::vector<ActionNode> actions =
      extract_action_nodes(chain, *roles.extractor, false);
  const StateGraph base = build_state_graph(chain, actions, *roles.extractor, {});
  if (!validate_graph(base).violations.empty()) return "baseline graph not clean";

  std::vector<std::pair<const char*, StateGraph>> mutants;
  {
    StateGraph g = base;
    g.add_edge(info_ref(1), info_ref(2));
    mutants.emplace_back("info-info edge", std::move(g));
  }
  {
    StateGraph g = base;
    g.add_edge(action_ref(1), action_ref(2));
    mutants.emplace_back("action-action edge", std::move(g));
  }
  {
    StateGraph g = base;
    g.add_edge(action_ref(1), info_ref(3));
    mutants.emplace_back("production before origin", std::move(g));
  }
  {
    StateGraph g = base;
    g.add_edge(info_ref(3), action_ref(2));
    mutants.emplace_back("support from the future", std::move(g));
  }
  {
    StateGraph g = base;
    g.actions[1].kind = ToolKind::Answer;
    mutants.emplace_back("second answer action", std::move(g));
  }
  {
    StateGraph g = base;
    g.infos.erase(g.infos.begin());
    mutants.emplace_back("missing query node", std::move(g));
  }
  {
    StateGraph g = base;
    g.add_edge(action_ref(2), info_ref(1));
    mutants.emplace_back("two-node cycle", std::move(g));
  }
  {
    StateGraph g = base;
    g.infos.back().id += 5;
    mutants.emplace_back("info id gap", std::move(g));
  }
  for (const auto& [name, mutant] : mutants) {
    if (validate_graph(mutant).violations.empty()) {
      return std::string("mutation not detected: ") + name;
    }
  }
  return {};
}

std::string criterion_7_round_trips() {
  const Corpus corpus = make_synthetic_corpus();
  const RoleSet roles = make_mock_roles();
  const std::string system_prompt = rstrip(PromptLibrary::load_default().agent_system);
  for (const CorpusQuery& q : corpus.queries) {
    for (const Trajectory& t : q.trajectories) {
      const std::string line = serialize_trajectory(t);
      if (serialize_trajectory(parse_trajectory(line)) != line) {
        return "trajectory line did not round-trip";
      }
      const SFTExample ex = make_sft_example(t, "unpruned", system_prompt);
      validate_sft_example(ex);
      const std::string sft_line = serialize_sft_example(ex);
      if (serialize_sft_example(parse_sft_example(sft_line)) != sft_line) {
        return "sft line did not round-trip";
      }
    }
    if (!q.forwarded) continue;
    const Trajectory& t = q.trajectories[static_cast<std::size_t>(q.correct_sample)];
    const std::vector<ActionNode> actions =
        extract_action_nodes(t, *roles.extractor, false);
    const StateGraph g = build_state_graph(t, actions, *roles.extractor, {});
    const std::string exported = export_graph(g);
    if (export_graph(parse_graph_json(exported)) != exported) {
      return "graph export did not round-trip";
    }
  }
  return {};
}

std::string criterion_8_fae_properties() {
  constexpr int kGrid = 100;
  constexpr int kBudget = 100;
  for (int i = 0; i < kGrid; ++i) {
    const double acc = static_cast<double>(i) / (kGrid - 1);
    double prev = -1.0;
    for (int j = 0; j < kGrid; ++j) {
      const double rounds = kBudget * static_cast<double>(j) / (kGrid - 1);
      const double eff = efficiency(rounds, kBudget);
      const double score = f_ae(acc, rounds, kBudget);
      if (std::abs(score - harmonic_balance(eff, acc)) > 1e-12) {
        return fmt("asymmetric at acc=%.4f rounds=%.2f", acc, rounds);
      }
      if (score > 2.0 * std::min(acc, eff) + 1e-12) {
        return fmt("harmonic bound broken at acc=%.4f rounds=%.2f", acc, rounds);
      }
      if ((score == 0.0) != (acc == 0.0 || eff == 0.0)) {
        return fmt("zero-iff broken at acc=%.4f rounds=%.2f", acc, rounds);
      }
      if (acc > 0.0 && j > 0 && score >= prev) {
        return fmt("not strictly decreasing at acc=%.4f rounds=%.2f", acc, rounds);
      }
      prev = score;
    }
  }
  return {};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::string (*run)();
  };
  const Criterion criteria[] = {
      {"f-ae golden values", criterion_1_golden_values},
      {"miner equals brute-force oracle", criterion_2_miner_oracle},
      {"exhaustive 2-of-3 vote", criterion_3_vote},
      {"exhaustive rejection filter", criterion_4_rejection_filter},
      {"end-to-end mock corpus", criterion_5_end_to_end},
      {"graph invariants and mutation detection", criterion_6_graph_invariants},
      {"serialization round-trips", criterion_7_round_trips},
      {"f-ae properties", criterion_8_fae_properties},
  };

  int failures = 0;
  int index = 0;
  for (const Criterion& c : criteria) {
    ++index;
    g_note.clear();
    std::string detail;
    try {
      detail = c.run();
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const bool ok = detail.empty();
    std::printf("criterion %d  %-42s %s\n", index, c.name, ok ? "PASS" : "FAIL");
    if (!ok) {
      std::printf("             %s\n", detail.c_str());
      ++failures;
    }
    if (!g_note.empty()) std::printf("             note: %s\n", g_note.c_str());
  }
  std::printf("acceptance: %d/8 criteria passed\n", 8 - failures);
  return failures == 0 ? 0 : 1;
}
