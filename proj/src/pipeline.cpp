#include "clip/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

#include "json.hpp"

#include "clip/graph_builder.hpp"
#include "clip/metrics.hpp"
#include "clip/mndag.hpp"
#include "clip/prompts.hpp"

namespace clip {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string trajectory_id_for(const Trajectory& t) {
  return hex64(fnv1a64(serialize_trajectory(t)));
}

std::string rtrim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Atomic-enough replace: identical content may race from duplicate inputs,
// but a reader never sees a half-written file.
void write_file(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

// ---- role call counting ----

struct CallCounters {
  std::atomic<long long> extractor{0};
  std::atomic<long long> rewriter{0};
  std::atomic<long long> scorer{0};
  std::atomic<long long> judge{0};
};

class CountingExtractor : public ExtractorRole {
public:
  CountingExtractor(std::shared_ptr<ExtractorRole> inner, CallCounters& counters)
      : inner_(std::move(inner)), counters_(counters) {}

  ActionSummary summarize_turn(const Trajectory& t, int step) override {
    ++counters_.extractor;
    return inner_->summarize_turn(t, step);
  }
  ExtractorTurnOutput analyze_snippet(const SnippetContext& ctx) override {
    ++counters_.extractor;
    return inner_->analyze_snippet(ctx);
  }

private:
  std::shared_ptr<ExtractorRole> inner_;
  CallCounters& counters_;
};

class CountingRewriter : public RewriterRole {
public:
  CountingRewriter(std::shared_ptr<RewriterRole> inner, CallCounters& counters)
      : inner_(std::move(inner)), counters_(counters) {}

  std::string rewrite(const RewriteContext& ctx) override {
    ++counters_.rewriter;
    return inner_->rewrite(ctx);
  }

private:
  std::shared_ptr<RewriterRole> inner_;
  CallCounters& counters_;
};

class CountingScorer : public ScorerRole {
public:
  CountingScorer(std::shared_ptr<ScorerRole> inner, CallCounters& counters)
      : inner_(std::move(inner)), counters_(counters) {}

  ScoreResult score(const std::string& prefix, const std::string& continuation) override {
    ++counters_.scorer;
    return inner_->score(prefix, continuation);
  }

private:
  std::shared_ptr<ScorerRole> inner_;
  CallCounters& counters_;
};

class CountingJudge : public JudgeRole {
public:
  CountingJudge(std::shared_ptr<JudgeRole> inner, CallCounters& counters)
      : inner_(std::move(inner)), counters_(counters) {}

  bool judge(const std::string& question, const std::string& prediction,
             const std::string& gold) override {
    ++counters_.judge;
    return inner_->judge(question, prediction, gold);
  }

private:
  std::shared_ptr<JudgeRole> inner_;
  CallCounters& counters_;
};

RoleSet counted(const RoleSet& roles, CallCounters& counters) {
  RoleSet out;
  out.extractor = std::make_shared<CountingExtractor>(roles.extractor, counters);
  out.rewriter = std::make_shared<CountingRewriter>(roles.rewriter, counters);
  out.scorer = std::make_shared<CountingScorer>(roles.scorer, counters);
  out.judge = std::make_shared<CountingJudge>(roles.judge, counters);
  return out;
}

// ---- per-trajectory processing ----

struct CandidateInfo {
  bool valid = false;
  std::vector<int> steps;
};

struct TrajResult {
  std::string trajectory_id;
  std::string outcome;  // accepted | discarded | unreachable | failed
  std::vector<CandidateInfo> candidates;
  std::optional<std::vector<int>> final_steps;
  int d_sink = -1;
  std::optional<std::vector<int>> oracle;
  std::string pruned_line;  // canonical JSONL of the rewritten trajectory
  int input_tool_rounds = 0;
  int kept_tool_rounds = 0;
  std::vector<std::string> warnings;
  std::string failure;
  bool transport_failure = false;
  std::vector<ordered_json> seams;
  std::vector<std::string> graphs;  // one export per vote run
  bool from_state = false;
};

ordered_json traj_state_json(const TrajResult& r) {
  ordered_json doc;
  doc["trajectory_id"] = r.trajectory_id;
  doc["outcome"] = r.outcome;
  ordered_json cands = ordered_json::array();
  for (const CandidateInfo& c : r.candidates) {
    cands.push_back(ordered_json{{"valid", c.valid}, {"steps", c.steps}});
  }
  doc["candidates"] = std::move(cands);
  doc["final"] = r.final_steps ? ordered_json(*r.final_steps) : ordered_json(nullptr);
  doc["d_sink"] = r.d_sink;
  doc["oracle"] = r.oracle ? ordered_json(*r.oracle) : ordered_json(nullptr);
  doc["pruned"] = r.pruned_line.empty() ? ordered_json(nullptr) : ordered_json(r.pruned_line);
  doc["input_tool_rounds"] = r.input_tool_rounds;
  doc["kept_tool_rounds"] = r.kept_tool_rounds;
  doc["warnings"] = r.warnings;
  doc["failure"] = r.failure.empty() ? ordered_json(nullptr) : ordered_json(r.failure);
  doc["transport_failure"] = r.transport_failure;
  doc["seams"] = r.seams;
  doc["graphs"] = r.graphs;
  return doc;
}

TrajResult parse_traj_state(const std::string& text) {
  const ordered_json doc = ordered_json::parse(text);
  TrajResult r;
  r.trajectory_id = doc.at("trajectory_id").get<std::string>();
  r.outcome = doc.at("outcome").get<std::string>();
  for (const ordered_json& cj : doc.at("candidates")) {
    CandidateInfo c;
    c.valid = cj.at("valid").get<bool>();
    c.steps = cj.at("steps").get<std::vector<int>>();
    r.candidates.push_back(std::move(c));
  }
  if (!doc.at("final").is_null()) r.final_steps = doc.at("final").get<std::vector<int>>();
  r.d_sink = doc.at("d_sink").get<int>();
  if (!doc.at("oracle").is_null()) r.oracle = doc.at("oracle").get<std::vector<int>>();
  if (!doc.at("pruned").is_null()) r.pruned_line = doc.at("pruned").get<std::string>();
  r.input_tool_rounds = doc.at("input_tool_rounds").get<int>();
  r.kept_tool_rounds = doc.at("kept_tool_rounds").get<int>();
  r.warnings = doc.at("warnings").get<std::vector<std::string>>();
  if (!doc.at("failure").is_null()) r.failure = doc.at("failure").get<std::string>();
  r.transport_failure = doc.at("transport_failure").get<bool>();
  for (const ordered_json& sj : doc.at("seams")) r.seams.push_back(sj);
  r.graphs = doc.at("graphs").get<std::vector<std::string>>();
  r.from_state = true;
  return r;
}

std::vector<int> to_steps(const std::set<int>& s) { return {s.begin(), s.end()}; }

ordered_json seam_json(const SeamRecord& rec, const PrunedTrajectory& p) {
  ordered_json sj;
  sj["position"] = rec.position;
  sj["original_step"] = p.kept.at(rec.position).first;
  sj["original_thought"] = rec.original_thought;
  ordered_json cands = ordered_json::array();
  for (const Candidate& c : rec.set.candidates) {
    ordered_json cj;
    cj["text"] = c.text;
    cj["screened_out"] = c.screened_out;
    cj["avg_nll"] = c.score ? ordered_json(c.score->avg_nll) : ordered_json(nullptr);
    cands.push_back(std::move(cj));
  }
  sj["candidates"] = std::move(cands);
  sj["winner"] = rec.set.winner;
  return sj;
}

TrajResult process_trajectory(const Trajectory& t, const PipelineConfig& cfg,
                              const RoleSet& roles, const std::string& system_prompt) {
  TrajResult r;
  r.trajectory_id = trajectory_id_for(t);
  r.input_tool_rounds = count_rounds(t);
  r.kept_tool_rounds = r.input_tool_rounds;
  try {
    const std::vector<ActionNode> actions =
        extract_action_nodes(t, *roles.extractor, false);

    std::vector<NecessarySet> sets;
    std::vector<StateGraph> graphs;
    int sink_unreachable = 0;
    for (int v = 0; v < cfg.vote_runs; ++v) {
      BuildOptions opts;
      opts.variant = v;
      opts.workspace_cap = cfg.workspace_cap;
      StateGraph g = build_state_graph(t, actions, *roles.extractor, opts);
      const GraphDiagnostics diag = validate_graph(g);
      for (const std::string& violation : diag.violations) {
        // An unreachable answer is an expected routing outcome, not a defect.
        if (violation.find("unreachable") == std::string::npos) {
          throw StructureError("graph invariant violated: " + violation);
        }
      }
      NecessarySet ns;
      try {
        ns = mine_mndag(g);
      } catch (const UnreachableSink&) {
        ns.valid = false;
        ++sink_unreachable;
      }
      r.graphs.push_back(export_graph(g));
      r.candidates.push_back(CandidateInfo{ns.valid, to_steps(ns.action_steps)});
      if (r.d_sink < 0 && ns.d_sink >= 0) r.d_sink = ns.d_sink;
      sets.push_back(std::move(ns));
      graphs.push_back(std::move(g));
    }

    if (t.total_steps() <= 12) {
      try {
        r.oracle = to_steps(brute_force_oracle(graphs.front()));
      } catch (const Error&) {
        r.oracle = std::nullopt;
      }
    }

    if (sink_unreachable == cfg.vote_runs) {
      r.outcome = "unreachable";
      return r;
    }

    const VoteResult vote = majority_vote(sets.at(0), sets.at(1), sets.at(2));
    if (!vote.accepted) {
      r.outcome = "discarded";
      return r;
    }
    r.outcome = "accepted";
    r.final_steps = to_steps(vote.final.action_steps);
    if (static_cast<int>(vote.final.action_steps.size()) == t.total_steps()) {
      return r;  // nothing to prune; the trajectory stays as-is
    }

    const PrunedTrajectory assembled = assemble_pruned(t, vote.final);
    RewriteOptions ropts;
    ropts.screen_hard_fail = cfg.screen_hard_fail;
    ropts.score_hard_fail = cfg.score_hard_fail;
    std::vector<SeamRecord> records;
    const PrunedTrajectory rewritten = rewrite_seams(
        assembled, *roles.rewriter, *roles.scorer, system_prompt, ropts, &records);
    const Trajectory pruned = to_trajectory(rewritten);
    r.pruned_line = serialize_trajectory(pruned);
    r.kept_tool_rounds = count_rounds(pruned);
    r.warnings = rewritten.warnings;
    for (const SeamRecord& rec : records) r.seams.push_back(seam_json(rec, rewritten));
  } catch (const TransportError& e) {
    r.outcome = "failed";
    r.failure = e.what();
    r.transport_failure = true;
  } catch (const Error& e) {
    r.outcome = "failed";
    r.failure = e.what();
  }
  return r;
}

// ---- batch judging with resume ----

struct BatchJudgment {
  std::vector<bool> verdicts;
  std::size_t correct = 0;
};

BatchJudgment judge_batch(const QueryBatch& batch, const fs::path& state_dir,
                          JudgeRole& judge) {
  const std::string key = hex64(fnv1a64(serialize_query_batch(batch)));
  const fs::path path = state_dir / ("batch-" + key + ".json");
  BatchJudgment out;
  if (fs::exists(path)) {
    try {
      const ordered_json doc = ordered_json::parse(read_file(path));
      const ordered_json& v = doc.at("verdicts");
      if (v.is_array() && v.size() == batch.trajectories.size()) {
        for (const ordered_json& b : v) out.verdicts.push_back(b.get<bool>());
        for (bool b : out.verdicts) out.correct += b ? 1u : 0u;
        return out;
      }
    } catch (const std::exception&) {
      // unreadable state: fall through and re-judge
    }
  }
  for (const Trajectory& t : batch.trajectories) {
    out.verdicts.push_back(judge.judge(batch.record.question,
                                       t.answer_round().action.payload,
                                       batch.record.gold_answer));
  }
  for (bool b : out.verdicts) out.correct += b ? 1u : 0u;
  ordered_json doc;
  doc["question"] = batch.record.question;
  doc["verdicts"] = out.verdicts;
  write_file(path, doc.dump() + "\n");
  return out;
}

struct Task {
  Trajectory trajectory;
};

}  // namespace

std::string report_json(const PipelineReport& r) {
  ordered_json doc;
  ordered_json counts;
  counts["input"] = r.counts.input;
  counts["kept_by_filter"] = r.counts.kept_by_filter;
  counts["filtered_out"] = r.counts.filtered_out;
  counts["forwarded"] = r.counts.forwarded;
  counts["vote_accepted"] = r.counts.vote_accepted;
  counts["vote_discarded"] = r.counts.vote_discarded;
  counts["unreachable"] = r.counts.unreachable;
  counts["failed"] = r.counts.failed;
  counts["exported_pruned"] = r.counts.exported_pruned;
  counts["exported_unpruned"] = r.counts.exported_unpruned;
  doc["counts"] = std::move(counts);
  ordered_json calls;
  calls["extractor"] = r.calls.extractor;
  calls["rewriter"] = r.calls.rewriter;
  calls["scorer"] = r.calls.scorer;
  calls["judge"] = r.calls.judge;
  doc["calls"] = std::move(calls);
  ordered_json rounds;
  rounds["input_mean"] = r.input_rounds_mean;
  rounds["kept_mean"] = r.kept_rounds_mean;
  rounds["reduction"] = r.round_reduction;
  doc["rounds"] = std::move(rounds);
  doc["resumed"] = r.resumed;
  doc["notes"] = r.notes;
  return doc.dump(2) + "\n";
}

std::string report_text(const PipelineReport& r) {
  std::ostringstream out;
  out << "pipeline report\n";
  out << "  input batches    " << r.counts.input << "\n";
  out << "  kept by filter   " << r.counts.kept_by_filter << "  (filtered out "
      << r.counts.filtered_out << ")\n";
  out << "  forwarded        " << r.counts.forwarded << "\n";
  out << "  vote accepted    " << r.counts.vote_accepted << "\n";
  out << "  vote discarded   " << r.counts.vote_discarded << "\n";
  out << "  unreachable      " << r.counts.unreachable << "\n";
  out << "  failed           " << r.counts.failed << "\n";
  out << "  exported         " << r.counts.exported_pruned << " pruned / "
      << r.counts.exported_unpruned << " unpruned\n";
  out << "  tool rounds      " << fixed4(r.input_rounds_mean) << " -> "
      << fixed4(r.kept_rounds_mean) << "  (reduction "
      << fixed4(r.round_reduction) << ")\n";
  out << "  resumed          " << r.resumed << "\n";
  out << "  role calls       extractor=" << r.calls.extractor
      << " rewriter=" << r.calls.rewriter << " scorer=" << r.calls.scorer
      << " judge=" << r.calls.judge << "\n";
  if (!r.notes.empty()) {
    out << "notes:\n";
    for (const std::string& n : r.notes) out << "  - " << n << "\n";
  }
  return out.str();
}

RoleSet make_roles(const PipelineConfig& cfg) {
  if (cfg.mock_mode) return make_mock_roles();
  const PromptLibrary prompts = cfg.prompt_dir.empty()
                                    ? PromptLibrary::load_default()
                                    : PromptLibrary::load(cfg.prompt_dir);
  auto transport = std::make_shared<HttpChatClient>();
  RoleSet roles;
  roles.extractor = std::make_shared<LlmExtractor>(
      std::make_shared<Gateway>(cfg.extractor, transport), prompts, cfg.role_options);
  roles.rewriter = std::make_shared<LlmRewriter>(
      std::make_shared<Gateway>(cfg.rewriter, transport), prompts, cfg.role_options);
  roles.scorer = std::make_shared<LlmScorer>(
      std::make_shared<Gateway>(cfg.scorer, transport));
  roles.judge = std::make_shared<LlmJudge>(
      std::make_shared<Gateway>(cfg.judge, transport), prompts, cfg.role_options);
  return roles;
}

PruneOutcome run_prune(const PipelineConfig& cfg, const RoleSet& raw_roles) {
  const auto started = std::chrono::steady_clock::now();
  PruneOutcome outcome;
  PipelineReport& report = outcome.report;

  CallCounters counters;
  const RoleSet roles = counted(raw_roles, counters);

  const PromptLibrary prompts = cfg.prompt_dir.empty()
                                    ? PromptLibrary::load_default()
                                    : PromptLibrary::load(cfg.prompt_dir);
  const std::string system_prompt = rtrim(prompts.agent_system);

  // Input.
  std::ifstream in(cfg.input_path, std::ios::binary);
  if (!in) {
    report.notes.push_back("cannot open input " + cfg.input_path);
    outcome.exit_code = 3;
    return outcome;
  }
  std::vector<QueryBatch> batches;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      batches.push_back(parse_query_batch(line));
    } catch (const Error& e) {
      report.notes.push_back("input line " + std::to_string(lineno) + ": " + e.what());
      outcome.exit_code = 3;
      return outcome;
    }
  }
  if (batches.empty()) {
    report.notes.push_back("input is empty: " + cfg.input_path);
    outcome.exit_code = 3;
    return outcome;
  }
  report.counts.input = static_cast<int>(batches.size());

  const fs::path out_dir = cfg.out_dir;
  const fs::path state_dir = out_dir / "state";
  fs::create_directories(state_dir);
  if (cfg.export_graphs) fs::create_directories(out_dir / "graphs");

  // Judge + filter, in input order. Judge calls are cheap relative to graph
  // construction; parallelism is spent on the per-trajectory stage below.
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const QueryBatch& batch = batches[i];
    const BatchJudgment j = judge_batch(batch, state_dir, *roles.judge);
    const std::size_t k = batch.trajectories.size();
    const bool kept = j.correct > 0 && 2 * j.correct <= k;
    if (!kept) {
      ++report.counts.filtered_out;
      report.notes.push_back("filtered: pass rate " + std::to_string(j.correct) + "/" +
                             std::to_string(k) + " for \"" + batch.record.question +
                             "\"");
      continue;
    }
    ++report.counts.kept_by_filter;
    for (std::size_t s = 0; s < k; ++s) {
      if (!j.verdicts[s]) continue;
      tasks.push_back(Task{batch.trajectories[s]});
      if (!cfg.forward_all_passing) break;
    }
  }
  report.counts.forwarded = static_cast<int>(tasks.size());

  // Per-trajectory stage under a bounded worker pool. Results are stored by
  // task index so artifact order never depends on scheduling.
  std::vector<TrajResult> results(tasks.size());
  std::atomic<std::size_t> cursor{0};
  std::atomic<int> resumed{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= tasks.size()) return;
      const Trajectory& t = tasks[i].trajectory;
      const std::string id = trajectory_id_for(t);
      const fs::path state_path = state_dir / ("traj-" + id + ".json");
      if (fs::exists(state_path)) {
        try {
          results[i] = parse_traj_state(read_file(state_path));
          ++resumed;
          continue;
        } catch (const std::exception&) {
          // unreadable state: reprocess
        }
      }
      results[i] = process_trajectory(t, cfg, roles, system_prompt);
      write_file(state_path, traj_state_json(results[i]).dump() + "\n");
    }
  };
  const int n_workers =
      std::max(1, std::min<int>(cfg.workers, static_cast<int>(tasks.size())));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
  for (std::thread& th : threads) th.join();
  report.resumed = resumed.load();

  // Aggregate in input order.
  std::string pruned_jsonl;
  std::string unpruned_jsonl;
  std::string diagnostics_jsonl;
  std::string seams_jsonl;
  std::vector<SFTExample> pruned_examples;
  std::vector<SFTExample> unpruned_examples;
  double input_rounds_sum = 0.0;
  double kept_rounds_sum = 0.0;
  int clipped = 0;
  int transport_failures = 0;

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const TrajResult& r = results[i];
    const Trajectory& original = tasks[i].trajectory;

    ordered_json diag;
    diag["trajectory_id"] = r.trajectory_id;
    ordered_json cands = ordered_json::array();
    for (const CandidateInfo& c : r.candidates) {
      cands.push_back(ordered_json{{"valid", c.valid}, {"steps", c.steps}});
    }
    diag["candidates"] = std::move(cands);
    diag["outcome"] = r.outcome;
    diag["final"] = r.final_steps ? ordered_json(*r.final_steps) : ordered_json(nullptr);
    diag["oracle"] = r.oracle ? ordered_json(*r.oracle) : ordered_json(nullptr);
    diag["d_sink"] = r.d_sink;
    diagnostics_jsonl += diag.dump() + "\n";

    for (const std::string& w : r.warnings) {
      report.notes.push_back(r.trajectory_id + ": " + w);
    }

    if (r.outcome == "failed") {
      ++report.counts.failed;
      if (r.transport_failure) ++transport_failures;
      report.notes.push_back(r.trajectory_id + " failed: " + r.failure);
      continue;
    }

    input_rounds_sum += r.input_tool_rounds;
    kept_rounds_sum += r.kept_tool_rounds;
    ++clipped;

    if (cfg.export_graphs) {
      for (std::size_t v = 0; v < r.graphs.size(); ++v) {
        write_file(out_dir / "graphs" /
                       (r.trajectory_id + ".run" + std::to_string(v) + ".json"),
                   r.graphs[v]);
      }
    }

    if (r.outcome == "accepted") ++report.counts.vote_accepted;
    if (r.outcome == "discarded") ++report.counts.vote_discarded;
    if (r.outcome == "unreachable") ++report.counts.unreachable;

    if (r.outcome == "accepted" && !r.pruned_line.empty()) {
      ++report.counts.exported_pruned;
      pruned_jsonl += r.pruned_line + "\n";
      const Trajectory pruned = parse_trajectory(r.pruned_line);
      pruned_examples.push_back(make_sft_example(pruned, "pruned", system_prompt));
      for (const ordered_json& sj : r.seams) {
        ordered_json entry;
        entry["trajectory_id"] = r.trajectory_id;
        for (const auto& [key, value] : sj.items()) entry[key] = value;
        seams_jsonl += entry.dump() + "\n";
      }
    } else {
      ++report.counts.exported_unpruned;
      unpruned_jsonl += serialize_trajectory(original) + "\n";
      unpruned_examples.push_back(
          make_sft_example(original, "unpruned", system_prompt));
    }
  }

  report.calls.extractor = counters.extractor.load();
  report.calls.rewriter = counters.rewriter.load();
  report.calls.scorer = counters.scorer.load();
  report.calls.judge = counters.judge.load();
  if (clipped > 0) {
    report.input_rounds_mean = input_rounds_sum / clipped;
    report.kept_rounds_mean = kept_rounds_sum / clipped;
    if (input_rounds_sum > 0) {
      report.round_reduction = 1.0 - kept_rounds_sum / input_rounds_sum;
    }
  }

  write_file(out_dir / "pruned.jsonl", pruned_jsonl);
  write_file(out_dir / "unpruned.jsonl", unpruned_jsonl);
  write_file(out_dir / "diagnostics.jsonl", diagnostics_jsonl);
  write_file(out_dir / "seams.jsonl", seams_jsonl);

  // Hybrid disjointness is guaranteed per run (one pool per query); overlap
  // can only come from duplicate queries in the input and is dropped loudly.
  std::set<std::string> pruned_ids;
  for (const SFTExample& e : pruned_examples) pruned_ids.insert(e.query_id);
  std::vector<SFTExample> hybrid_unpruned;
  for (const SFTExample& e : unpruned_examples) {
    if (pruned_ids.count(e.query_id)) {
      report.notes.push_back("hybrid: dropped unpruned query " + e.query_id +
                             " that also appears pruned");
    } else {
      hybrid_unpruned.push_back(e);
    }
  }
  try {
    write_file(out_dir / "sft_eff.jsonl", export_sft(pruned_examples, {}, DatasetMode::Eff));
  } catch (const EmptyPool&) {
    report.notes.push_back("sft_eff.jsonl skipped: pruned pool is empty");
  }
  try {
    write_file(out_dir / "sft_hybrid.jsonl",
               export_sft(pruned_examples, hybrid_unpruned, DatasetMode::Hybrid));
  } catch (const EmptyPool& e) {
    report.notes.push_back(std::string("sft_hybrid.jsonl skipped: ") + e.what());
  }

  report.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - started)
                       .count();
  write_file(out_dir / "report.json", report_json(report));
  write_file(out_dir / "report.txt", report_text(report));

  if (report.counts.forwarded > 0 &&
      report.counts.failed == report.counts.forwarded && transport_failures > 0) {
    outcome.exit_code = 4;
  } else if (report.counts.failed > 0) {
    outcome.exit_code = 1;
  } else {
    outcome.exit_code = 0;
  }
  return outcome;
}

int run_score(const std::string& records_path, int max_rounds,
              const std::string& out_dir, std::ostream& out) {
  std::ifstream in(records_path, std::ios::binary);
  if (!in) {
    out << "cannot open " << records_path << "\n";
    return 3;
  }
  std::vector<RunRecord> records;
  try {
    records = parse_run_records(in);
  } catch (const Error& e) {
    out << "parse error: " << e.what() << "\n";
    return 3;
  }
  BenchmarkSummary summary;
  HistogramBuckets buckets;
  try {
    summary = summarize(records, max_rounds);
    buckets = histogram(records, 1);
  } catch (const Error& e) {
    out << e.what() << "\n";
    return 3;
  }
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "summary.csv", summary_csv(summary));
  write_file(fs::path(out_dir) / "histogram.csv", histogram_csv(buckets));
  write_file(fs::path(out_dir) / "cumulative.csv", cumulative_csv(buckets));
  write_file(fs::path(out_dir) / "report.txt", render_report(summary));
  out << render_report(summary);
  return 0;
}

int run_graph(const std::string& traj_path, int runs, const PipelineConfig& cfg,
              const RoleSet& roles, std::ostream& out) {
  if (runs < 1) {
    out << "--runs must be >= 1\n";
    return 2;
  }
  std::ifstream in(traj_path, std::ios::binary);
  if (!in) {
    out << "cannot open " << traj_path << "\n";
    return 3;
  }
  std::vector<Trajectory> trajectories;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      trajectories.push_back(parse_trajectory(line));
    } catch (const Error& e) {
      out << "line " << lineno << ": " << e.what() << "\n";
      return 3;
    }
  }
  if (trajectories.empty()) {
    out << "input is empty: " << traj_path << "\n";
    return 3;
  }

  const fs::path out_dir = cfg.out_dir;
  fs::create_directories(out_dir / "graphs");
  std::string votes_jsonl;
  bool any_failed = false;
  for (const Trajectory& t : trajectories) {
    const std::string id = trajectory_id_for(t);
    ordered_json entry;
    entry["trajectory_id"] = id;
    try {
      const std::vector<ActionNode> actions =
          extract_action_nodes(t, *roles.extractor, false);
      std::vector<NecessarySet> sets;
      ordered_json cands = ordered_json::array();
      for (int v = 0; v < runs; ++v) {
        BuildOptions opts;
        opts.variant = v;
        opts.workspace_cap = cfg.workspace_cap;
        const StateGraph g = build_state_graph(t, actions, *roles.extractor, opts);
        write_file(out_dir / "graphs" / (id + ".run" + std::to_string(v) + ".json"),
                   export_graph(g));
        NecessarySet ns;
        try {
          ns = mine_mndag(g);
        } catch (const UnreachableSink&) {
          ns.valid = false;
        }
        cands.push_back(
            ordered_json{{"valid", ns.valid}, {"steps", to_steps(ns.action_steps)}});
        sets.push_back(std::move(ns));
      }
      entry["candidates"] = std::move(cands);
      if (runs == 3) {
        const VoteResult vote = majority_vote(sets.at(0), sets.at(1), sets.at(2));
        entry["accepted"] = vote.accepted;
        entry["final"] = vote.accepted ? ordered_json(to_steps(vote.final.action_steps))
                                       : ordered_json(nullptr);
      }
    } catch (const Error& e) {
      entry["failure"] = e.what();
      any_failed = true;
    }
    votes_jsonl += entry.dump() + "\n";
  }
  write_file(out_dir / "graph_votes.jsonl", votes_jsonl);
  out << "graphs for " << trajectories.size() << " trajectories under "
      << (out_dir / "graphs").string() << "\n";
  return any_failed ? 1 : 0;
}

int run_export(const std::string& out_dir, DatasetMode mode,
               const std::string& prompt_dir, std::ostream& out) {
  const PromptLibrary prompts =
      prompt_dir.empty() ? PromptLibrary::load_default() : PromptLibrary::load(prompt_dir);
  const std::string system_prompt = rtrim(prompts.agent_system);

  auto load_pool = [&](const char* name,
                       const char* provenance) -> std::vector<SFTExample> {
    std::vector<SFTExample> pool;
    const fs::path path = fs::path(out_dir) / name;
    std::ifstream in(path, std::ios::binary);
    if (!in) return pool;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        pool.push_back(
            make_sft_example(parse_trajectory(line), provenance, system_prompt));
      } catch (const Error& e) {
        throw SchemaError(path.string() + " line " + std::to_string(lineno) + ": " +
                          e.what());
      }
    }
    return pool;
  };

  try {
    const std::vector<SFTExample> pruned = load_pool("pruned.jsonl", "pruned");
    const std::vector<SFTExample> unpruned = load_pool("unpruned.jsonl", "unpruned");
    const std::string text = export_sft(pruned, unpruned, mode);
    const char* name = mode == DatasetMode::Eff ? "sft_eff.jsonl" : "sft_hybrid.jsonl";
    write_file(fs::path(out_dir) / name, text);
    const std::size_t n =
        pruned.size() + (mode == DatasetMode::Hybrid ? unpruned.size() : 0u);
    out << "wrote " << n << " examples to " << (fs::path(out_dir) / name).string()
        << "\n";
    return 0;
  } catch (const Error& e) {
    out << "export failed: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace clip
