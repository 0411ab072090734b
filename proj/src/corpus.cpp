#include "clip/corpus.hpp"

#include <cstdio>
#include <random>

#include "json.hpp"

namespace clip {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string two_digits(int k) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%02d", k);
  return buf;
}

struct PlannedRound {
  std::string kind;
  std::string payload;
  std::string thought;
  std::string observation;  // empty for the answer round
  bool keep = false;
};

struct QueryPlan {
  int number = 0;
  std::string case_id;     // "q07"
  std::string question;
  std::string gold;
  std::vector<PlannedRound> rounds;  // answer last
  std::set<int> kept_steps;          // 1-based, filled after ordering
};

std::string code_token(std::mt19937& rng) {
  return "C" + std::to_string(100 + rng() % 900);
}

// The uses clause is terminated by "::" so the prose after it is free-form.
std::string with_uses(const std::string& deps, const std::string& prose) {
  return "uses: " + deps + " :: " + prose;
}

enum class Special { None, NoRedundancy, Unreachable, VoteDiv2, VoteSplitAll };

QueryPlan plan_correct(int k, Special special) {
  std::mt19937 rng(static_cast<std::mt19937::result_type>(9000 + k));
  QueryPlan plan;
  plan.number = k;
  plan.case_id = "q" + two_digits(k);

  const int L1 = special == Special::NoRedundancy ? 3 : 2 + static_cast<int>(rng() % 2);
  const int L2 = special == Special::NoRedundancy ? 0 : 1 + static_cast<int>(rng() % 2);
  const int D = special == Special::NoRedundancy ? 0 : 1 + static_cast<int>(rng() % 3);
  const bool with_loop = special != Special::NoRedundancy;
  const int loop_m = with_loop ? 1 + static_cast<int>(rng() % L1) : 0;

  std::vector<std::string> g_facts, h_facts, x_facts;
  for (int i = 1; i <= L1; ++i) {
    g_facts.push_back("fact g" + std::to_string(i) + ": the stage " +
                      std::to_string(i) + " cipher for case " + plan.case_id +
                      " is " + code_token(rng));
  }
  for (int j = 1; j <= L2; ++j) {
    h_facts.push_back("fact h" + std::to_string(j) + ": registry entry " +
                      std::to_string(j) + " of case " + plan.case_id +
                      " lists branch " + code_token(rng));
  }
  for (int j = 1; j <= D; ++j) {
    x_facts.push_back("fact x" + std::to_string(j) + ": side probe " +
                      std::to_string(j) + " for case " + plan.case_id +
                      " found no verified lead");
  }

  std::vector<PlannedRound> b1, b2, dead;
  for (int i = 1; i <= L1; ++i) {
    PlannedRound r;
    r.kind = (i % 2 == 1) ? "search" : "visit";
    r.payload = (i % 2 == 1)
                    ? "stage " + std::to_string(i) + " cipher trail " + plan.case_id
                    : "https://archive.test/" + plan.case_id + "/stage" +
                          std::to_string(i);
    const std::string dep = i == 1 ? "q" : "g" + std::to_string(i - 1);
    r.thought = with_uses(dep, "The stage " + std::to_string(i) +
                                   " lead should pin down the next cipher element.");
    r.observation = "Results for stage " + std::to_string(i) + " of " +
                    plan.case_id + ":\n" + g_facts[static_cast<std::size_t>(i - 1)];
    if (rng() % 2 == 0) {
      r.observation += "\nfact n" + std::to_string(i) + ": the index page listed " +
                       std::to_string(2 + rng() % 7) + " unrelated items";
    }
    r.observation += "\nend of results";
    r.keep = true;
    b1.push_back(std::move(r));
  }
  for (int j = 1; j <= L2; ++j) {
    PlannedRound r;
    r.kind = (j == 2) ? "python" : "search";
    r.payload = (j == 2)
                    ? "print(check_registry('" + plan.case_id + "'))"
                    : "registry filing for " + plan.case_id;
    const std::string dep = j == 1 ? "q" : "h" + std::to_string(j - 1);
    r.thought = with_uses(dep, "The registry side of " + plan.case_id +
                                   " still needs confirmation.");
    r.observation = "Registry lookup " + std::to_string(j) + " for " + plan.case_id +
                    ":\n" + h_facts[static_cast<std::size_t>(j - 1)] +
                    "\nend of results";
    r.keep = true;
    b2.push_back(std::move(r));
  }
  for (int j = 1; j <= D; ++j) {
    PlannedRound r;
    r.kind = "search";
    r.payload = "alternate angle " + std::to_string(j) + " for " + plan.case_id;
    const std::string dep = j == 1 ? "q" : "x" + std::to_string(j - 1);
    r.thought = with_uses(dep, "Worth checking a side angle before committing.");
    r.observation = "Side results " + std::to_string(j) + " for " + plan.case_id +
                    ":\n" + x_facts[static_cast<std::size_t>(j - 1)] +
                    "\nend of results";
    dead.push_back(std::move(r));
  }
  PlannedRound loop_round;
  if (with_loop) {
    loop_round.kind = "search";
    loop_round.payload =
        "recheck stage " + std::to_string(loop_m) + " cipher " + plan.case_id;
    const std::string dep = loop_m == 1 ? "q" : "g" + std::to_string(loop_m - 1);
    loop_round.thought =
        with_uses(dep, "Re-running the stage " + std::to_string(loop_m) +
                           " lookup to be certain nothing was missed.");
    loop_round.observation = "Revisited stage " + std::to_string(loop_m) + " of " +
                             plan.case_id + ":\n" +
                             g_facts[static_cast<std::size_t>(loop_m - 1)] +
                             "\nend of results";
  }

  // Interleave: intra-branch order preserved, the loop round only after its
  // original, dead rounds anywhere.
  std::size_t i1 = 0, i2 = 0, id = 0;
  bool loop_pending = with_loop;
  while (i1 < b1.size() || i2 < b2.size() || id < dead.size() || loop_pending) {
    std::vector<int> options;
    if (i1 < b1.size()) options.push_back(0);
    if (i2 < b2.size()) options.push_back(1);
    if (id < dead.size()) options.push_back(2);
    if (loop_pending && static_cast<int>(i1) >= loop_m) options.push_back(3);
    const int pick = options[rng() % options.size()];
    PlannedRound r;
    switch (pick) {
      case 0: r = std::move(b1[i1++]); break;
      case 1: r = std::move(b2[i2++]); break;
      case 2: r = std::move(dead[id++]); break;
      default:
        r = std::move(loop_round);
        loop_pending = false;
        break;
    }
    plan.rounds.push_back(std::move(r));
    if (plan.rounds.back().keep) {
      plan.kept_steps.insert(static_cast<int>(plan.rounds.size()));
    }
  }

  plan.gold = "final code " + code_token(rng) + "/" + plan.case_id;
  std::string answer_deps = "g" + std::to_string(L1);
  if (L2 > 0) answer_deps += ", h" + std::to_string(L2);
  PlannedRound answer;
  answer.kind = "answer";
  answer.payload = plan.gold;
  answer.thought =
      special == Special::Unreachable
          ? "All required elements are confirmed, answering now."
          : with_uses(answer_deps, "All required elements are confirmed, answering now.");
  answer.keep = true;
  plan.rounds.push_back(std::move(answer));
  plan.kept_steps.insert(static_cast<int>(plan.rounds.size()));

  plan.question = "Trace the delivery chain for case " + plan.case_id +
                  " and report the final dispatch code.";
  if (special == Special::VoteDiv2) plan.question += " [vote:div2]";
  if (special == Special::VoteSplitAll) plan.question += " [vote:splitall]";
  return plan;
}

Trajectory to_trajectory(const QueryPlan& plan, const std::string& run_id,
                         std::int64_t seed) {
  Trajectory t;
  t.query = plan.question;
  t.meta.dataset = "synthetic";
  t.meta.run_id = run_id;
  t.meta.seed = seed;
  for (std::size_t i = 0; i < plan.rounds.size(); ++i) {
    const PlannedRound& pr = plan.rounds[i];
    Round r;
    r.index = static_cast<int>(i) + 1;
    r.thought = pr.thought;
    r.action = ToolAction::make(pr.kind, pr.payload);
    if (pr.kind != "answer") r.observation = pr.observation;
    t.rounds.push_back(std::move(r));
  }
  validate_trajectory(t);
  return t;
}

Trajectory make_incorrect(const QueryPlan& plan, int sample, std::int64_t seed) {
  Trajectory t;
  t.query = plan.question;
  t.meta.dataset = "synthetic";
  t.meta.run_id = plan.case_id + "-s" + std::to_string(sample);
  t.meta.seed = seed;

  Round r1;
  r1.index = 1;
  r1.thought = "Scanning broadly for any lead on " + plan.case_id + ".";
  r1.action = ToolAction::make("search", "any trace of " + plan.case_id);
  r1.observation = "Broad scan for " + plan.case_id + ":\nfact w1: preliminary scan " +
                   std::to_string(sample) + " for " + plan.case_id +
                   " was inconclusive\nend of results";
  Round r2;
  r2.index = 2;
  r2.thought = with_uses("w1", "Following the only visible lead.");
  r2.action =
      ToolAction::make("visit", "https://archive.test/" + plan.case_id + "/misc");
  r2.observation = "Archive page for " + plan.case_id + ":\nfact w2: the archive " +
                   "page for " + plan.case_id +
                   " lacks the needed entry\nend of results";
  Round r3;
  r3.index = 3;
  r3.thought = with_uses("w2", "Conceding with the best available guess.");
  r3.action = ToolAction::make("answer", "no conclusive code found");
  t.rounds = {std::move(r1), std::move(r2), std::move(r3)};
  validate_trajectory(t);
  return t;
}

}  // namespace

Corpus make_synthetic_corpus() {
  Corpus corpus;
  for (int k = 1; k <= 22; ++k) {
    Special special = Special::None;
    if (k == 17) special = Special::NoRedundancy;
    if (k == 18) special = Special::Unreachable;
    if (k == 19) special = Special::VoteDiv2;
    if (k == 20) special = Special::VoteSplitAll;

    QueryPlan plan = plan_correct(k, special);
    CorpusQuery q;
    q.record = QARecord{plan.question, plan.gold, "synthetic"};

    const bool filtered_zero = k == 21;       // PR = 0
    const bool filtered_high = k == 22;       // PR = 0.75
    for (int sample = 0; sample < 4; ++sample) {
      const std::int64_t seed = 9000 + k * 10 + sample;
      bool correct;
      if (filtered_zero) {
        correct = false;
      } else if (filtered_high) {
        correct = sample < 3;
      } else {
        correct = sample == 0;
      }
      if (correct) {
        q.trajectories.push_back(
            to_trajectory(plan, plan.case_id + "-s" + std::to_string(sample), seed));
      } else {
        q.trajectories.push_back(make_incorrect(plan, sample, seed));
      }
      q.correct.push_back(correct);
    }

    if (filtered_zero || filtered_high) {
      q.forwarded = false;
      q.outcome = "filtered";
      q.expected_pool = "none";
    } else {
      q.forwarded = true;
      q.correct_sample = 0;
      switch (special) {
        case Special::Unreachable:
          q.outcome = "unreachable";
          q.expected_pool = "unpruned";
          break;
        case Special::VoteSplitAll:
          q.outcome = "discarded";
          q.expected_pool = "unpruned";
          break;
        case Special::NoRedundancy:
          q.outcome = "accepted";
          q.expected_pool = "unpruned";  // full set, nothing pruned
          q.expected_kept = plan.kept_steps;
          break;
        default:
          q.outcome = "accepted";
          q.expected_pool = "pruned";
          q.expected_kept = plan.kept_steps;
          break;
      }
    }
    corpus.queries.push_back(std::move(q));
  }
  return corpus;
}

std::string corpus_jsonl(const Corpus& corpus) {
  std::string out;
  for (const CorpusQuery& q : corpus.queries) {
    QueryBatch batch;
    batch.record = q.record;
    batch.trajectories = q.trajectories;
    out += serialize_query_batch(batch);
    out += '\n';
  }
  return out;
}

std::string corpus_truth_json(const Corpus& corpus) {
  ordered_json doc;
  ordered_json queries = ordered_json::array();
  for (const CorpusQuery& q : corpus.queries) {
    ordered_json qj;
    qj["question"] = q.record.question;
    qj["gold_answer"] = q.record.gold_answer;
    qj["forwarded"] = q.forwarded;
    qj["outcome"] = q.outcome;
    qj["expected_pool"] = q.expected_pool;
    if (q.expected_kept) {
      qj["expected_kept"] = *q.expected_kept;
    } else {
      qj["expected_kept"] = nullptr;
    }
    qj["correct_sample"] = q.correct_sample;
    ordered_json flags = ordered_json::array();
    for (const bool c : q.correct) flags.push_back(c);
    qj["correct"] = std::move(flags);
    qj["total_rounds"] =
        q.correct_sample >= 0
            ? static_cast<int>(
                  q.trajectories[static_cast<std::size_t>(q.correct_sample)].rounds.size())
            : 0;
    queries.push_back(std::move(qj));
  }
  doc["queries"] = std::move(queries);
  return doc.dump(2) + "\n";
}

}  // namespace clip
