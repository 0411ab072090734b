#include <memory>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"

#include "clip/rewriter.hpp"
#include "clip/roles.hpp"
#include "test_support.hpp"

using namespace clip;

namespace {

const std::string kSystem = "You are a careful research agent.";

NecessarySet keep_set(std::set<int> steps) {
  NecessarySet n;
  n.action_steps = std::move(steps);
  return n;
}

class ScriptedScorer : public ScorerRole {
public:
  explicit ScriptedScorer(std::vector<double> nlls) : nlls_(std::move(nlls)) {}
  ScoreResult score(const std::string& prefix, const std::string&) override {
    prefixes.push_back(prefix);
    const double v = nlls_.at(cursor_ % nlls_.size());
    ++cursor_;
    return ScoreResult{v, 5};
  }

  std::vector<std::string> prefixes;

private:
  std::vector<double> nlls_;
  std::size_t cursor_ = 0;
};

class NoLogprobScorer : public ScorerRole {
public:
  ScoreResult score(const std::string&, const std::string&) override {
    ++calls;
    throw UnsupportedEndpoint("endpoint did not return token logprobs");
  }
  int calls = 0;
};

// Every candidate leaks a long verbatim span from a pruned observation.
class LeakyRewriter : public RewriterRole {
public:
  explicit LeakyRewriter(std::string leak) : leak_(std::move(leak)) {}
  std::string rewrite(const RewriteContext& ctx) override {
    return "recalling " + leak_ + " attempt " + std::to_string(ctx.candidate_index);
  }

private:
  std::string leak_;
};

class MarkerRewriter : public RewriterRole {
public:
  std::string rewrite(const RewriteContext& ctx) override {
    histories.push_back(ctx.history);
    const int seam = calls++ / 3;
    return "installed marker " + std::to_string(seam) + " for this seam";
  }

  std::vector<std::string> histories;
  int calls = 0;
};

}  // namespace

TEST_CASE("a gap-free kept set has no seams") {
  const Trajectory t = cliptest::mock_chain_trajectory(2);  // T = 3
  const PrunedTrajectory p = assemble_pruned(t, keep_set({1, 2, 3}));
  CHECK(p.seams.empty());
  REQUIRE(p.kept.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(p.kept[i].first == static_cast<int>(i) + 1);
    CHECK(p.kept[i].second == t.rounds[i]);
  }
}

TEST_CASE("seams appear exactly after removed rounds") {
  const Trajectory t = cliptest::mock_chain_trajectory(5);  // T = 6
  const PrunedTrajectory p = assemble_pruned(t, keep_set({1, 4, 6}));
  REQUIRE(p.kept.size() == 3);
  CHECK(p.kept[0].first == 1);
  CHECK(p.kept[1].first == 4);
  CHECK(p.kept[2].first == 6);
  CHECK(p.seams == std::set<std::size_t>{1, 2});

  const Trajectory u = cliptest::mock_chain_trajectory(4);  // T = 5
  const PrunedTrajectory q = assemble_pruned(u, keep_set({3, 5}));
  CHECK(q.seams == std::set<std::size_t>{0, 1});  // leading gap counts
}

TEST_CASE("dropping the answer step is refused") {
  const Trajectory t = cliptest::mock_chain_trajectory(3);
  CHECK_THROWS_AS(assemble_pruned(t, keep_set({1, 2, 3})), MissingAnswer);
  CHECK_THROWS_AS(assemble_pruned(t, keep_set({1, 9, 4})), StructureError);
}

TEST_CASE("no seams means no role calls and an unchanged result") {
  const Trajectory t = cliptest::mock_chain_trajectory(2);
  const PrunedTrajectory p = assemble_pruned(t, keep_set({1, 2, 3}));
  MockRewriter rewriter;
  MockScorer scorer;
  const PrunedTrajectory out = rewrite_seams(p, rewriter, scorer, kSystem);
  CHECK(rewriter.calls() == 0);
  CHECK(scorer.calls() == 0);
  CHECK(out.rewritten.empty());
  CHECK(out.kept == p.kept);
}

TEST_CASE("the lowest mean NLL candidate wins") {
  const Trajectory t = cliptest::mock_chain_trajectory(3);
  const PrunedTrajectory p = assemble_pruned(t, keep_set({1, 3, 4}));
  REQUIRE(p.seams == std::set<std::size_t>{1});

  MockRewriter rewriter;
  ScriptedScorer scorer({1.2, 0.7, 0.9});
  std::vector<SeamRecord> records;
  const PrunedTrajectory out =
      rewrite_seams(p, rewriter, scorer, kSystem, {}, &records);

  CHECK(out.rewritten == std::set<std::size_t>{1});
  CHECK(out.kept[1].second.thought ==
        "Everything required is in hand; next I run search with stage 3");
  REQUIRE(records.size() == 1);
  CHECK(records[0].position == 1);
  CHECK(records[0].original_thought == t.rounds[2].thought);
  CHECK(records[0].set.winner == 1);
  CHECK(records[0].set.candidates[0].score->avg_nll == doctest::Approx(1.2));
  CHECK(rewriter.calls() == 3);
}

TEST_CASE("score ties keep the earliest candidate") {
  const Trajectory t = cliptest::mock_chain_trajectory(3);
  const PrunedTrajectory p = assemble_pruned(t, keep_set({1, 3, 4}));
  MockRewriter rewriter;
  ScriptedScorer scorer({0.7, 0.7, 1.0});
  const PrunedTrajectory out = rewrite_seams(p, rewriter, scorer, kSystem);
  CHECK(out.kept[1].second.thought.rfind("The kept evidence", 0) == 0);
}

TEST_CASE("the scoring prefix is the chat rendering of the kept dialogue") {
  const Trajectory t = cliptest::mock_chain_trajectory(3);
  const PrunedTrajectory p = assemble_pruned(t, keep_set({1, 3, 4}));
  MockRewriter rewriter;
  ScriptedScorer scorer({0.5});
  rewrite_seams(p, rewriter, scorer, kSystem);

  REQUIRE(scorer.prefixes.size() == 3);
  const std::string expected =
      render_chatml(chat_messages(kSystem, t.query, {t.rounds[0]})) +
      "<|im_start|>assistant\n<think>";
  CHECK(scorer.prefixes[0] == expected);
  CHECK(scorer.prefixes[1] == expected);
  CHECK(scorer.prefixes[2] == expected);
}

TEST_CASE("contains_span needs the full token run") {
  const std::string source =
      "alpha beta gamma delta epsilon zeta eta theta iota kappa";
  const std::string seven = "I recall beta gamma delta epsilon zeta eta theta.";
  const std::string eight = "I recall beta gamma delta epsilon zeta eta theta iota.";
  CHECK_FALSE(contains_span(seven, source, 8));
  CHECK(contains_span(seven, source, 7));
  CHECK(contains_span(eight, source, 8));
  CHECK_FALSE(contains_span("nothing shared at all", source, 2));
  CHECK_FALSE(contains_span("", source, 1));
}

TEST_CASE("candidates that leak pruned observations are screened out") {
  Trajectory t;
  t.query = "screen me";
  t.meta = {"test", "screen", 1};
  const std::string long_obs =
      "alpha beta gamma delta epsilon zeta eta theta iota kappa";
  t.rounds.push_back(cliptest::make_round(1, "uses: q :: start", "search", "first",
                                          "fact a: opening value"));
  t.rounds.push_back(
      cliptest::make_round(2, "uses: a :: dig", "visit", "second", long_obs));
  t.rounds.push_back(cliptest::make_round(3, "uses: a :: conclude", "answer",
                                          "closing value"));
  validate_trajectory(t);

  const PrunedTrajectory p = assemble_pruned(t, keep_set({1, 3}));
  REQUIRE(p.seams == std::set<std::size_t>{1});
  LeakyRewriter rewriter("alpha beta gamma delta epsilon zeta eta theta");
  MockScorer scorer;

  SUBCASE("soft mode keeps the original thought and warns") {
    std::vector<SeamRecord> records;
    const PrunedTrajectory out =
        rewrite_seams(p, rewriter, scorer, kSystem, {}, &records);
    CHECK(out.rewritten.empty());
    CHECK(out.kept[1].second.thought == t.rounds[2].thought);
    REQUIRE(out.warnings.size() == 1);
    CHECK(out.warnings[0].find("disqualified") != std::string::npos);
    CHECK(scorer.calls() == 0);  // nothing left to score
    REQUIRE(records.size() == 1);
    CHECK(records[0].set.winner == -1);
    for (const Candidate& c : records[0].set.candidates) CHECK(c.screened_out);
  }

  SUBCASE("hard mode raises MalformedResponse naming the step") {
    RewriteOptions opts;
    opts.screen_hard_fail = true;
    try {
      rewrite_seams(p, rewriter, scorer, kSystem, opts);
      FAIL("expected MalformedResponse");
    } catch (const MalformedResponse& e) {
      CHECK(e.step == 3);
    }
  }
}

TEST_CASE("a scorer without logprobs falls back to the first candidate") {
  const Trajectory t = cliptest::mock_chain_trajectory(3);
  const PrunedTrajectory p = assemble_pruned(t, keep_set({1, 3, 4}));
  MockRewriter rewriter;
  NoLogprobScorer scorer;

  SUBCASE("soft mode warns") {
    const PrunedTrajectory out = rewrite_seams(p, rewriter, scorer, kSystem);
    CHECK(out.rewritten == std::set<std::size_t>{1});
    CHECK(out.kept[1].second.thought.rfind("The kept evidence", 0) == 0);
    REQUIRE(out.warnings.size() == 1);
    CHECK(out.warnings[0].find("lacks logprobs") != std::string::npos);
    CHECK(scorer.calls == 1);  // gives up after the first failure
  }

  SUBCASE("hard mode propagates the failure") {
    RewriteOptions opts;
    opts.score_hard_fail = true;
    CHECK_THROWS_AS(rewrite_seams(p, rewriter, scorer, kSystem, opts),
                    UnsupportedEndpoint);
  }
}

TEST_CASE("only seam thoughts change; actions and observations never do") {
  const Trajectory t = cliptest::mock_chain_trajectory(5);
  const PrunedTrajectory p = assemble_pruned(t, keep_set({1, 2, 4, 6}));
  REQUIRE(p.seams == std::set<std::size_t>{2, 3});
  MockRewriter rewriter;
  MockScorer scorer;
  const PrunedTrajectory out = rewrite_seams(p, rewriter, scorer, kSystem);

  CHECK(out.rewritten == out.seams);
  for (std::size_t i = 0; i < out.kept.size(); ++i) {
    const Round& before = p.kept[i].second;
    const Round& after = out.kept[i].second;
    CHECK(after.action == before.action);
    CHECK(after.observation == before.observation);
    if (out.seams.count(i)) {
      CHECK(after.thought != before.thought);
    } else {
      CHECK(after.thought == before.thought);
    }
  }
}

TEST_CASE("later seams are conditioned on earlier rewrites") {
  const Trajectory t = cliptest::mock_chain_trajectory(4);  // T = 5
  const PrunedTrajectory p = assemble_pruned(t, keep_set({1, 3, 5}));
  REQUIRE(p.seams == std::set<std::size_t>{1, 2});
  MarkerRewriter rewriter;
  MockScorer scorer;
  const PrunedTrajectory out = rewrite_seams(p, rewriter, scorer, kSystem);

  CHECK(out.kept[1].second.thought == "installed marker 0 for this seam");
  CHECK(out.kept[2].second.thought == "installed marker 1 for this seam");
  REQUIRE(rewriter.histories.size() == 6);
  // The second seam's context must already carry the first seam's rewrite.
  CHECK(rewriter.histories[3].find("installed marker 0") != std::string::npos);
  CHECK(rewriter.histories[3].find(t.rounds[2].thought) == std::string::npos);
}

TEST_CASE("to_trajectory renumbers kept rounds contiguously") {
  const Trajectory t = cliptest::mock_chain_trajectory(5);
  const PrunedTrajectory p = assemble_pruned(t, keep_set({2, 4, 6}));
  const Trajectory out = to_trajectory(p);
  REQUIRE(out.total_steps() == 3);
  CHECK(out.rounds[0].index == 1);
  CHECK(out.rounds[1].index == 2);
  CHECK(out.rounds[2].index == 3);
  CHECK(out.rounds[0].action == t.rounds[1].action);
  CHECK(out.rounds[2].action.kind == ToolKind::Answer);
  CHECK(out.query == t.query);
}

TEST_CASE("chat messages follow the agent format") {
  const Trajectory t = cliptest::mock_chain_trajectory(2);
  const std::vector<SftMessage> msgs = chat_messages(kSystem, t.query, t.rounds);
  REQUIRE(msgs.size() == 7);  // system, user, (assistant, tool) x2, assistant
  CHECK(msgs[0].role == SftRole::System);
  CHECK(msgs[1].role == SftRole::User);
  CHECK(msgs[1].content == t.query);
  CHECK(msgs[2].role == SftRole::Assistant);
  CHECK(msgs[2].content ==
        "<think>" + t.rounds[0].thought + "</think>\n<tool_call name=\"search\">" +
            t.rounds[0].action.payload + "</tool_call>");
  CHECK(msgs[3].role == SftRole::Tool);
  CHECK(msgs[3].content == *t.rounds[0].observation);
  CHECK(msgs[6].role == SftRole::Assistant);
  CHECK(msgs[6].content ==
        "<think>" + t.rounds[2].thought + "</think>\n<answer>final stage value</answer>");
}

TEST_CASE("chatml rendering is exact") {
  const std::vector<SftMessage> msgs = {{SftRole::System, "sys"},
                                        {SftRole::User, "q"}};
  CHECK(render_chatml(msgs) ==
        "<|im_start|>system\nsys<|im_end|>\n<|im_start|>user\nq<|im_end|>\n");
}

TEST_CASE("query ids are sixteen hex digits") {
  const std::string id = query_id_for("some question");
  CHECK(id.size() == 16);
  CHECK(id.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(query_id_for("some question") == id);
  CHECK(query_id_for("another question") != id);
}

TEST_CASE("sft examples round-trip byte-identically") {
  const Trajectory t = cliptest::mock_chain_trajectory(3);
  const SFTExample example = make_sft_example(t, "pruned", kSystem);
  validate_sft_example(example);
  const std::string line = serialize_sft_example(example);
  const SFTExample back = parse_sft_example(line);
  CHECK(serialize_sft_example(back) == line);
  CHECK(back.provenance == "pruned");
  CHECK(back.query_id == query_id_for(t.query));
  CHECK(back.messages == example.messages);
}

TEST_CASE("sft validation rejects malformed chats") {
  const Trajectory t = cliptest::mock_chain_trajectory(2);
  const SFTExample good = make_sft_example(t, "pruned", kSystem);

  SFTExample bad_provenance = good;
  bad_provenance.provenance = "golden";
  CHECK_THROWS_AS(validate_sft_example(bad_provenance), StructureError);

  SFTExample no_think = good;
  no_think.messages[2].content = "<tool_call name=\"search\">x</tool_call>";
  CHECK_THROWS_AS(validate_sft_example(no_think), StructureError);

  SFTExample no_call = good;
  no_call.messages[2].content = "<think>t</think>\njust prose";
  CHECK_THROWS_AS(validate_sft_example(no_call), StructureError);

  SFTExample no_answer = good;
  no_answer.messages.back().content =
      "<think>t</think>\n<tool_call name=\"search\">x</tool_call>";
  CHECK_THROWS_AS(validate_sft_example(no_answer), StructureError);

  SFTExample swapped = good;
  std::swap(swapped.messages[0], swapped.messages[1]);
  CHECK_THROWS_AS(validate_sft_example(swapped), StructureError);

  SFTExample broken_alternation = good;
  broken_alternation.messages[3].role = SftRole::Assistant;
  CHECK_THROWS_AS(validate_sft_example(broken_alternation), StructureError);

  SFTExample ends_with_tool = good;
  ends_with_tool.messages.push_back({SftRole::Tool, "trailing"});
  CHECK_THROWS_AS(validate_sft_example(ends_with_tool), StructureError);

  CHECK_THROWS_AS(parse_sft_example("not json"), SchemaError);
  CHECK_THROWS_AS(
      parse_sft_example(
          R"({"provenance":"pruned","query_id":"x","messages":[{"role":"narrator","content":"c"}]})"),
      SchemaError);
}

TEST_CASE("dataset export respects mode, order and disjointness") {
  std::vector<SFTExample> pruned, unpruned;
  for (int i = 0; i < 3; ++i) {
    pruned.push_back(make_sft_example(
        cliptest::mock_chain_trajectory(2, " p" + std::to_string(i)), "pruned",
        kSystem));
  }
  for (int i = 0; i < 2; ++i) {
    unpruned.push_back(make_sft_example(
        cliptest::mock_chain_trajectory(3, " u" + std::to_string(i)), "unpruned",
        kSystem));
  }

  const std::string eff = export_sft(pruned, unpruned, DatasetMode::Eff);
  CHECK(cliptest::line_count(eff) == 3);

  const std::string hybrid = export_sft(pruned, unpruned, DatasetMode::Hybrid);
  CHECK(cliptest::line_count(hybrid) == 5);
  CHECK(hybrid.rfind(serialize_sft_example(pruned[0]) + "\n", 0) == 0);
  const std::size_t first_unpruned = hybrid.find("\"provenance\":\"unpruned\"");
  const std::size_t last_pruned = hybrid.rfind("\"provenance\":\"pruned\"");
  REQUIRE(first_unpruned != std::string::npos);
  REQUIRE(last_pruned != std::string::npos);
  CHECK(last_pruned < first_unpruned);  // pruned block comes first

  CHECK_THROWS_AS(export_sft({}, unpruned, DatasetMode::Eff), EmptyPool);
  CHECK_THROWS_AS(export_sft(pruned, {}, DatasetMode::Hybrid), EmptyPool);
  CHECK(export_sft(pruned, {}, DatasetMode::Eff) == eff);

  std::vector<SFTExample> overlapping = unpruned;
  overlapping.push_back(pruned[1]);
  overlapping.back().provenance = "unpruned";
  CHECK_THROWS_AS(export_sft(pruned, overlapping, DatasetMode::Hybrid),
                  QueryOverlap);

  std::vector<SFTExample> mislabeled = pruned;
  mislabeled[0].provenance = "unpruned";
  CHECK_THROWS_AS(export_sft(mislabeled, unpruned, DatasetMode::Eff),
                  StructureError);
}
