#include <string>

#include "doctest.h"

#include "clip/config.hpp"
#include "test_support.hpp"

using namespace clip;

namespace {

const char* kFullSample = R"(# pipeline settings
input = "data/batches.jsonl"   # judged offline
out = "runs/august"
k = 8
pr_lower = 0.0
pr_upper = 0.5
vote_runs = 3
rewrite_candidates = 3
max_rounds = 100
workers = 6
mock = false
export_graphs = true
workspace_cap = 12
forward_all_passing = false
screen_hard_fail = true
score_hard_fail = false
prompt_dir = "assets/prompts"

[roles]
extractor_temperature = 0.2
judge_temperature = 0.1
rewriter_temperature = 0.9

[endpoints.extractor]
base_url = "http://extract.local:8000/v1"
model = "extract-32b"
api_key_env = "EXTRACT_KEY"
max_retries = 5
timeout_s = 30.5
max_inflight = 16

[endpoints.rewriter]
base_url = "http://rewrite.local:8000/v1"
model = "rewrite-7b"

[endpoints.scorer]
base_url = "http://score.local:8000/v1"
model = "score-7b"

[endpoints.judge]
base_url = "http://judge.local:8000/v1"
model = "judge-72b"
)";

}  // namespace

TEST_CASE("a full config parses into the expected fields") {
  const PipelineConfig cfg = parse_config(kFullSample);
  CHECK(cfg.input_path == "data/batches.jsonl");
  CHECK(cfg.out_dir == "runs/august");
  CHECK(cfg.k == 8);
  CHECK(cfg.pr_lower == doctest::Approx(0.0));
  CHECK(cfg.pr_upper == doctest::Approx(0.5));
  CHECK(cfg.max_rounds == 100);
  CHECK(cfg.workers == 6);
  CHECK_FALSE(cfg.mock_mode);
  CHECK(cfg.export_graphs);
  CHECK(cfg.workspace_cap == 12);
  CHECK_FALSE(cfg.forward_all_passing);
  CHECK(cfg.screen_hard_fail);
  CHECK_FALSE(cfg.score_hard_fail);
  CHECK(cfg.prompt_dir == "assets/prompts");
  CHECK(cfg.role_options.extractor_temperature == doctest::Approx(0.2));
  CHECK(cfg.role_options.judge_temperature == doctest::Approx(0.1));
  CHECK(cfg.role_options.rewriter_temperature == doctest::Approx(0.9));
  CHECK(cfg.extractor.base_url == "http://extract.local:8000/v1");
  CHECK(cfg.extractor.model_name == "extract-32b");
  CHECK(cfg.extractor.api_key_env == "EXTRACT_KEY");
  CHECK(cfg.extractor.max_retries == 5);
  CHECK(cfg.extractor.timeout_s == doctest::Approx(30.5));
  CHECK(cfg.extractor.max_inflight == 16);
  CHECK(cfg.rewriter.model_name == "rewrite-7b");
  CHECK(cfg.scorer.base_url == "http://score.local:8000/v1");
  CHECK(cfg.judge.model_name == "judge-72b");
  // Untouched endpoint fields keep their defaults.
  CHECK(cfg.rewriter.max_retries == 3);
  CHECK(cfg.rewriter.max_inflight == 4);
}

TEST_CASE("an empty config is all defaults") {
  const PipelineConfig cfg = parse_config("");
  CHECK(cfg.k == 4);
  CHECK(cfg.out_dir == "out");
  CHECK(cfg.vote_runs == 3);
  CHECK(cfg.workers == 4);
  CHECK(cfg.forward_all_passing);
  CHECK(cfg.workspace_cap == 0);
}

TEST_CASE("comments and quoted hashes coexist") {
  const PipelineConfig cfg = parse_config(
      "out = \"with # inside\"  # trailing comment\n# whole-line comment\n");
  CHECK(cfg.out_dir == "with # inside");
}

TEST_CASE("string escapes are decoded") {
  const PipelineConfig cfg = parse_config(R"(out = "a\tb\nc\"d\\e")");
  CHECK(cfg.out_dir == "a\tb\nc\"d\\e");
  CHECK_THROWS_WITH_AS(parse_config(R"(out = "bad \x escape")"),
                       doctest::Contains("unsupported escape"), ConfigError);
}

TEST_CASE("unknown keys and sections name the offending line") {
  CHECK_THROWS_WITH_AS(parse_config("k = 4\nshiny = true\n"),
                       doctest::Contains("line 2"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[mystery]\nk = 4\n"),
                       doctest::Contains("unknown section"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[roles]\nvolume = 11\n"),
                       doctest::Contains("unknown roles key"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[endpoints.scorer]\nport = 80\n"),
                       doctest::Contains("unknown endpoint key"), ConfigError);
}

TEST_CASE("syntax errors are rejected with line numbers") {
  CHECK_THROWS_WITH_AS(parse_config("k\n"), doctest::Contains("key = value"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[endpoints.judge\n"),
                       doctest::Contains("unterminated section"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("k = four\n"),
                       doctest::Contains("expected an integer"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("pr_upper = half\n"),
                       doctest::Contains("expected a number"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("mock = yes\n"),
                       doctest::Contains("true or false"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("out = unquoted\n"),
                       doctest::Contains("quoted string"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("k = 4extra\n"),
                       doctest::Contains("expected an integer"), ConfigError);
}

TEST_CASE("invariants are enforced after parsing") {
  CHECK_THROWS_WITH_AS(parse_config("vote_runs = 5\n"),
                       doctest::Contains("2-of-3"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("rewrite_candidates = 2\n"),
                       doctest::Contains("fixed at 3"), ConfigError);
  CHECK_THROWS_AS(parse_config("k = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("workers = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("max_rounds = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("pr_lower = 0.6\npr_upper = 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("pr_lower = -0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("pr_upper = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[endpoints.judge]\nmax_retries = -1\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config("[endpoints.judge]\nmax_inflight = 0\n"),
                  ConfigError);
  CHECK_NOTHROW(parse_config("pr_lower = 0.0\npr_upper = 1.0\n"));
}

TEST_CASE("load_config reads files and reports missing ones") {
  const auto dir = cliptest::fresh_dir("config");
  const auto path = dir / "pipeline.toml";
  cliptest::spit(path, "k = 2\nout = \"elsewhere\"\n");
  const PipelineConfig cfg = load_config(path.string());
  CHECK(cfg.k == 2);
  CHECK(cfg.out_dir == "elsewhere");
  CHECK_THROWS_WITH_AS(load_config((dir / "missing.toml").string()),
                       doctest::Contains("cannot open"), ConfigError);
}
