#pragma once

#include <string>

#include "clip/gateway.hpp"
#include "clip/roles.hpp"

namespace clip {

struct PipelineConfig {
  std::string input_path;
  std::string out_dir = "out";

  int k = 4;
  double pr_lower = 0.0;  // exclusive
  double pr_upper = 0.5;  // inclusive
  int vote_runs = 3;
  int rewrite_candidates = 3;
  int max_rounds = 100;
  int workers = 4;
  bool mock_mode = false;
  bool export_graphs = false;
  std::size_t workspace_cap = 0;
  bool forward_all_passing = true;
  bool screen_hard_fail = false;
  bool score_hard_fail = false;
  std::string prompt_dir;  // empty = compiled-in default

  EndpointConfig extractor;
  EndpointConfig rewriter;
  EndpointConfig scorer;
  EndpointConfig judge;
  LlmRoleOptions role_options;
};

// Throws ConfigError on syntax errors, unknown keys, or invariant
// violations (vote_runs and rewrite_candidates are fixed at 3 in v1).
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);

void validate_config(const PipelineConfig& cfg);

}  // namespace clip
