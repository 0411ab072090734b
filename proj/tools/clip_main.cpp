#include <iostream>

#include "CLI11.hpp"

#include "clip/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"clip: prune web-agent trajectories into efficient SFT data"};
  app.require_subcommand(1);

  std::string prune_config;
  bool prune_mock = false;
  bool prune_export_graphs = false;
  std::string prune_out;
  CLI::App* prune = app.add_subcommand("prune", "run the full pruning pipeline");
  prune->add_option("--config", prune_config, "pipeline config file")->required();
  prune->add_flag("--mock", prune_mock, "use the deterministic offline roles");
  prune->add_flag("--export-graphs", prune_export_graphs,
                  "write per-run state graph JSON");
  prune->add_option("--out", prune_out, "override the output directory");

  std::string score_records;
  int score_max_rounds = 100;
  std::string score_out = "out";
  CLI::App* score = app.add_subcommand("score", "summarize run records");
  score->add_option("records", score_records, "run-record JSONL")->required();
  score->add_option("--max-rounds", score_max_rounds, "round budget");
  score->add_option("--out", score_out, "output directory");

  std::string graph_trajectories;
  int graph_runs = 3;
  std::string graph_config;
  bool graph_mock = false;
  std::string graph_out = "out";
  CLI::App* graph = app.add_subcommand("graph", "construct state graphs and vote");
  graph->add_option("trajectories", graph_trajectories, "trajectory JSONL")->required();
  graph->add_option("--runs", graph_runs, "independent construction runs");
  graph->add_option("--config", graph_config, "pipeline config file");
  graph->add_flag("--mock", graph_mock, "use the deterministic offline roles");
  graph->add_option("--out", graph_out, "output directory");

  std::string export_mode;
  std::string export_out = "out";
  std::string export_prompts;
  CLI::App* exp = app.add_subcommand("export", "rebuild an SFT dataset from pools");
  exp->add_option("--mode", export_mode, "eff or hybrid")
      ->required()
      ->check(CLI::IsMember({"eff", "hybrid"}));
  exp->add_option("--out", export_out, "directory holding pruned/unpruned pools");
  exp->add_option("--prompts", export_prompts, "prompt asset directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prune->parsed()) {
      clip::PipelineConfig cfg = clip::load_config(prune_config);
      if (prune_mock) cfg.mock_mode = true;
      if (prune_export_graphs) cfg.export_graphs = true;
      if (!prune_out.empty()) cfg.out_dir = prune_out;
      const clip::RoleSet roles = clip::make_roles(cfg);
      const clip::PruneOutcome outcome = clip::run_prune(cfg, roles);
      std::cout << clip::report_text(outcome.report);
      std::cout << "wall time " << outcome.report.wall_ms << " ms\n";
      return outcome.exit_code;
    }
    if (score->parsed()) {
      return clip::run_score(score_records, score_max_rounds, score_out, std::cout);
    }
    if (graph->parsed()) {
      clip::PipelineConfig cfg;
      if (!graph_config.empty()) {
        cfg = clip::load_config(graph_config);
      } else if (!graph_mock) {
        std::cerr << "graph needs --config for live endpoints or --mock\n";
        return 2;
      }
      if (graph_mock) cfg.mock_mode = true;
      cfg.out_dir = graph_out;
      const clip::RoleSet roles = clip::make_roles(cfg);
      return clip::run_graph(graph_trajectories, graph_runs, cfg, roles, std::cout);
    }
    const clip::DatasetMode mode =
        export_mode == "eff" ? clip::DatasetMode::Eff : clip::DatasetMode::Hybrid;
    return clip::run_export(export_out, mode, export_prompts, std::cout);
  } catch (const clip::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const clip::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
