#include "clip/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "clip/errors.hpp"

namespace clip {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Strips a # comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (c == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

struct Value {
  std::string raw;
  int line = 0;

  std::string as_string() const {
    if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') {
      throw ConfigError("line " + std::to_string(line) +
                        ": expected a quoted string");
    }
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      char c = raw[i];
      if (c == '\\' && i + 2 < raw.size()) {
        const char next = raw[++i];
        switch (next) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default:
            throw ConfigError("line " + std::to_string(line) +
                              ": unsupported escape \\" + std::string(1, next));
        }
      }
      out.push_back(c);
    }
    return out;
  }

  bool as_bool() const {
    if (raw == "true") return true;
    if (raw == "false") return false;
    throw ConfigError("line " + std::to_string(line) + ": expected true or false");
  }

  long long as_int() const {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(raw, &used);
      if (used != raw.size()) throw std::invalid_argument(raw);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("line " + std::to_string(line) + ": expected an integer");
    }
  }

  double as_double() const {
    try {
      std::size_t used = 0;
      const double v = std::stod(raw, &used);
      if (used != raw.size()) throw std::invalid_argument(raw);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("line " + std::to_string(line) + ": expected a number");
    }
  }
};

void apply_endpoint(EndpointConfig& ep, const std::string& key, const Value& v) {
  if (key == "base_url") {
    ep.base_url = v.as_string();
  } else if (key == "model") {
    ep.model_name = v.as_string();
  } else if (key == "api_key_env") {
    ep.api_key_env = v.as_string();
  } else if (key == "max_retries") {
    ep.max_retries = static_cast<int>(v.as_int());
  } else if (key == "timeout_s") {
    ep.timeout_s = v.as_double();
  } else if (key == "max_inflight") {
    ep.max_inflight = static_cast<int>(v.as_int());
  } else {
    throw ConfigError("line " + std::to_string(v.line) +
                      ": unknown endpoint key \"" + key + "\"");
  }
}

}  // namespace

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section = "pipeline";
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const Value v{trim(line.substr(eq + 1)), line_no};

    if (section == "pipeline") {
      if (key == "input") {
        cfg.input_path = v.as_string();
      } else if (key == "out") {
        cfg.out_dir = v.as_string();
      } else if (key == "k") {
        cfg.k = static_cast<int>(v.as_int());
      } else if (key == "pr_lower") {
        cfg.pr_lower = v.as_double();
      } else if (key == "pr_upper") {
        cfg.pr_upper = v.as_double();
      } else if (key == "vote_runs") {
        cfg.vote_runs = static_cast<int>(v.as_int());
      } else if (key == "rewrite_candidates") {
        cfg.rewrite_candidates = static_cast<int>(v.as_int());
      } else if (key == "max_rounds") {
        cfg.max_rounds = static_cast<int>(v.as_int());
      } else if (key == "workers") {
        cfg.workers = static_cast<int>(v.as_int());
      } else if (key == "mock") {
        cfg.mock_mode = v.as_bool();
      } else if (key == "export_graphs") {
        cfg.export_graphs = v.as_bool();
      } else if (key == "workspace_cap") {
        cfg.workspace_cap = static_cast<std::size_t>(v.as_int());
      } else if (key == "forward_all_passing") {
        cfg.forward_all_passing = v.as_bool();
      } else if (key == "screen_hard_fail") {
        cfg.screen_hard_fail = v.as_bool();
      } else if (key == "score_hard_fail") {
        cfg.score_hard_fail = v.as_bool();
      } else if (key == "prompt_dir") {
        cfg.prompt_dir = v.as_string();
      } else {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": unknown pipeline key \"" + key + "\"");
      }
    } else if (section == "roles") {
      if (key == "extractor_temperature") {
        cfg.role_options.extractor_temperature = v.as_double();
      } else if (key == "judge_temperature") {
        cfg.role_options.judge_temperature = v.as_double();
      } else if (key == "rewriter_temperature") {
        cfg.role_options.rewriter_temperature = v.as_double();
      } else {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": unknown roles key \"" + key + "\"");
      }
    } else if (section == "endpoints.extractor") {
      apply_endpoint(cfg.extractor, key, v);
    } else if (section == "endpoints.rewriter") {
      apply_endpoint(cfg.rewriter, key, v);
    } else if (section == "endpoints.scorer") {
      apply_endpoint(cfg.scorer, key, v);
    } else if (section == "endpoints.judge") {
      apply_endpoint(cfg.judge, key, v);
    } else {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" +
                        section + "]");
    }
  }
  validate_config(cfg);
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void validate_config(const PipelineConfig& cfg) {
  if (cfg.k < 1) throw ConfigError("k must be >= 1");
  if (cfg.vote_runs != 3) {
    throw ConfigError("vote_runs is fixed at 3 (the vote rule is 2-of-3)");
  }
  if (cfg.rewrite_candidates != 3) {
    throw ConfigError("rewrite_candidates is fixed at 3");
  }
  if (!(cfg.pr_lower >= 0.0 && cfg.pr_lower < cfg.pr_upper && cfg.pr_upper <= 1.0)) {
    throw ConfigError("pass-rate bounds must satisfy 0 <= lower < upper <= 1");
  }
  if (cfg.max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
  auto check_ep = [](const EndpointConfig& ep, const char* name) {
    if (ep.max_retries < 0) {
      throw ConfigError(std::string(name) + ": max_retries must be >= 0");
    }
    if (ep.max_inflight < 1) {
      throw ConfigError(std::string(name) + ": max_inflight must be >= 1");
    }
  };
  check_ep(cfg.extractor, "extractor");
  check_ep(cfg.rewriter, "rewriter");
  check_ep(cfg.scorer, "scorer");
  check_ep(cfg.judge, "judge");
}

}  // namespace clip
