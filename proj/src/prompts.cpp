#include "clip/prompts.hpp"

#include <fstream>
#include <sstream>

#include "clip/errors.hpp"

#ifndef CLIP_PROMPT_DIR
#define CLIP_PROMPT_DIR "assets/prompts"
#endif

namespace clip {

std::string render_template(std::string_view tpl,
                            const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tpl.size());
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    const std::size_t open = tpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tpl.substr(pos));
      break;
    }
    const std::size_t close = tpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(tpl.substr(pos));
      break;
    }
    out.append(tpl.substr(pos, open - pos));
    const std::string key(tpl.substr(open + 2, close - open - 2));
    const auto it = vars.find(key);
    if (it == vars.end()) {
      throw ConfigError("prompt template references unknown placeholder {{" + key +
                        "}}");
    }
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

namespace {

std::string read_asset(const std::string& dir, const std::string& name) {
  const std::string path = dir + "/" + name;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open prompt asset " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

PromptLibrary PromptLibrary::load(const std::string& dir) {
  PromptLibrary lib;
  lib.action_node = read_asset(dir, "action_node.txt");
  lib.info_edge = read_asset(dir, "info_edge.txt");
  lib.message_refine = read_asset(dir, "message_refine.txt");
  lib.judge = read_asset(dir, "judge.txt");
  lib.agent_system = read_asset(dir, "agent_system.txt");
  return lib;
}

PromptLibrary PromptLibrary::load_default() { return load(CLIP_PROMPT_DIR); }

}  // namespace clip
