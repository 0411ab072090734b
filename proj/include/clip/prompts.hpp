#pragma once

#include <map>
#include <string>
#include <string_view>

namespace clip {

// Substitutes {{name}} placeholders. Unknown placeholders throw ConfigError
// so template typos fail loudly instead of leaking braces into prompts.
std::string render_template(std::string_view tpl,
                            const std::map<std::string, std::string>& vars);

// The editable prompt assets, loaded once per run. Files live under a
// directory the caller controls; the build pins a default next to the
// sources so tools work without installation.
struct PromptLibrary {
  std::string action_node;     // turn -> {"action","goal"}
  std::string info_edge;       // snippet -> units/supports
  std::string message_refine;  // seam thought rewrite
  std::string judge;           // answer grading
  std::string agent_system;    // system message for exported chats

  static PromptLibrary load(const std::string& dir);
  static PromptLibrary load_default();
};

}  // namespace clip
