#include "clip/roles.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace clip {

using json = nlohmann::json;

std::optional<std::string> find_fenced_block(std::string_view text) {
  const std::size_t open = text.find("```");
  if (open == std::string_view::npos) return std::nullopt;
  std::size_t body = text.find('\n', open + 3);
  if (body == std::string_view::npos) return std::nullopt;
  ++body;
  const std::size_t close = text.find("```", body);
  if (close == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(body, close - body));
}

std::string normalize_statement(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (const char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

namespace {

std::string render_round(const Round& r) {
  std::string out = "Thought: " + r.thought + "\nAction (" + r.action.name +
                    "): " + r.action.payload;
  if (r.observation) out += "\nObservation: " + *r.observation;
  return out;
}

std::string render_history(const Trajectory& t, int upto_exclusive) {
  if (upto_exclusive <= 1) return "(none)";
  std::string out;
  for (int i = 1; i < upto_exclusive; ++i) {
    if (!out.empty()) out += "\n\n";
    out += render_round(t.round(i));
  }
  return out;
}

std::string render_workspace(const std::vector<std::pair<int, std::string>>& ws) {
  std::string out;
  for (const auto& [id, statement] : ws) {
    if (!out.empty()) out += "\n";
    out += "I" + std::to_string(id) + ": " + statement;
  }
  return out.empty() ? "(none)" : out;
}

std::string render_action(const ActionNode& a) {
  return "A" + std::to_string(a.step) + " (" + a.kind_name + "): " + a.goal;
}

constexpr const char* kRepairNudge =
    "Your previous reply could not be used: ";
constexpr const char* kRepairTail =
    ". Respond again with exactly one fenced JSON block in the required "
    "format and nothing else.";

// Runs one exchange with a single repair reprompt. `convert` turns the parsed
// JSON into the caller's result and may throw Error to reject the reply.
template <typename T, typename Convert>
T ask_json(Gateway& gw, std::vector<ChatMessage> messages, double temperature,
           Convert&& convert, int step, bool& rejected_ids) {
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const std::string reply = gw.complete(messages, temperature);
    try {
      const auto fenced = find_fenced_block(reply);
      if (!fenced) throw Error("reply contains no closed ``` fence");
      json doc;
      try {
        doc = json::parse(*fenced);
      } catch (const json::exception& e) {
        throw Error(std::string("fenced block is not valid JSON: ") + e.what());
      }
      return convert(doc);
    } catch (const DanglingSupport& e) {
      rejected_ids = true;
      last_error = e.what();
    } catch (const Error& e) {
      rejected_ids = false;
      last_error = e.what();
    }
    if (attempt == 0) {
      messages.push_back({ChatMessage::Role::Assistant, reply});
      messages.push_back(
          {ChatMessage::Role::User, kRepairNudge + last_error + kRepairTail});
    }
  }
  if (rejected_ids) throw DanglingSupport(last_error, step);
  throw MalformedResponse(last_error, step);
}

template <typename T, typename Convert>
T ask_json(Gateway& gw, std::vector<ChatMessage> messages, double temperature,
           Convert&& convert, int step = -1) {
  bool rejected_ids = false;
  return ask_json<T>(gw, std::move(messages), temperature,
                     std::forward<Convert>(convert), step, rejected_ids);
}

}  // namespace

LlmExtractor::LlmExtractor(std::shared_ptr<Gateway> gw, const PromptLibrary& prompts,
                           LlmRoleOptions opts)
    : gw_(std::move(gw)), prompts_(prompts), opts_(opts) {}

ActionSummary LlmExtractor::summarize_turn(const Trajectory& t, int step) {
  const Round& r = t.round(step);
  const std::string prompt = render_template(
      prompts_.action_node, {{"query", t.query},
                             {"history", render_history(t, step)},
                             {"thought", r.thought},
                             {"action_kind", r.action.name},
                             {"action_payload", r.action.payload}});
  return ask_json<ActionSummary>(
      *gw_, {{ChatMessage::Role::User, prompt}}, opts_.extractor_temperature,
      [](const json& doc) {
        if (!doc.contains("action") || !doc.contains("goal") ||
            !doc["action"].is_string() || !doc["goal"].is_string()) {
          throw Error("expected string fields \"action\" and \"goal\"");
        }
        return ActionSummary{doc["action"].get<std::string>(),
                             doc["goal"].get<std::string>()};
      },
      step);
}

ExtractorTurnOutput LlmExtractor::analyze_snippet(const SnippetContext& ctx) {
  const std::string prompt = render_template(
      prompts_.info_edge, {{"query", ctx.query},
                           {"workspace", render_workspace(ctx.workspace)},
                           {"prev_action", render_action(ctx.prev)},
                           {"observation", ctx.observation},
                           {"next_action", render_action(ctx.next)}});
  bool rejected_ids = false;
  return ask_json<ExtractorTurnOutput>(
      *gw_, {{ChatMessage::Role::User, prompt}}, opts_.extractor_temperature,
      [&ctx](const json& doc) {
        if (!doc.contains("units") || !doc["units"].is_array()) {
          throw Error("expected array field \"units\"");
        }
        ExtractorTurnOutput out;
        int new_units = 0;
        for (const json& uj : doc["units"]) {
          if (!uj.contains("statement") || !uj["statement"].is_string()) {
            throw Error("each unit needs a string \"statement\"");
          }
          UnitRef unit;
          unit.statement = uj["statement"].get<std::string>();
          if (uj.contains("match") && !uj["match"].is_null()) {
            if (!uj["match"].is_number_integer()) {
              throw Error("unit \"match\" must be an info id or null");
            }
            unit.match = uj["match"].get<int>();
          }
          if (unit.match) {
            const bool known = std::any_of(
                ctx.workspace.begin(), ctx.workspace.end(),
                [&](const auto& e) { return e.first == *unit.match; });
            if (!known) {
              throw DanglingSupport("unit matched unknown info id " +
                                    std::to_string(*unit.match));
            }
          } else {
            ++new_units;
          }
          out.units.push_back(std::move(unit));
        }
        if (doc.contains("next_unsupported")) {
          if (!doc["next_unsupported"].is_boolean()) {
            throw Error("\"next_unsupported\" must be a boolean");
          }
          out.next_unsupported = doc["next_unsupported"].get<bool>();
        }
        if (doc.contains("supports_next")) {
          if (!doc["supports_next"].is_array()) {
            throw Error("\"supports_next\" must be an array of info ids");
          }
          for (const json& sj : doc["supports_next"]) {
            if (!sj.is_number_integer()) {
              throw Error("\"supports_next\" entries must be integers");
            }
            const int id = sj.get<int>();
            const bool in_workspace = std::any_of(
                ctx.workspace.begin(), ctx.workspace.end(),
                [&](const auto& e) { return e.first == id; });
            const bool newly_created =
                id >= ctx.next_free_id && id < ctx.next_free_id + new_units;
            if (!in_workspace && !newly_created) {
              throw DanglingSupport("support cites unknown info id " +
                                    std::to_string(id));
            }
            out.supports_next.push_back(id);
          }
        }
        if (out.supports_next.empty() && !out.next_unsupported) {
          throw Error(
              "\"supports_next\" is empty but \"next_unsupported\" is not set");
        }
        return out;
      },
      ctx.step, rejected_ids);
}

LlmRewriter::LlmRewriter(std::shared_ptr<Gateway> gw, const PromptLibrary& prompts,
                         LlmRoleOptions opts)
    : gw_(std::move(gw)), prompts_(prompts), opts_(opts) {}

std::string LlmRewriter::rewrite(const RewriteContext& ctx) {
  std::string prompt = render_template(
      prompts_.message_refine, {{"query", ctx.query},
                                {"history", ctx.history},
                                {"skipped", ctx.skipped},
                                {"original_thought", ctx.original_thought},
                                {"action_kind", ctx.action_kind},
                                {"action_payload", ctx.action_payload}});
  // Distinct attempts keep resampling from collapsing on cache-backed stacks.
  prompt += "\n\nCandidate attempt " + std::to_string(ctx.candidate_index + 1) +
            " of 3.";
  return ask_json<std::string>(
      *gw_, {{ChatMessage::Role::User, prompt}}, opts_.rewriter_temperature,
      [](const json& doc) {
        if (!doc.contains("thought") || !doc["thought"].is_string() ||
            doc["thought"].get<std::string>().empty()) {
          throw Error("expected a non-empty string field \"thought\"");
        }
        return doc["thought"].get<std::string>();
      });
}

LlmScorer::LlmScorer(std::shared_ptr<Gateway> gw) : gw_(std::move(gw)) {}

ScoreResult LlmScorer::score(const std::string& prefix,
                             const std::string& continuation) {
  if (continuation.empty()) throw Error("cannot score an empty continuation");
  return gw_->score_logprob(prefix, continuation);
}

LlmJudge::LlmJudge(std::shared_ptr<Gateway> gw, const PromptLibrary& prompts,
                   LlmRoleOptions opts)
    : gw_(std::move(gw)), prompts_(prompts), opts_(opts) {}

bool LlmJudge::judge(const std::string& question, const std::string& prediction,
                     const std::string& gold) {
  const std::string prompt =
      render_template(prompts_.judge, {{"question", question},
                                       {"gold_answer", gold},
                                       {"predicted", prediction}});
  return ask_json<bool>(*gw_, {{ChatMessage::Role::User, prompt}},
                        opts_.judge_temperature, [](const json& doc) {
                          if (!doc.contains("verdict") ||
                              !doc["verdict"].is_string()) {
                            throw Error("expected a string field \"verdict\"");
                          }
                          const std::string v =
                              normalize_statement(doc["verdict"].get<std::string>());
                          if (v == "yes") return true;
                          if (v == "no") return false;
                          throw Error("verdict must be \"yes\" or \"no\", got \"" +
                                      v + "\"");
                        });
}

namespace {

// "fact <tag>:" prefix of a normalized statement, or empty.
std::string fact_tag(const std::string& normalized) {
  if (normalized.rfind("fact ", 0) != 0) return {};
  const std::size_t colon = normalized.find(':');
  if (colon == std::string::npos) return {};
  std::string tag = normalized.substr(5, colon - 5);
  while (!tag.empty() && tag.back() == ' ') tag.pop_back();
  return tag;
}

std::vector<std::string> parse_uses(const std::string& text) {
  const std::size_t pos = text.find("uses:");
  if (pos == std::string::npos) return {};
  std::size_t end = text.find('\n', pos);
  if (end == std::string::npos) end = text.size();
  std::string list = text.substr(pos + 5, end - pos - 5);
  const std::size_t cut = list.find("::");
  if (cut != std::string::npos) list.resize(cut);
  std::vector<std::string> tags;
  std::string cur;
  for (const char c : list + ",") {
    if (c == ',') {
      const std::string tag = normalize_statement(cur);
      if (!tag.empty()) tags.push_back(tag);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return tags;
}

}  // namespace

ActionSummary MockExtractor::summarize_turn(const Trajectory& t, int step) {
  ++summarize_calls_;
  const Round& r = t.round(step);
  std::string goal = r.thought;
  if (!r.action.payload.empty()) goal += " :: " + r.action.payload;
  return ActionSummary{r.action.name, std::move(goal)};
}

ExtractorTurnOutput MockExtractor::analyze_snippet(const SnippetContext& ctx) {
  ++snippet_calls_;
  ExtractorTurnOutput out;

  std::map<std::string, int> tag_to_id;
  for (const auto& [id, statement] : ctx.workspace) {
    const std::string tag = fact_tag(normalize_statement(statement));
    if (!tag.empty()) tag_to_id.emplace(tag, id);
  }

  int next_id = ctx.next_free_id;
  std::set<std::string> seen_lines;
  std::istringstream lines(ctx.observation);
  std::string line;
  while (std::getline(lines, line)) {
    const std::string normalized = normalize_statement(line);
    const std::string tag = fact_tag(normalized);
    if (tag.empty()) continue;  // boilerplate
    if (!seen_lines.insert(normalized).second) continue;
    UnitRef unit;
    unit.statement = normalized;
    for (const auto& [id, statement] : ctx.workspace) {
      if (normalize_statement(statement) == normalized) {
        unit.match = id;
        break;
      }
    }
    if (!unit.match) {
      tag_to_id[tag] = next_id++;
    }
    out.units.push_back(std::move(unit));
  }

  std::vector<std::string> tags = parse_uses(ctx.next.goal);
  if (ctx.last_snippet && tags.size() >= 2) {
    if (ctx.query.find("[vote:splitall]") != std::string::npos) {
      if (ctx.variant == 1) tags = {tags.front()};
      if (ctx.variant == 2) tags = {tags.back()};
    } else if (ctx.query.find("[vote:div2]") != std::string::npos) {
      if (ctx.variant == 2) tags = {tags.front()};
    }
  }
  if (tags.empty()) {
    out.next_unsupported = true;
    return out;
  }
  for (const std::string& tag : tags) {
    if (tag == "q") {
      out.supports_next.push_back(0);
      continue;
    }
    const auto it = tag_to_id.find(tag);
    if (it == tag_to_id.end()) {
      throw DanglingSupport("mock extractor: no info node for tag \"" + tag + "\"",
                            ctx.step);
    }
    out.supports_next.push_back(it->second);
  }
  return out;
}

std::string MockRewriter::rewrite(const RewriteContext& ctx) {
  ++calls_;
  switch (ctx.candidate_index % 3) {
    case 0:
      return "The kept evidence already covers what I need, so I proceed "
             "directly with " +
             ctx.action_kind + ": " + ctx.action_payload;
    case 1:
      return "Everything required is in hand; next I run " + ctx.action_kind +
             " with " + ctx.action_payload;
    default:
      return "No further groundwork is needed, moving straight on to " +
             ctx.action_kind + " (" + ctx.action_payload + ")";
  }
}

ScoreResult MockScorer::score(const std::string& prefix,
                              const std::string& continuation) {
  ++calls_;
  if (continuation.empty()) throw Error("cannot score an empty continuation");
  const std::uint64_t h = fnv1a64(prefix + '\x1f' + continuation);
  ScoreResult result;
  result.avg_nll = static_cast<double>(h % 40000) / 10000.0;
  result.token_count =
      static_cast<std::int64_t>(segment_tokens(continuation).size());
  if (result.token_count < 1) result.token_count = 1;
  return result;
}

bool MockJudge::judge(const std::string& question, const std::string& prediction,
                      const std::string& gold) {
  ++calls_;
  (void)question;
  return normalize_statement(prediction) == normalize_statement(gold);
}

RoleSet make_mock_roles() {
  RoleSet roles;
  roles.extractor = std::make_shared<MockExtractor>();
  roles.rewriter = std::make_shared<MockRewriter>();
  roles.scorer = std::make_shared<MockScorer>();
  roles.judge = std::make_shared<MockJudge>();
  return roles;
}

}  // namespace clip
