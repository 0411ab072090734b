#include "clip/rewriter.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_set>

#include "json.hpp"

namespace clip {

using ordered_json = nlohmann::ordered_json;

PrunedTrajectory assemble_pruned(const Trajectory& t, const NecessarySet& final) {
  const int sink = t.total_steps();
  if (final.action_steps.count(sink) == 0) {
    throw MissingAnswer("kept set lacks the answer step " + std::to_string(sink));
  }
  PrunedTrajectory p;
  p.query = t.query;
  p.meta = t.meta;
  p.source = t;
  for (const int step : final.action_steps) {
    if (step < 1 || step > sink) {
      throw StructureError("kept step " + std::to_string(step) +
                           " outside 1.." + std::to_string(sink));
    }
    p.kept.emplace_back(step, t.round(step));
  }
  for (std::size_t i = 0; i < p.kept.size(); ++i) {
    const int prev = i == 0 ? 0 : p.kept[i - 1].first;
    if (p.kept[i].first != prev + 1) p.seams.insert(i);
  }
  return p;
}

bool contains_span(const std::string& candidate, const std::string& source,
                   int min_tokens) {
  if (min_tokens < 1) min_tokens = 1;
  const std::vector<std::string> ct = segment_tokens(candidate);
  const std::vector<std::string> st = segment_tokens(source);
  const std::size_t n = static_cast<std::size_t>(min_tokens);
  if (ct.size() < n || st.size() < n) return false;
  auto gram = [n](const std::vector<std::string>& toks, std::size_t at) {
    std::string g;
    for (std::size_t i = 0; i < n; ++i) {
      g += toks[at + i];
      g += '\x1f';
    }
    return g;
  };
  std::unordered_set<std::string> grams;
  for (std::size_t i = 0; i + n <= ct.size(); ++i) grams.insert(gram(ct, i));
  for (std::size_t i = 0; i + n <= st.size(); ++i) {
    if (grams.count(gram(st, i))) return true;
  }
  return false;
}

namespace {

std::string render_rounds(const std::vector<std::pair<int, Round>>& rounds) {
  std::string out;
  for (const auto& [step, r] : rounds) {
    if (!out.empty()) out += "\n\n";
    out += "Round " + std::to_string(step) + "\nThought: " + r.thought +
           "\nAction (" + r.action.name + "): " + r.action.payload;
    if (r.observation) out += "\nObservation: " + *r.observation;
  }
  return out.empty() ? "(none)" : out;
}

}  // namespace

PrunedTrajectory rewrite_seams(const PrunedTrajectory& p, RewriterRole& rewriter,
                               ScorerRole& scorer,
                               const std::string& system_prompt,
                               const RewriteOptions& opts,
                               std::vector<SeamRecord>* records) {
  PrunedTrajectory out = p;
  out.rewritten.clear();
  out.warnings.clear();
  if (out.seams.empty()) return out;

  std::set<int> kept_steps;
  for (const auto& [step, r] : out.kept) kept_steps.insert(step);
  std::vector<std::string> pruned_observations;
  for (const Round& r : out.source.rounds) {
    if (!kept_steps.count(r.index) && r.observation) {
      pruned_observations.push_back(*r.observation);
    }
  }

  for (const std::size_t pos : out.seams) {
    Round& target = out.kept[pos].second;

    RewriteContext ctx;
    ctx.query = out.query;
    ctx.history = render_rounds(
        {out.kept.begin(), out.kept.begin() + static_cast<std::ptrdiff_t>(pos)});
    const int gap_first = pos == 0 ? 1 : out.kept[pos - 1].first + 1;
    const int gap_last = out.kept[pos].first - 1;
    std::vector<std::pair<int, Round>> skipped;
    for (int step = gap_first; step <= gap_last; ++step) {
      skipped.emplace_back(step, out.source.round(step));
    }
    ctx.skipped = render_rounds(skipped);
    ctx.original_thought = target.thought;
    ctx.action_kind = target.action.name;
    ctx.action_payload = target.action.payload;

    CandidateSet cs;
    for (int i = 0; i < 3; ++i) {
      ctx.candidate_index = i;
      cs.candidates[static_cast<std::size_t>(i)].text = rewriter.rewrite(ctx);
    }
    for (Candidate& c : cs.candidates) {
      for (const std::string& obs : pruned_observations) {
        if (contains_span(c.text, obs, opts.min_span_tokens)) {
          c.screened_out = true;
          break;
        }
      }
    }

    std::vector<Round> prior;
    prior.reserve(pos);
    for (std::size_t j = 0; j < pos; ++j) prior.push_back(out.kept[j].second);
    const std::string prefix =
        render_chatml(chat_messages(system_prompt, out.query, prior)) +
        "<|im_start|>assistant\n<think>";

    bool score_unavailable = false;
    for (Candidate& c : cs.candidates) {
      if (c.screened_out) continue;
      try {
        c.score = scorer.score(prefix, c.text);
      } catch (const UnsupportedEndpoint&) {
        if (opts.score_hard_fail) throw;
        score_unavailable = true;
        break;
      }
    }

    const std::string seam_label = "seam at kept position " + std::to_string(pos);
    cs.winner = -1;
    if (score_unavailable) {
      for (std::size_t i = 0; i < cs.candidates.size(); ++i) {
        if (!cs.candidates[i].screened_out) {
          cs.winner = static_cast<int>(i);
          break;
        }
      }
      out.warnings.push_back(seam_label +
                             ": scorer lacks logprobs, kept first candidate");
    } else {
      double best = 0.0;
      for (std::size_t i = 0; i < cs.candidates.size(); ++i) {
        const Candidate& c = cs.candidates[i];
        if (c.screened_out || !c.score) continue;
        if (cs.winner < 0 || c.score->avg_nll < best) {
          cs.winner = static_cast<int>(i);
          best = c.score->avg_nll;
        }
      }
    }

    if (cs.winner < 0) {
      if (opts.screen_hard_fail) {
        throw MalformedResponse(
            seam_label + ": all rewrite candidates were disqualified",
            out.kept[pos].first);
      }
      out.warnings.push_back(seam_label +
                             ": all candidates disqualified, kept the original");
    } else {
      target.thought = cs.candidates[static_cast<std::size_t>(cs.winner)].text;
      out.rewritten.insert(pos);
    }
    if (records) {
      records->push_back(SeamRecord{pos, ctx.original_thought, cs});
    }
  }
  return out;
}

Trajectory to_trajectory(const PrunedTrajectory& p) {
  Trajectory t;
  t.query = p.query;
  t.meta = p.meta;
  int index = 0;
  for (const auto& [step, r] : p.kept) {
    Round copy = r;
    copy.index = ++index;
    t.rounds.push_back(std::move(copy));
  }
  validate_trajectory(t);
  return t;
}

std::string_view to_string(SftRole role) {
  switch (role) {
    case SftRole::System: return "system";
    case SftRole::User: return "user";
    case SftRole::Assistant: return "assistant";
    case SftRole::Tool: return "tool";
  }
  return "user";
}

SftRole sft_role_from_string(std::string_view name) {
  if (name == "system") return SftRole::System;
  if (name == "user") return SftRole::User;
  if (name == "assistant") return SftRole::Assistant;
  if (name == "tool") return SftRole::Tool;
  throw SchemaError("unknown chat role \"" + std::string(name) + "\"");
}

std::vector<SftMessage> chat_messages(const std::string& system_prompt,
                                      const std::string& query,
                                      const std::vector<Round>& rounds) {
  std::vector<SftMessage> msgs;
  msgs.push_back({SftRole::System, system_prompt});
  msgs.push_back({SftRole::User, query});
  for (const Round& r : rounds) {
    std::string content = "<think>" + r.thought + "</think>\n";
    if (r.action.kind == ToolKind::Answer) {
      content += "<answer>" + r.action.payload + "</answer>";
    } else {
      content += "<tool_call name=\"" + r.action.name + "\">" + r.action.payload +
                 "</tool_call>";
    }
    msgs.push_back({SftRole::Assistant, std::move(content)});
    if (r.observation) msgs.push_back({SftRole::Tool, *r.observation});
  }
  return msgs;
}

std::string render_chatml(const std::vector<SftMessage>& messages) {
  std::string out;
  for (const SftMessage& m : messages) {
    out += "<|im_start|>";
    out += to_string(m.role);
    out += '\n';
    out += m.content;
    out += "<|im_end|>\n";
  }
  return out;
}

std::string query_id_for(const std::string& query) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(query)));
  return buf;
}

SFTExample make_sft_example(const Trajectory& t, std::string provenance,
                            const std::string& system_prompt) {
  if (provenance != "pruned" && provenance != "unpruned") {
    throw StructureError("provenance must be \"pruned\" or \"unpruned\"");
  }
  SFTExample example;
  example.provenance = std::move(provenance);
  example.query_id = query_id_for(t.query);
  example.messages = chat_messages(system_prompt, t.query, t.rounds);
  return example;
}

std::string serialize_sft_example(const SFTExample& example) {
  ordered_json doc;
  doc["provenance"] = example.provenance;
  doc["query_id"] = example.query_id;
  ordered_json msgs = ordered_json::array();
  for (const SftMessage& m : example.messages) {
    msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  doc["messages"] = std::move(msgs);
  return doc.dump();
}

SFTExample parse_sft_example(const std::string& line) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("invalid chat example JSON: ") + e.what());
  }
  SFTExample example;
  try {
    example.provenance = doc.at("provenance").get<std::string>();
    example.query_id = doc.at("query_id").get<std::string>();
    for (const ordered_json& mj : doc.at("messages")) {
      example.messages.push_back(
          {sft_role_from_string(mj.at("role").get<std::string>()),
           mj.at("content").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("chat example schema error: ") + e.what());
  }
  return example;
}

void validate_sft_example(const SFTExample& example) {
  if (example.provenance != "pruned" && example.provenance != "unpruned") {
    throw StructureError("provenance must be \"pruned\" or \"unpruned\"");
  }
  const auto& msgs = example.messages;
  if (msgs.size() < 3) throw StructureError("chat example needs system, user, answer");
  if (msgs[0].role != SftRole::System) {
    throw StructureError("first message must be system");
  }
  if (msgs[1].role != SftRole::User) {
    throw StructureError("second message must be the user query");
  }
  for (std::size_t i = 2; i < msgs.size(); ++i) {
    const bool expect_assistant = (i % 2) == 0;
    const SftRole expect = expect_assistant ? SftRole::Assistant : SftRole::Tool;
    if (msgs[i].role != expect) {
      throw StructureError("alternation broken at message " + std::to_string(i));
    }
    if (expect_assistant) {
      const std::string& c = msgs[i].content;
      if (c.rfind("<think>", 0) != 0 || c.find("</think>") == std::string::npos) {
        throw StructureError("assistant message " + std::to_string(i) +
                             " lacks a <think> block");
      }
      const bool last = i + 1 == msgs.size();
      const bool has_answer = c.find("<answer>") != std::string::npos &&
                              c.find("</answer>") != std::string::npos;
      const bool has_call = c.find("<tool_call") != std::string::npos;
      if (last && !has_answer) {
        throw StructureError("final assistant message lacks <answer>");
      }
      if (!last && !has_call) {
        throw StructureError("non-final assistant message " + std::to_string(i) +
                             " lacks <tool_call>");
      }
    }
  }
  if (msgs.back().role != SftRole::Assistant) {
    throw StructureError("chat example must end with the assistant answer");
  }
}

std::string export_sft(const std::vector<SFTExample>& pruned,
                       const std::vector<SFTExample>& unpruned, DatasetMode mode) {
  if (pruned.empty()) throw EmptyPool("pruned pool is empty");
  std::string out;
  auto emit = [&out](const SFTExample& e, const char* expected_provenance) {
    if (e.provenance != expected_provenance) {
      throw StructureError("example in the " + std::string(expected_provenance) +
                           " pool carries provenance \"" + e.provenance + "\"");
    }
    validate_sft_example(e);
    out += serialize_sft_example(e);
    out += '\n';
  };
  for (const SFTExample& e : pruned) emit(e, "pruned");
  if (mode == DatasetMode::Hybrid) {
    if (unpruned.empty()) throw EmptyPool("unpruned pool is empty");
    std::set<std::string> pruned_ids;
    for (const SFTExample& e : pruned) pruned_ids.insert(e.query_id);
    for (const SFTExample& e : unpruned) {
      if (pruned_ids.count(e.query_id)) {
        throw QueryOverlap("query " + e.query_id + " appears in both pools");
      }
    }
    for (const SFTExample& e : unpruned) emit(e, "unpruned");
  }
  return out;
}

}  // namespace clip
