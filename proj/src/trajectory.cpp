#include "clip/trajectory.hpp"

#include <algorithm>
#include <cctype>

#include "json.hpp"

namespace clip {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(ToolKind kind) {
  switch (kind) {
    case ToolKind::Search: return "search";
    case ToolKind::Visit: return "visit";
    case ToolKind::Python: return "python";
    case ToolKind::Answer: return "answer";
    case ToolKind::Other: return "other";
  }
  return "other";
}

ToolKind kind_from_string(std::string_view name) {
  if (name == "search") return ToolKind::Search;
  if (name == "visit") return ToolKind::Visit;
  if (name == "python") return ToolKind::Python;
  if (name == "answer") return ToolKind::Answer;
  return ToolKind::Other;
}

ToolAction ToolAction::make(std::string_view kind_name, std::string payload) {
  ToolAction a;
  a.kind = kind_from_string(kind_name);
  a.name = std::string(kind_name);
  a.payload = std::move(payload);
  return a;
}

std::size_t SampledBatch::correct_count() const {
  return static_cast<std::size_t>(
      std::count_if(trajectories.begin(), trajectories.end(),
                    [](const auto& p) { return p.second; }));
}

void validate_trajectory(const Trajectory& t) {
  if (t.rounds.empty()) throw StructureError("trajectory has no rounds");
  for (std::size_t i = 0; i < t.rounds.size(); ++i) {
    const Round& r = t.rounds[i];
    const int expect = static_cast<int>(i) + 1;
    if (r.index != expect) {
      throw StructureError("round index gap: expected " + std::to_string(expect) +
                           ", got " + std::to_string(r.index));
    }
    const bool is_answer = r.action.kind == ToolKind::Answer;
    const bool is_last = i + 1 == t.rounds.size();
    if (is_answer && !is_last) {
      throw StructureError("answer action at round " + std::to_string(r.index) +
                           " before the end of the trajectory");
    }
    if (is_last && !is_answer) {
      throw StructureError("trajectory does not terminate in an answer action");
    }
    if (is_answer && r.action.payload.empty()) {
      throw StructureError("answer payload is empty");
    }
    if (r.action.kind == ToolKind::Other && r.action.name.empty()) {
      throw StructureError("tool action at round " + std::to_string(r.index) +
                           " has an empty name");
    }
    if (r.observation.has_value() == is_answer) {
      throw StructureError("observation presence mismatch at round " +
                           std::to_string(r.index));
    }
  }
}

namespace {

const ordered_json& require(const ordered_json& obj, const char* key,
                            const char* where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError(std::string("missing field \"") + key + "\" in " + where);
  }
  return *it;
}

std::string require_string(const ordered_json& obj, const char* key,
                           const char* where) {
  const ordered_json& v = require(obj, key, where);
  if (!v.is_string()) {
    throw SchemaError(std::string("field \"") + key + "\" in " + where +
                      " is not a string");
  }
  return v.get<std::string>();
}

}  // namespace

Trajectory parse_trajectory(const std::string& raw) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(raw);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("trajectory record is not an object");

  Trajectory t;
  t.query = require_string(doc, "query", "trajectory");
  const ordered_json& meta = require(doc, "meta", "trajectory");
  if (!meta.is_object()) throw SchemaError("\"meta\" is not an object");
  t.meta.dataset = require_string(meta, "dataset", "meta");
  t.meta.run_id = require_string(meta, "run_id", "meta");
  const ordered_json& seed = require(meta, "seed", "meta");
  if (!seed.is_number_integer()) throw SchemaError("\"seed\" is not an integer");
  t.meta.seed = seed.get<std::int64_t>();

  const ordered_json& rounds = require(doc, "rounds", "trajectory");
  if (!rounds.is_array()) throw SchemaError("\"rounds\" is not an array");
  for (const ordered_json& rj : rounds) {
    if (!rj.is_object()) throw SchemaError("round entry is not an object");
    Round r;
    const ordered_json& idx = require(rj, "index", "round");
    if (!idx.is_number_integer()) throw SchemaError("round \"index\" is not an integer");
    r.index = idx.get<int>();
    r.thought = require_string(rj, "thought", "round");
    const ordered_json& act = require(rj, "action", "round");
    if (!act.is_object()) throw SchemaError("round \"action\" is not an object");
    r.action = ToolAction::make(require_string(act, "kind", "action"),
                                require_string(act, "payload", "action"));
    const ordered_json& obs = require(rj, "observation", "round");
    if (obs.is_null()) {
      r.observation = std::nullopt;
    } else if (obs.is_string()) {
      r.observation = obs.get<std::string>();
    } else {
      throw SchemaError("round \"observation\" is neither string nor null");
    }
    t.rounds.push_back(std::move(r));
  }

  validate_trajectory(t);
  return t;
}

std::string serialize_trajectory(const Trajectory& t) {
  ordered_json doc;
  doc["query"] = t.query;
  doc["meta"] = {{"dataset", t.meta.dataset},
                 {"run_id", t.meta.run_id},
                 {"seed", t.meta.seed}};
  ordered_json rounds = ordered_json::array();
  for (const Round& r : t.rounds) {
    ordered_json rj;
    rj["index"] = r.index;
    rj["thought"] = r.thought;
    rj["action"] = {{"kind", r.action.name}, {"payload", r.action.payload}};
    if (r.observation) {
      rj["observation"] = *r.observation;
    } else {
      rj["observation"] = nullptr;
    }
    rounds.push_back(std::move(rj));
  }
  doc["rounds"] = std::move(rounds);
  return doc.dump();
}

QueryBatch parse_query_batch(const std::string& raw) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(raw);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("batch record is not an object");
  QueryBatch batch;
  batch.record.question = require_string(doc, "question", "batch");
  batch.record.gold_answer = require_string(doc, "gold_answer", "batch");
  batch.record.dataset = require_string(doc, "dataset", "batch");
  if (batch.record.question.empty() || batch.record.gold_answer.empty()) {
    throw StructureError("batch question and gold_answer must be non-empty");
  }
  const ordered_json& trajs = require(doc, "trajectories", "batch");
  if (!trajs.is_array() || trajs.empty()) {
    throw SchemaError("\"trajectories\" must be a non-empty array");
  }
  for (const ordered_json& tj : trajs) {
    batch.trajectories.push_back(parse_trajectory(tj.dump()));
  }
  return batch;
}

std::string serialize_query_batch(const QueryBatch& batch) {
  ordered_json doc;
  doc["question"] = batch.record.question;
  doc["gold_answer"] = batch.record.gold_answer;
  doc["dataset"] = batch.record.dataset;
  ordered_json trajs = ordered_json::array();
  for (const Trajectory& t : batch.trajectories) {
    trajs.push_back(ordered_json::parse(serialize_trajectory(t)));
  }
  doc["trajectories"] = std::move(trajs);
  return doc.dump();
}

double pass_rate(const SampledBatch& batch) {
  if (batch.k() == 0) throw EmptyInput("sampled batch has K=0");
  return static_cast<double>(batch.correct_count()) / static_cast<double>(batch.k());
}

bool rejection_filter(const SampledBatch& batch) {
  if (batch.k() == 0) throw EmptyInput("sampled batch has K=0");
  const std::size_t correct = batch.correct_count();
  return correct > 0 && 2 * correct <= batch.k();
}

int count_rounds(const Trajectory& t) {
  return static_cast<int>(
      std::count_if(t.rounds.begin(), t.rounds.end(), [](const Round& r) {
        return r.action.kind != ToolKind::Answer;
      }));
}

namespace {

inline bool is_word_byte(unsigned char c) {
  return std::isalnum(c) != 0 || c == '_' || c >= 0x80;
}

}  // namespace

std::size_t ApproxTokenCounter::count(std::string_view text) const {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      if (!in_word) {
        ++n;
        in_word = true;
      }
    } else {
      in_word = false;
      if (std::isspace(c) == 0) ++n;
    }
  }
  return n;
}

std::vector<std::string> segment_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      cur.push_back(static_cast<char>(c));
    } else {
      if (!cur.empty()) {
        out.push_back(std::move(cur));
        cur.clear();
      }
      if (std::isspace(c) == 0) out.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::size_t count_tokens(const Trajectory& t, const TokenCounter& counter) {
  std::size_t total = 0;
  for (const Round& r : t.rounds) {
    total += counter.count(r.thought);
    total += counter.count(r.action.payload);
    if (r.observation) total += counter.count(*r.observation);
  }
  return total;
}

std::size_t count_tokens(const Trajectory& t) {
  return count_tokens(t, ApproxTokenCounter{});
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace clip
