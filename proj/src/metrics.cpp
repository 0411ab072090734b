#include "clip/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>

#include "json.hpp"

namespace clip {

double efficiency(double rounds, int max_rounds) {
  if (max_rounds < 1) {
    throw InvalidBudget("max_rounds must be >= 1, got " + std::to_string(max_rounds));
  }
  double e = 1.0 - rounds / static_cast<double>(max_rounds);
  return std::clamp(e, 0.0, 1.0);
}

double harmonic_balance(double a, double b) {
  if (a + b <= 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

double f_ae(double acc, double rounds, int max_rounds) {
  return harmonic_balance(acc, efficiency(rounds, max_rounds));
}

BenchmarkSummary summarize(const std::vector<RunRecord>& records, int max_rounds) {
  if (records.empty()) throw EmptyInput("no run records");
  if (max_rounds < 1) {
    throw InvalidBudget("max_rounds must be >= 1, got " + std::to_string(max_rounds));
  }
  BenchmarkSummary s;
  s.n = records.size();
  s.max_rounds = max_rounds;
  double correct = 0.0, rounds = 0.0, tokens = 0.0, per_record = 0.0;
  for (const RunRecord& r : records) {
    correct += r.correct ? 1.0 : 0.0;
    rounds += r.rounds;
    tokens += r.tokens;
    per_record += f_ae(r.correct ? 1.0 : 0.0, r.rounds, max_rounds);
    if (r.rounds > static_cast<double>(max_rounds)) ++s.over_budget;
  }
  const double n = static_cast<double>(s.n);
  s.acc = correct / n;
  s.avg_rounds = rounds / n;
  s.avg_tokens = tokens / n;
  s.f_ae = f_ae(s.acc, s.avg_rounds, max_rounds);
  s.f_ae_per_record = per_record / n;
  return s;
}

HistogramBuckets histogram(const std::vector<RunRecord>& records, int bucket_width) {
  if (bucket_width < 1) {
    throw InvalidBudget("bucket_width must be >= 1, got " + std::to_string(bucket_width));
  }
  HistogramBuckets h;
  h.bucket_width = bucket_width;
  if (records.empty()) return h;

  double max_rounds_seen = 0.0;
  std::size_t correct_total = 0;
  for (const RunRecord& r : records) {
    const int bucket = static_cast<int>(std::floor(r.rounds / bucket_width));
    ++h.counts[bucket];
    max_rounds_seen = std::max(max_rounds_seen, r.rounds);
    if (r.correct) ++correct_total;
  }
  h.acc = static_cast<double>(correct_total) / static_cast<double>(records.size());

  const int k_max = static_cast<int>(std::ceil(max_rounds_seen));
  for (int k = 0; k <= k_max; ++k) {
    std::size_t hits = 0;
    for (const RunRecord& r : records) {
      if (r.correct && r.rounds <= static_cast<double>(k)) ++hits;
    }
    h.cumulative.emplace_back(k, static_cast<double>(hits) /
                                     static_cast<double>(records.size()));
  }
  return h;
}

std::vector<RunRecord> parse_run_records(std::istream& in) {
  std::vector<RunRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("line " + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    RunRecord r;
    try {
      r.question_id = doc.at("question_id").get<std::string>();
      r.correct = doc.at("correct").get<bool>();
      r.rounds = doc.at("rounds").get<double>();
      r.tokens = doc.at("tokens").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (r.rounds < 0 || r.tokens < 0) {
      throw SchemaError("line " + std::to_string(lineno) + ": negative rounds/tokens");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string serialize_run_record(const RunRecord& r) {
  nlohmann::ordered_json doc;
  doc["question_id"] = r.question_id;
  doc["correct"] = r.correct;
  doc["rounds"] = r.rounds;
  doc["tokens"] = r.tokens;
  return doc.dump();
}

namespace {

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

}  // namespace

std::string summary_csv(const BenchmarkSummary& s) {
  std::ostringstream os;
  os << "n,acc,avg_rounds,avg_tokens,f_ae,f_ae_per_record,max_rounds,over_budget\n";
  os << s.n << ',' << fmt(s.acc) << ',' << fmt(s.avg_rounds, 2) << ','
     << fmt(s.avg_tokens, 1) << ',' << fmt(s.f_ae) << ','
     << fmt(s.f_ae_per_record) << ',' << s.max_rounds << ',' << s.over_budget
     << '\n';
  return os.str();
}

std::string histogram_csv(const HistogramBuckets& h) {
  std::ostringstream os;
  os << "bucket_lo,bucket_hi,count\n";
  for (const auto& [bucket, count] : h.counts) {
    os << bucket * h.bucket_width << ',' << (bucket + 1) * h.bucket_width << ','
       << count << '\n';
  }
  return os.str();
}

std::string cumulative_csv(const HistogramBuckets& h) {
  std::ostringstream os;
  os << "rounds,cumulative_accuracy\n";
  for (const auto& [k, acc] : h.cumulative) {
    os << k << ',' << fmt(acc) << '\n';
  }
  return os.str();
}

std::string render_report(const BenchmarkSummary& s) {
  std::ostringstream os;
  os << "benchmark summary\n";
  os << "  n            " << s.n << '\n';
  os << "  acc          " << fmt(s.acc) << '\n';
  os << "  avg rounds   " << fmt(s.avg_rounds, 2) << '\n';
  os << "  avg tokens   " << fmt(s.avg_tokens, 1) << '\n';
  os << "  F-AE         " << fmt(s.f_ae) << "  (budget " << s.max_rounds << ")\n";
  os << "  F-AE (per-record mean) " << fmt(s.f_ae_per_record) << '\n';
  if (s.over_budget > 0) {
    os << "  over budget  " << s.over_budget << " record(s); efficiency clamped to 0\n";
  }
  os << "notes: rounds count tool invocations and exclude the terminal answer;\n";
  os << "       token counts use the approximate whitespace+punctuation segmenter\n";
  os << "       unless an exact tokenizer was supplied.\n";
  return os.str();
}

}  // namespace clip
