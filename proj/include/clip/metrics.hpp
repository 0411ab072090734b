#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "clip/errors.hpp"

namespace clip {

// One evaluated question: correctness verdict plus resource usage.
struct RunRecord {
  std::string question_id;
  bool correct = false;
  double rounds = 0.0;
  double tokens = 0.0;
};

struct BenchmarkSummary {
  double acc = 0.0;
  double avg_rounds = 0.0;
  double avg_tokens = 0.0;
  double f_ae = 0.0;             // canonical aggregate form: f_ae(acc, avg_rounds)
  double f_ae_per_record = 0.0;  // mean of per-record scores, exposed for comparison
  std::size_t n = 0;
  std::size_t over_budget = 0;   // records with rounds > max_rounds
  int max_rounds = 0;
};

struct HistogramBuckets {
  int bucket_width = 1;
  std::map<int, std::size_t> counts;                 // bucket -> count
  std::vector<std::pair<int, double>> cumulative;    // threshold k -> cumulative accuracy
  double acc = 0.0;                                  // limit of the cumulative curve
};

// E = 1 - rounds/max_rounds, clamped into [0,1]. Throws InvalidBudget.
double efficiency(double rounds, int max_rounds);

// Harmonic mean of two scores in [0,1]; 0 when both are 0.
double harmonic_balance(double a, double b);

// Harmonic mean of accuracy and round-efficiency at the given budget.
double f_ae(double acc, double rounds, int max_rounds = 100);

// Aggregate statistics; f_ae uses aggregate acc and aggregate avg_rounds.
// Throws EmptyInput.
BenchmarkSummary summarize(const std::vector<RunRecord>& records, int max_rounds);

// Tool-call distribution plus the cumulative-accuracy curve: the cumulative
// value at k is the fraction of ALL records that are correct and finished
// within k rounds.
HistogramBuckets histogram(const std::vector<RunRecord>& records, int bucket_width);

// Run-record JSONL: {"question_id", "correct", "rounds", "tokens"}.
std::vector<RunRecord> parse_run_records(std::istream& in);
std::string serialize_run_record(const RunRecord& r);

std::string summary_csv(const BenchmarkSummary& s);
std::string histogram_csv(const HistogramBuckets& h);
std::string cumulative_csv(const HistogramBuckets& h);
// Aligned plain-text table with the counting-convention footer.
std::string render_report(const BenchmarkSummary& s);

}  // namespace clip
