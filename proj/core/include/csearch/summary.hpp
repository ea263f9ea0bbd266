#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csearch/corpus_io.hpp"
#include "csearch/metrics.hpp"

namespace csearch {

/// All continuations generated by one (strategy, params, seed) run.
struct RunReport {
  std::string strategy;
  std::string params;
  std::uint64_t seed = 0;
  std::vector<MetricReport> reports;
};

/// One CSV row: metrics averaged over the records of each run, then mean and
/// population standard deviation across runs. Fractions, not percentages.
struct SummaryRow {
  std::string strategy;
  std::string params;
  std::size_t runs = 0;
  double diversity = 0.0;
  double diversity_std = 0.0;
  double rep2 = 0.0;
  double rep3 = 0.0;
  double rep4 = 0.0;
  double gen_length = 0.0;
  double gen_length_std = 0.0;
  std::optional<double> coherence;
  std::optional<double> coherence_std;
};

/// "k=5 alpha=0.6 max_new_tokens=200": strategy fields, then the length cap
/// and eos when set. Seeds are not part of the label.
std::string params_label(const DecodeParams& params);

/// Groups runs by (strategy, params) in order of first appearance.
std::vector<SummaryRow> aggregate_runs(std::span<const RunReport> runs);

/// Scores every record (coherence only when `evaluator` is given) and groups
/// them into runs by (strategy, params, run seed) in order of first
/// appearance. Throws InvalidArgument when a token falls outside the
/// evaluator's vocabulary.
std::vector<RunReport> score_records(std::span<const GenerationRecord> records,
                                     std::shared_ptr<const LanguageModel> evaluator, int jobs = 1);

/// Fewest significant digits that read back as exactly `v`.
std::string format_shortest(double v);
/// 100 * value with two decimals: 0.9254 -> "92.54".
std::string format_percent(double fraction);
/// Two decimals, never "-0.00".
std::string format_fixed2(double value);
/// Quotes a field containing a comma, quote, CR or LF; quotes are doubled.
std::string csv_field(std::string_view field);

inline constexpr const char* kSummaryHeader =
    "strategy,params,runs,diversity(%),diversity_std,rep-2(%),rep-3(%),rep-4(%),"
    "gen-length,gen-length_std,coherence,coherence_std";

/// Header plus one line per row, "\n" line endings. Throws InvalidArgument
/// for an empty row set.
std::string format_summary_csv(std::span<const SummaryRow> rows);
void write_summary_csv(const std::filesystem::path& path, std::span<const SummaryRow> rows);

}  // namespace csearch
