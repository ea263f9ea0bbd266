#include "csearch/summary.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <tuple>

#include "csearch/error.hpp"
#include "csearch/parallel.hpp"

namespace csearch {

namespace {

double mean_of(const std::vector<double>& xs) {
  return pairwise_sum(xs) / static_cast<double>(xs.size());
}

double population_std(const std::vector<double>& xs) {
  const double mu = mean_of(xs);
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - mu) * (xs[i] - mu);
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(xs.size()));
}

struct RunMeans {
  double diversity, rep2, rep3, rep4, gen_length;
  std::optional<double> coherence;
};

RunMeans run_means(const RunReport& run) {
  if (run.reports.empty()) throw InvalidArgument("run '" + run.strategy + "' has no reports");
  std::vector<double> div, r2, r3, r4, len, coh;
  for (const auto& r : run.reports) {
    div.push_back(r.diversity);
    r2.push_back(r.rep_n.at(2));
    r3.push_back(r.rep_n.at(3));
    r4.push_back(r.rep_n.at(4));
    len.push_back(r.gen_length);
    if (r.coherence) coh.push_back(*r.coherence);
  }
  RunMeans m{mean_of(div), mean_of(r2), mean_of(r3), mean_of(r4), mean_of(len), std::nullopt};
  // Coherence is reported only when every continuation could be scored.
  if (coh.size() == run.reports.size()) m.coherence = mean_of(coh);
  return m;
}

}  // namespace

std::string params_label(const DecodeParams& p) {
  std::string out;
  auto add = [&](std::string_view key, const std::string& value) {
    if (!out.empty()) out += ' ';
    out += key;
    out += '=';
    out += value;
  };
  if (p.k) add("k", std::to_string(*p.k));
  if (p.alpha) add("alpha", format_shortest(*p.alpha));
  if (p.p) add("p", format_shortest(*p.p));
  if (p.tau) add("tau", format_shortest(*p.tau));
  if (p.beam_width) add("beam_width", std::to_string(*p.beam_width));
  add("max_new_tokens", std::to_string(p.max_new_tokens));
  if (p.eos_token) add("eos", std::to_string(*p.eos_token));
  return out;
}

std::vector<SummaryRow> aggregate_runs(std::span<const RunReport> runs) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<RunMeans>> groups;
  for (const auto& run : runs) {
    auto key = std::make_pair(run.strategy, run.params);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(run_means(run));
  }

  std::vector<SummaryRow> rows;
  for (const auto& key : order) {
    const auto& means = groups.at(key);
    std::vector<double> div, r2, r3, r4, len, coh;
    for (const auto& m : means) {
      div.push_back(m.diversity);
      r2.push_back(m.rep2);
      r3.push_back(m.rep3);
      r4.push_back(m.rep4);
      len.push_back(m.gen_length);
      if (m.coherence) coh.push_back(*m.coherence);
    }
    SummaryRow row;
    row.strategy = key.first;
    row.params = key.second;
    row.runs = means.size();
    row.diversity = mean_of(div);
    row.diversity_std = population_std(div);
    row.rep2 = mean_of(r2);
    row.rep3 = mean_of(r3);
    row.rep4 = mean_of(r4);
    row.gen_length = mean_of(len);
    row.gen_length_std = population_std(len);
    if (coh.size() == means.size()) {
      row.coherence = mean_of(coh);
      row.coherence_std = population_std(coh);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<RunReport> score_records(std::span<const GenerationRecord> records,
                                     std::shared_ptr<const LanguageModel> evaluator, int jobs) {
  if (evaluator) {
    const int vocab = evaluator->vocab_size();
    for (const auto& r : records) {
      for (const auto* seq : {&r.prefix_tokens, &r.generated_tokens}) {
        for (TokenId t : *seq) {
          if (t < 0 || t >= vocab) {
            throw InvalidArgument("record '" + r.prefix_id + "' has token " + std::to_string(t) +
                                  " outside the evaluator vocabulary of " + std::to_string(vocab));
          }
        }
      }
    }
  }

  std::vector<MetricReport> reports(records.size());
  parallel_for(records.size(), jobs, [&](std::size_t i) {
    const auto& r = records[i];
    // Coherence is undefined without a prefix to condition on.
    auto eval = r.prefix_tokens.empty() ? nullptr : evaluator;
    reports[i] = evaluate_continuation(r.prefix_tokens, r.generated_tokens, eval);
  });

  using Key = std::tuple<std::string, std::string, std::uint64_t>;
  std::map<Key, std::size_t> index;
  std::vector<RunReport> runs;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    Key key{std::string(strategy_name(r.params.strategy)), params_label(r.params), r.run_seed};
    auto [it, inserted] = index.try_emplace(key, runs.size());
    if (inserted) runs.push_back(RunReport{std::get<0>(key), std::get<1>(key), r.run_seed, {}});
    runs[it->second].reports.push_back(std::move(reports[i]));
  }
  return runs;
}

std::string format_shortest(double v) {
  char buf[64];
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof buf, "%.0f", v == 0.0 ? 0.0 : v);
    return buf;
  }
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string format_fixed2(double value) {
  if (!std::isfinite(value)) throw InvalidArgument("cannot format a non-finite value");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string format_percent(double fraction) { return format_fixed2(100.0 * fraction); }

std::string csv_field(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_summary_csv(std::span<const SummaryRow> rows) {
  if (rows.empty()) throw InvalidArgument("summary needs at least one row");
  std::string out = kSummaryHeader;
  out += '\n';
  for (const auto& r : rows) {
    const std::string fields[] = {
        csv_field(r.strategy),
        csv_field(r.params),
        std::to_string(r.runs),
        format_percent(r.diversity),
        format_percent(r.diversity_std),
        format_percent(r.rep2),
        format_percent(r.rep3),
        format_percent(r.rep4),
        format_fixed2(r.gen_length),
        format_fixed2(r.gen_length_std),
        r.coherence ? format_fixed2(*r.coherence) : std::string(),
        r.coherence_std ? format_fixed2(*r.coherence_std) : std::string(),
    };
    for (std::size_t i = 0; i < std::size(fields); ++i) {
      if (i) out += ',';
      out += fields[i];
    }
    out += '\n';
  }
  return out;
}

void write_summary_csv(const std::filesystem::path& path, std::span<const SummaryRow> rows) {
  const std::string text = format_summary_csv(rows);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace csearch
