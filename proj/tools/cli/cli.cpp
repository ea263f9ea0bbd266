#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "csearch/config.hpp"
#include "csearch/corpus_io.hpp"
#include "csearch/error.hpp"
#include "csearch/metrics.hpp"
#include "csearch/model_loader.hpp"
#include "csearch/parallel.hpp"
#include "csearch/summary.hpp"
#include "csearch/tokenizer.hpp"
#include "pipeline.hpp"
#include "plot.hpp"
#include "selftest.hpp"

namespace csearch::cli {

namespace {

namespace fs = std::filesystem;

// Failure that should exit with the usage code.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

// Writes to `path`, or to `out` when no path was given.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_file(path, text);
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    items.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
  }
  return items;
}

template <typename T>
T parse_value(const std::string& s, const std::string& what) {
  std::istringstream is(s);
  T v{};
  if (!(is >> v) || !is.eof()) throw UsageError(what + ": cannot parse '" + s + "'");
  return v;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split_list(s)) {
    if (item.empty() || item.front() == '-') throw UsageError("bad seed '" + item + "'");
    seeds.push_back(parse_value<std::uint64_t>(item, "seed"));
  }
  if (seeds.empty()) throw UsageError("empty seed list");
  return seeds;
}

std::shared_ptr<const LanguageModel> load_model_or_throw(const std::string& path) {
  if (path.empty()) throw UsageError("a model path is required");
  return load_model(path);
}

std::vector<PrefixRecord> load_prefixes_or_throw(const std::string& path) {
  if (path.empty()) throw UsageError("a prefix file is required");
  return load_prefixes(path);
}

// ---- flag <-> config key -------------------------------------------------------

struct ConfigFlag {
  const char* flag;
  const char* key;
  bool is_path;
  const char* help;
};

constexpr ConfigFlag kConfigFlags[] = {
    {"--model", "model.path", true, "model file (*.manifest.json or *.mock.json)"},
    {"--strategy", "decoding.strategy", false, "greedy|beam|typical|top_k|nucleus|contrastive"},
    {"--k", "decoding.k", false, "candidate count (top_k, contrastive)"},
    {"--alpha", "decoding.alpha", false, "degeneration penalty weight (contrastive)"},
    {"--p", "decoding.p", false, "nucleus mass"},
    {"--tau", "decoding.tau", false, "typical mass"},
    {"--beam-width", "decoding.beam_width", false, "beam width"},
    {"--max-new-tokens", "decoding.max_new_tokens", false, "continuation length cap"},
    {"--eos", "decoding.eos", false, "end-of-sequence token id or 'none'"},
    {"--seed", "decoding.seed", false, "seed or comma list of seeds"},
    {"--prefixes", "data.prefixes", true, "JSONL prefix file"},
    {"--prefix-length", "data.prefix_length", false, "tokens kept per prefix (0 keeps all)"},
    {"--out", "output.records", true, "JSONL record output"},
    {"--summary", "output.summary", true, "summary CSV output"},
    {"--jobs", "run.jobs", false, "worker threads"},
};

struct GenerateFlags {
  std::string config;
  std::map<std::string, std::string> values;  // keyed by config key
  std::map<std::string, CLI::Option*> options;
  bool diagnostics = false;
  CLI::Option* diagnostics_opt = nullptr;
};

RunConfig resolve_run_config(const GenerateFlags& flags) {
  std::string config_path = flags.config;
  if (config_path.empty()) {
    if (const char* env = std::getenv(kConfigEnvVar); env && *env) config_path = env;
  }
  ConfigValues values;
  fs::path base = fs::current_path();
  if (!config_path.empty()) {
    values = parse_config_text(read_file(config_path));
    base = fs::absolute(config_path).parent_path();
  }

  auto given = [&](const std::string& key) { return flags.options.at(key)->count() > 0; };

  if (given("decoding.strategy")) {
    // A strategy switched on the command line drops the config file's
    // hyperparameters for the old strategy; flags themselves still must fit.
    const Strategy s = parse_strategy(flags.values.at("decoding.strategy"));
    const auto fields = DecodeParams::fields_for(s);
    for (const char* field : {"k", "alpha", "p", "tau", "beam_width"}) {
      const std::string key = std::string("decoding.") + field;
      if (std::find(fields.begin(), fields.end(), field) == fields.end() && !given(key)) values.erase(key);
    }
  }
  for (const auto& f : kConfigFlags) {
    if (!given(f.key)) continue;
    std::string v = flags.values.at(f.key);
    if (f.is_path && !v.empty()) v = fs::absolute(v).lexically_normal().string();
    values[f.key] = v;
  }
  if (flags.diagnostics_opt->count() > 0) values["output.diagnostics"] = "true";
  return build_run_config(values, base);
}

void add_generate_flags(CLI::App* sub, GenerateFlags& flags) {
  sub->add_option("--config", flags.config,
                  std::string("run configuration file (default: $") + kConfigEnvVar + ")");
  for (const auto& f : kConfigFlags) {
    flags.options[f.key] = sub->add_option(f.flag, flags.values[f.key], f.help);
  }
  flags.diagnostics_opt = sub->add_flag("--diagnostics", flags.diagnostics, "keep per-step diagnostics");
}

// ---- commands --------------------------------------------------------------------

int cmd_generate(const GenerateFlags& flags, std::ostream& err) {
  const RunConfig cfg = resolve_run_config(flags);
  if (!cfg.records_path) throw UsageError("generate needs an output path (--out or output.records)");

  auto model = load_model(cfg.model_path);
  const auto records = load_prefixes(cfg.prefixes_path);
  const auto prefixes = prepare_prefixes(records, cfg.prefix_length, *model);
  err << "[generate] " << prefixes.size() << " prefixes, strategy " << strategy_name(cfg.params.strategy)
      << ", " << cfg.seeds.size() << " seed(s), model " << model->describe() << '\n';

  const auto out = generate_records(model, prefixes, cfg.params, cfg.seeds, cfg.diagnostics, cfg.jobs,
                                    [&](std::string_view msg) { err << "[generate] " << msg << '\n'; });
  write_records(*cfg.records_path, out);
  err << "[generate] wrote " << out.size() << " records to " << cfg.records_path->string() << '\n';

  if (cfg.summary_path) {
    if (out.empty()) throw Error("no records to summarize");
    const auto runs = score_records(out, model, cfg.jobs);
    write_summary_csv(*cfg.summary_path, aggregate_runs(runs));
    err << "[generate] wrote summary to " << cfg.summary_path->string() << '\n';
  }
  return 0;
}

struct EvaluateFlags {
  std::string records, evaluator, out;
  int jobs = 1;
};

int cmd_evaluate(const EvaluateFlags& f, std::ostream& out, std::ostream& err) {
  const auto records = read_records(f.records);
  if (records.empty()) throw Error("no records in " + f.records);
  std::shared_ptr<const LanguageModel> evaluator;
  if (!f.evaluator.empty()) evaluator = load_model(f.evaluator);
  else err << "[evaluate] no evaluator given; coherence columns stay empty\n";
  const auto runs = score_records(records, evaluator, f.jobs);
  const auto rows = aggregate_runs(runs);
  emit(f.out, format_summary_csv(rows), out);
  err << "[evaluate] " << records.size() << " records, " << runs.size() << " run(s), " << rows.size()
      << " summary row(s)\n";
  return 0;
}

struct CorpusFlags {
  std::string model, prefixes, out;
  std::size_t prefix_length = 0;
  int jobs = 1;
};

int cmd_isotropy(const CorpusFlags& f, const std::string& layer, std::ostream& out, std::ostream& err) {
  auto model = load_model_or_throw(f.model);
  const auto prefixes = prepare_prefixes(load_prefixes_or_throw(f.prefixes), f.prefix_length, *model);

  int layer_index = 0;  // 0: final, -1: all, n: 1-based layer
  if (layer == "final" || layer.empty()) {
    layer_index = 0;
  } else if (layer == "all") {
    layer_index = -1;
  } else {
    layer_index = parse_value<int>(layer, "--layer");
    if (layer_index < 1 || layer_index > model->num_layers()) {
      throw UsageError("--layer must be 'final', 'all' or in [1, " + std::to_string(model->num_layers()) + "]");
    }
  }

  std::vector<const Prefix*> usable;
  for (const auto& p : prefixes) {
    if (p.tokens.size() >= 2) usable.push_back(&p);
  }
  if (usable.size() < prefixes.size()) {
    err << "[isotropy] warning: skipped " << prefixes.size() - usable.size()
        << " sequence(s) shorter than 2 tokens\n";
  }
  if (usable.empty()) throw Error("no sequence has at least 2 tokens");

  std::vector<RepSequence> corpus(usable.size());
  parallel_for(usable.size(), f.jobs,
               [&](std::size_t i) { corpus[i] = collect_representations(model, usable[i]->tokens); });

  std::string csv = "layer,isotropy\n";
  if (layer_index == 0) {
    csv += "final," + g17(isotropy(corpus)) + "\n";
  } else if (layer_index > 0) {
    csv += std::to_string(layer_index) + "," + g17(layerwise_isotropy(corpus, layer_index - 1)) + "\n";
  } else {
    for (int l = 1; l <= model->num_layers(); ++l) {
      csv += std::to_string(l) + "," + g17(layerwise_isotropy(corpus, l - 1)) + "\n";
    }
  }
  emit(f.out, csv, out);
  err << "[isotropy] " << corpus.size() << " sequences\n";
  return 0;
}

int cmd_dpvar(const CorpusFlags& f, const DpVarianceSettings& settings, const std::string& svg,
              std::ostream& out, std::ostream& err) {
  auto model = load_model_or_throw(f.model);
  const auto prefixes = prepare_prefixes(load_prefixes_or_throw(f.prefixes), f.prefix_length, *model);
  if (prefixes.empty()) throw UsageError("dpvar needs at least one prefix");
  std::vector<TokenSequence> seqs;
  for (const auto& p : prefixes) seqs.push_back(p.tokens);

  const auto curve = averaged_dp_variance(model, seqs, settings, f.jobs);
  const double s = isotropy_dpvar_scalar(curve);
  std::string csv = "t,f\n";
  for (std::size_t t = 0; t < curve.size(); ++t) csv += std::to_string(t + 1) + "," + g17(curve[t]) + "\n";
  csv += "s," + g17(s) + "\n";
  emit(f.out, csv, out);
  if (!svg.empty()) {
    write_file(svg, plot::line_chart_svg({{model->describe(), curve}},
                                         "Averaged degeneration penalty variance", "decoding step t",
                                         "f(t)"));
  }
  err << "[dpvar] " << seqs.size() << " prefixes, T=" << settings.steps << ", s=" << g17(s) << '\n';
  return 0;
}

struct SweepFlags {
  CorpusFlags corpus;
  std::string strategy = "contrastive";
  std::vector<std::string> grid;
  std::string evaluator;
  int max_new_tokens = 200;
  std::string eos;
  std::string seeds = "0";
};

struct Axis {
  std::string name;
  std::vector<double> values;
};

std::vector<Axis> parse_grid(const std::vector<std::string>& specs, Strategy strategy, std::ostream& err) {
  const auto fields = DecodeParams::fields_for(strategy);
  std::vector<Axis> axes;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw UsageError("grid entry '" + spec + "' is not name=v1,v2,...");
    const std::string name = spec.substr(0, eq);
    if (std::find(fields.begin(), fields.end(), name) == fields.end()) {
      throw UsageError("grid parameter '" + name + "' does not apply to strategy " +
                       std::string(strategy_name(strategy)));
    }
    auto it = std::find_if(axes.begin(), axes.end(), [&](const Axis& a) { return a.name == name; });
    if (it == axes.end()) {
      axes.push_back(Axis{name, {}});
      it = axes.end() - 1;
    }
    for (const auto& item : split_list(spec.substr(eq + 1))) {
      const double v = parse_value<double>(item, "grid value for " + name);
      if (std::find(it->values.begin(), it->values.end(), v) != it->values.end()) {
        err << "[sweep] warning: dropping duplicate grid value " << name << "=" << item << '\n';
        continue;
      }
      it->values.push_back(v);
    }
    if (it->values.empty()) throw UsageError("grid parameter '" + name + "' has no values");
  }
  if (axes.empty()) throw UsageError("sweep needs at least one --grid entry");
  return axes;
}

void set_field(DecodeParams& p, const std::string& name, double v) {
  auto as_int = [&] {
    if (v != std::floor(v)) throw UsageError(name + " must be an integer, got " + format_shortest(v));
    return static_cast<int>(v);
  };
  if (name == "k") p.k = as_int();
  else if (name == "alpha") p.alpha = v;
  else if (name == "p") p.p = v;
  else if (name == "tau") p.tau = v;
  else if (name == "beam_width") p.beam_width = as_int();
}

int cmd_sweep(const SweepFlags& f, std::ostream& out, std::ostream& err) {
  const Strategy strategy = parse_strategy(f.strategy);
  const auto axes = parse_grid(f.grid, strategy, err);
  const auto seeds = parse_seeds(f.seeds);

  std::vector<DecodeParams> points;
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    DecodeParams p = DecodeParams::defaults(strategy);
    p.max_new_tokens = f.max_new_tokens;
    if (!f.eos.empty() && f.eos != "none") p.eos_token = parse_value<TokenId>(f.eos, "--eos");
    for (std::size_t a = 0; a < axes.size(); ++a) set_field(p, axes[a].name, axes[a].values[idx[a]]);
    p.validate();
    points.push_back(p);
    std::size_t a = axes.size();
    while (a > 0 && ++idx[a - 1] == axes[a - 1].values.size()) idx[--a] = 0;
    if (a == 0) break;
  }

  auto model = load_model_or_throw(f.corpus.model);
  std::shared_ptr<const LanguageModel> evaluator;
  if (!f.evaluator.empty()) evaluator = load_model(f.evaluator);
  const auto prefixes =
      prepare_prefixes(load_prefixes_or_throw(f.corpus.prefixes), f.corpus.prefix_length, *model);
  if (prefixes.empty()) throw UsageError("sweep needs at least one prefix");

  std::string csv;
  for (const auto& a : axes) csv += a.name + ",";
  csv += "runs,diversity(%),diversity_std,coherence,coherence_std,gen-length,gen-length_std\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto records = generate_records(model, prefixes, points[i], seeds, false, f.corpus.jobs);
    const auto rows = aggregate_runs(score_records(records, evaluator, f.corpus.jobs));
    const auto& r = rows.front();
    for (const auto& a : axes) {
      const auto& p = points[i];
      double v = 0.0;
      if (a.name == "k") v = *p.k;
      else if (a.name == "alpha") v = *p.alpha;
      else if (a.name == "p") v = *p.p;
      else if (a.name == "tau") v = *p.tau;
      else if (a.name == "beam_width") v = *p.beam_width;
      csv += format_shortest(v) + ",";
    }
    csv += std::to_string(r.runs) + "," + format_percent(r.diversity) + "," + format_percent(r.diversity_std) +
           "," + (r.coherence ? format_fixed2(*r.coherence) : "") + "," +
           (r.coherence_std ? format_fixed2(*r.coherence_std) : "") + "," + format_fixed2(r.gen_length) + "," +
           format_fixed2(r.gen_length_std) + "\n";
    err << "[sweep] point " << i + 1 << "/" << points.size() << " (" << params_label(points[i]) << ")\n";
  }
  emit(f.corpus.out, csv, out);
  return 0;
}

struct HeatmapFlags {
  std::string model, text, tokens, out, svg;
};

int cmd_heatmap(const HeatmapFlags& f, std::ostream& out, std::ostream& err) {
  if (!f.text.empty() && !f.tokens.empty()) throw UsageError("give either --text or --tokens, not both");
  TokenSequence tokens;
  if (!f.tokens.empty()) {
    for (const auto& item : split_list(f.tokens)) tokens.push_back(parse_value<TokenId>(item, "--tokens"));
  } else {
    tokens = encode_bytes(f.text);
  }
  if (tokens.empty()) throw UsageError("heatmap needs a non-empty --text or --tokens");

  auto model = load_model_or_throw(f.model);
  for (TokenId t : tokens) {
    if (t < 0 || t >= model->vocab_size()) {
      throw UsageError("token " + std::to_string(t) + " outside the model vocabulary");
    }
  }
  const auto reps = collect_representations(model, tokens).reps;
  const auto m = token_similarity_matrix(reps);

  std::string csv = "token";
  for (TokenId t : tokens) csv += "," + std::to_string(t);
  csv += '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    csv += std::to_string(tokens[i]);
    for (double v : m[i]) csv += "," + g17(v);
    csv += '\n';
  }
  emit(f.out, csv, out);
  if (!f.svg.empty()) {
    std::vector<std::string> labels;
    for (TokenId t : tokens) labels.push_back(std::to_string(t));
    write_file(f.svg, plot::heatmap_svg(m, labels, "Token similarity"));
  }
  err << "[heatmap] " << tokens.size() << "x" << tokens.size() << " matrix\n";
  return 0;
}

void report(const std::exception& e, std::ostream& err) {
  if (const auto* v = dynamic_cast<const ValidationError*>(&e)) {
    err << "error: invalid input:\n";
    for (const auto& p : v->problems()) err << "  - " << p << '\n';
    return;
  }
  err << "error: " << e.what() << '\n';
}

bool is_usage_error(const std::exception& e) {
  return dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
         dynamic_cast<const InvalidArgument*>(&e) || dynamic_cast<const ConfigError*>(&e);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive search and decoding-analysis toolkit", "csearch"};
  app.require_subcommand(1);

  GenerateFlags gen;
  auto* generate = app.add_subcommand("generate", "decode every prefix and write generation records");
  add_generate_flags(generate, gen);

  EvaluateFlags ev;
  auto* evaluate = app.add_subcommand("evaluate", "score records and write a summary CSV");
  evaluate->add_option("--records", ev.records, "JSONL records from generate")->required();
  evaluate->add_option("--evaluator", ev.evaluator, "model used for coherence");
  evaluate->add_option("--out", ev.out, "summary CSV (default: stdout)");
  evaluate->add_option("--jobs", ev.jobs, "worker threads")->check(CLI::PositiveNumber);

  CorpusFlags iso;
  std::string layer = "final";
  auto* isotropy_cmd = app.add_subcommand("isotropy", "isotropy of a model's representations over a corpus");
  isotropy_cmd->add_option("--model", iso.model, "model file")->required();
  isotropy_cmd->add_option("--prefixes", iso.prefixes, "JSONL corpus")->required();
  isotropy_cmd->add_option("--prefix-length", iso.prefix_length, "tokens kept per text (0 keeps all)");
  isotropy_cmd->add_option("--layer", layer, "final (default), all, or a 1-based layer");
  isotropy_cmd->add_option("--out", iso.out, "CSV output (default: stdout)");
  isotropy_cmd->add_option("--jobs", iso.jobs, "worker threads")->check(CLI::PositiveNumber);

  CorpusFlags dp;
  dp.prefix_length = 40;
  DpVarianceSettings dps;
  std::string dp_svg;
  auto* dpvar = app.add_subcommand("dpvar", "averaged degeneration-penalty variance curve f(t)");
  dpvar->add_option("--model", dp.model, "model file")->required();
  dpvar->add_option("--prefixes", dp.prefixes, "JSONL prefix file")->required();
  dpvar->add_option("--prefix-length", dp.prefix_length, "tokens kept per prefix (0 keeps all)");
  dpvar->add_option("--k", dps.k, "candidate count")->check(CLI::PositiveNumber);
  dpvar->add_option("--alpha", dps.alpha, "degeneration penalty weight")->check(CLI::Range(0.0, 1.0));
  dpvar->add_option("--steps", dps.steps, "T, number of decoding steps")->check(CLI::PositiveNumber);
  dpvar->add_option("--out", dp.out, "CSV output (default: stdout)");
  dpvar->add_option("--svg", dp_svg, "also write a line chart");
  dpvar->add_option("--jobs", dp.jobs, "worker threads")->check(CLI::PositiveNumber);

  SweepFlags sw;
  sw.corpus.prefix_length = 40;
  auto* sweep = app.add_subcommand("sweep", "generate and evaluate over a hyperparameter grid");
  sweep->add_option("--model", sw.corpus.model, "model file")->required();
  sweep->add_option("--prefixes", sw.corpus.prefixes, "JSONL prefix file")->required();
  sweep->add_option("--strategy", sw.strategy, "decoding strategy");
  sweep->add_option("--grid", sw.grid, "name=v1,v2,... (repeatable)")->required();
  sweep->add_option("--evaluator", sw.evaluator, "model used for coherence");
  sweep->add_option("--max-new-tokens", sw.max_new_tokens, "continuation length cap");
  sweep->add_option("--eos", sw.eos, "end-of-sequence token id");
  sweep->add_option("--seed", sw.seeds, "seed or comma list of seeds");
  sweep->add_option("--prefix-length", sw.corpus.prefix_length, "tokens kept per prefix (0 keeps all)");
  sweep->add_option("--out", sw.corpus.out, "CSV output (default: stdout)");
  sweep->add_option("--jobs", sw.corpus.jobs, "worker threads")->check(CLI::PositiveNumber);

  HeatmapFlags hm;
  auto* heatmap = app.add_subcommand("heatmap", "token-by-token cosine similarity matrix");
  heatmap->add_option("--model", hm.model, "model file")->required();
  heatmap->add_option("--text", hm.text, "text, tokenized as bytes");
  heatmap->add_option("--tokens", hm.tokens, "comma-separated token ids");
  heatmap->add_option("--out", hm.out, "CSV output (default: stdout)");
  heatmap->add_option("--svg", hm.svg, "also write an SVG heatmap");

  std::string selftest_model;
  auto* selftest = app.add_subcommand("selftest", "run the embedded oracle checks");
  selftest->add_option("--model", selftest_model, "also check that this model file loads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*generate) return cmd_generate(gen, err);
    if (*evaluate) return cmd_evaluate(ev, out, err);
    if (*isotropy_cmd) return cmd_isotropy(iso, layer, out, err);
    if (*dpvar) return cmd_dpvar(dp, dps, dp_svg, out, err);
    if (*sweep) return cmd_sweep(sw, out, err);
    if (*heatmap) return cmd_heatmap(hm, out, err);
    if (*selftest) {
      std::optional<fs::path> m;
      if (!selftest_model.empty()) m = selftest_model;
      return run_selftest(out, m) ? 0 : 1;
    }
  } catch (const std::exception& e) {
    report(e, err);
    return is_usage_error(e) ? 2 : 1;
  }
  return 2;
}

}  // namespace csearch::cli
