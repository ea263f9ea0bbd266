#include "csearch/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "csearch/error.hpp"
#include "csearch/summary.hpp"
#include "csearch/transformer.hpp"

namespace csearch {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return value;
}

std::optional<bool> parse_bool(std::string_view s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  return std::nullopt;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "model.path",       "decoding.strategy",       "decoding.k",
      "decoding.alpha",   "decoding.p",              "decoding.tau",
      "decoding.beam_width", "decoding.max_new_tokens", "decoding.eos",
      "decoding.seed",    "data.prefixes",           "data.prefix_length",
      "output.records",   "output.summary",          "output.diagnostics",
      "run.jobs",
  };
  return keys;
}

ConfigValues parse_config_text(std::string_view text) {
  ConfigValues values;
  std::string section;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++number;
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    const std::string where = "line " + std::to_string(number);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ParseError(where + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ParseError(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(where + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(where + ": empty key");
    if (section.empty()) throw ParseError(where + ": key '" + std::string(key) + "' outside any section");
    const std::string full = section + "." + std::string(key);
    if (!values.emplace(full, std::string(value)).second) {
      throw ParseError(where + ": key '" + full + "' given twice");
    }
  }
  return values;
}

RunConfig build_run_config(const ConfigValues& values, const std::filesystem::path& base_dir,
                           bool check_paths) {
  std::vector<std::string> problems;
  const auto& known = config_keys();
  for (const auto& [key, value] : values) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      problems.push_back("unknown key '" + key + "'");
    }
  }
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    auto it = values.find(key);
    if (it == values.end()) return std::nullopt;
    return it->second;
  };

  RunConfig cfg;

  Strategy strategy = Strategy::contrastive;
  if (auto s = get("decoding.strategy")) {
    try {
      strategy = parse_strategy(*s);
    } catch (const InvalidArgument& e) {
      problems.push_back(e.what());
    }
  }
  cfg.params = DecodeParams::defaults(strategy);
  const auto fields = DecodeParams::fields_for(strategy);
  auto applies = [&](std::string_view f) {
    return std::find(fields.begin(), fields.end(), f) != fields.end();
  };

  auto int_field = [&](const std::string& field, std::optional<int>& slot) {
    auto v = get("decoding." + field);
    if (!v) return;
    if (!applies(field)) {
      problems.push_back("decoding." + field + " does not apply to strategy " +
                         std::string(strategy_name(strategy)));
      return;
    }
    if (auto n = parse_number<int>(*v)) {
      slot = *n;
    } else {
      problems.push_back("decoding." + field + ": not an integer: '" + *v + "'");
    }
  };
  auto double_field = [&](const std::string& field, std::optional<double>& slot) {
    auto v = get("decoding." + field);
    if (!v) return;
    if (!applies(field)) {
      problems.push_back("decoding." + field + " does not apply to strategy " +
                         std::string(strategy_name(strategy)));
      return;
    }
    if (auto n = parse_number<double>(*v)) {
      slot = *n;
    } else {
      problems.push_back("decoding." + field + ": not a number: '" + *v + "'");
    }
  };
  int_field("k", cfg.params.k);
  double_field("alpha", cfg.params.alpha);
  double_field("p", cfg.params.p);
  double_field("tau", cfg.params.tau);
  int_field("beam_width", cfg.params.beam_width);

  if (auto v = get("decoding.max_new_tokens")) {
    if (auto n = parse_number<int>(*v)) {
      cfg.params.max_new_tokens = *n;
    } else {
      problems.push_back("decoding.max_new_tokens: not an integer: '" + *v + "'");
    }
  }
  if (auto v = get("decoding.eos"); v && *v != "none" && !v->empty()) {
    if (auto n = parse_number<TokenId>(*v)) {
      cfg.params.eos_token = *n;
    } else {
      problems.push_back("decoding.eos: not a token id: '" + *v + "'");
    }
  }
  if (auto v = get("decoding.seed")) {
    cfg.seeds.clear();
    std::set<std::uint64_t> seen;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto t = trim(item);
      if (auto n = parse_number<std::uint64_t>(t)) {
        if (seen.insert(*n).second) {
          cfg.seeds.push_back(*n);
        } else {
          problems.push_back("decoding.seed: seed " + std::string(t) + " listed twice");
        }
      } else {
        problems.push_back("decoding.seed: not an unsigned integer: '" + std::string(t) + "'");
      }
    }
    if (cfg.seeds.empty()) problems.push_back("decoding.seed: empty seed list");
  }
  try {
    cfg.params.validate();
  } catch (const InvalidArgument& e) {
    problems.push_back(e.what());
  }

  if (auto v = get("model.path"); v && !v->empty()) {
    cfg.model_path = resolve(base_dir, *v);
  } else {
    problems.push_back("missing required key 'model.path'");
  }
  if (auto v = get("data.prefixes"); v && !v->empty()) {
    cfg.prefixes_path = resolve(base_dir, *v);
  } else {
    problems.push_back("missing required key 'data.prefixes'");
  }
  if (auto v = get("data.prefix_length")) {
    if (auto n = parse_number<std::size_t>(*v)) {
      cfg.prefix_length = *n;
    } else {
      problems.push_back("data.prefix_length: not a non-negative integer: '" + *v + "'");
    }
  }
  if (auto v = get("output.records"); v && !v->empty()) cfg.records_path = resolve(base_dir, *v);
  if (auto v = get("output.summary"); v && !v->empty()) cfg.summary_path = resolve(base_dir, *v);
  if (auto v = get("output.diagnostics")) {
    if (auto b = parse_bool(*v)) {
      cfg.diagnostics = *b;
    } else {
      problems.push_back("output.diagnostics: not a boolean: '" + *v + "'");
    }
  }
  if (auto v = get("run.jobs")) {
    auto n = parse_number<int>(*v);
    if (n && *n >= 1) {
      cfg.jobs = *n;
    } else {
      problems.push_back("run.jobs: expected a positive integer, got '" + *v + "'");
    }
  }

  if (check_paths) {
    namespace fs = std::filesystem;
    if (!cfg.model_path.empty()) {
      if (!fs::is_regular_file(cfg.model_path)) {
        problems.push_back("model file not found: " + cfg.model_path.string());
      } else if (cfg.model_path.string().ends_with(".manifest.json") &&
                 !fs::is_regular_file(blob_path_for(cfg.model_path))) {
        problems.push_back("weight blob not found: " + blob_path_for(cfg.model_path).string());
      }
    }
    if (!cfg.prefixes_path.empty() && !fs::is_regular_file(cfg.prefixes_path)) {
      problems.push_back("prefix file not found: " + cfg.prefixes_path.string());
    }
    for (const auto* out : {&cfg.records_path, &cfg.summary_path}) {
      if (!*out) continue;
      const auto dir = (*out)->parent_path();
      if (!dir.empty() && !fs::is_directory(dir)) {
        problems.push_back("output directory not found: " + dir.string());
      }
    }
  }

  if (!problems.empty()) throw ValidationError(problems);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, bool check_paths) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ConfigValues values;
  try {
    values = parse_config_text(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return build_run_config(values, path.parent_path(), check_paths);
}

std::string format_config(const RunConfig& c) {
  std::ostringstream out;
  const auto& p = c.params;
  out << "[model]\n";
  out << "path = " << c.model_path.string() << "\n\n";
  out << "[decoding]\n";
  out << "strategy = " << strategy_name(p.strategy) << '\n';
  if (p.k) out << "k = " << *p.k << '\n';
  if (p.alpha) out << "alpha = " << format_shortest(*p.alpha) << '\n';
  if (p.p) out << "p = " << format_shortest(*p.p) << '\n';
  if (p.tau) out << "tau = " << format_shortest(*p.tau) << '\n';
  if (p.beam_width) out << "beam_width = " << *p.beam_width << '\n';
  out << "max_new_tokens = " << p.max_new_tokens << '\n';
  out << "eos = " << (p.eos_token ? std::to_string(*p.eos_token) : std::string("none")) << '\n';
  out << "seed = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) out << (i ? "," : "") << c.seeds[i];
  out << "\n\n";
  out << "[data]\n";
  out << "prefixes = " << c.prefixes_path.string() << '\n';
  out << "prefix_length = " << c.prefix_length << "\n\n";
  out << "[output]\n";
  if (c.records_path) out << "records = " << c.records_path->string() << '\n';
  if (c.summary_path) out << "summary = " << c.summary_path->string() << '\n';
  out << "diagnostics = " << (c.diagnostics ? "true" : "false") << "\n\n";
  out << "[run]\n";
  out << "jobs = " << c.jobs << '\n';
  return out.str();
}

}  // namespace csearch
