#include "csearch/corpus_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "csearch/error.hpp"
#include "csearch/tokenizer.hpp"
#include "json.hpp"

namespace csearch {

namespace {

using json = nlohmann::ordered_json;

std::string dump_line(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line, number);
  }
  if (in.bad()) throw IoError("read failed for " + path.string());
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

std::uint64_t parse_seed(const json& j, const char* field) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used, 10);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || s.front() == '-') {
      throw ParseError(std::string("field '") + field + "' is not a decimal seed: " + s);
    }
    return v;
  }
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  throw ParseError(std::string("field '") + field + "' must be a decimal string");
}

json params_to_json(const DecodeParams& p) {
  json j;
  j["strategy"] = std::string(strategy_name(p.strategy));
  if (p.k) j["k"] = *p.k;
  if (p.alpha) j["alpha"] = *p.alpha;
  if (p.p) j["p"] = *p.p;
  if (p.tau) j["tau"] = *p.tau;
  if (p.beam_width) j["beam_width"] = *p.beam_width;
  j["max_new_tokens"] = p.max_new_tokens;
  j["eos"] = p.eos_token ? json(*p.eos_token) : json(nullptr);
  return j;
}

DecodeParams params_from_json(const json& j) {
  DecodeParams p;
  p.strategy = parse_strategy(j.at("strategy").get<std::string>());
  if (j.contains("k")) p.k = j["k"].get<int>();
  if (j.contains("alpha")) p.alpha = j["alpha"].get<double>();
  if (j.contains("p")) p.p = j["p"].get<double>();
  if (j.contains("tau")) p.tau = j["tau"].get<double>();
  if (j.contains("beam_width")) p.beam_width = j["beam_width"].get<int>();
  p.max_new_tokens = j.at("max_new_tokens").get<int>();
  if (j.contains("eos") && !j["eos"].is_null()) p.eos_token = j["eos"].get<TokenId>();
  return p;
}

json step_to_json(const StepDiagnostics& s) {
  json j;
  j["token"] = s.token;
  j["p"] = s.model_confidence;
  if (s.degeneration_penalty) j["penalty"] = *s.degeneration_penalty;
  if (s.dp_variance) j["dp_variance"] = *s.dp_variance;
  if (!s.candidates.empty()) {
    json c = json::array();
    for (const auto& cand : s.candidates) c.push_back(json::array({cand.token, cand.probability, cand.penalty}));
    j["candidates"] = std::move(c);
  }
  return j;
}

StepDiagnostics step_from_json(const json& j) {
  StepDiagnostics s;
  s.token = j.at("token").get<TokenId>();
  s.model_confidence = j.at("p").get<double>();
  if (j.contains("penalty")) s.degeneration_penalty = j["penalty"].get<double>();
  if (j.contains("dp_variance")) s.dp_variance = j["dp_variance"].get<double>();
  if (j.contains("candidates")) {
    for (const auto& c : j["candidates"]) {
      s.candidates.push_back(
          CandidateScore{c.at(0).get<TokenId>(), c.at(1).get<double>(), c.at(2).get<double>()});
    }
  }
  return s;
}

}  // namespace

std::vector<PrefixRecord> load_prefixes(const std::filesystem::path& path) {
  std::vector<PrefixRecord> records;
  std::vector<std::string> problems;
  std::map<std::string, std::size_t> seen;
  for_each_line(path, [&](const std::string& line, std::size_t number) {
    const std::string where = path.string() + ":" + std::to_string(number);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": malformed JSON: " + e.what());
    }
    if (!j.is_object()) throw ParseError(where + ": expected a JSON object");

    PrefixRecord r;
    try {
      if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
        problems.push_back(where + ": missing or empty 'id'");
        return;
      }
      r.id = j["id"].get<std::string>();
      const bool has_text = j.contains("prefix_text") && !j["prefix_text"].is_null();
      const bool has_tokens = j.contains("prefix_tokens") && !j["prefix_tokens"].is_null();
      if (has_text == has_tokens) {
        problems.push_back(where + ": exactly one of 'prefix_text' and 'prefix_tokens' is required");
        return;
      }
      if (has_text) r.prefix_text = j["prefix_text"].get<std::string>();
      if (has_tokens) {
        r.prefix_tokens = j["prefix_tokens"].get<TokenSequence>();
        for (TokenId t : *r.prefix_tokens) {
          if (t < 0) {
            problems.push_back(where + ": negative token id");
            return;
          }
        }
      }
      if (j.contains("reference_text") && !j["reference_text"].is_null()) {
        r.reference_text = j["reference_text"].get<std::string>();
      }
    } catch (const json::exception& e) {
      problems.push_back(where + ": " + e.what());
      return;
    }
    if (auto it = seen.find(r.id); it != seen.end()) {
      problems.push_back(where + ": duplicate id '" + r.id + "' (first seen on line " +
                         std::to_string(it->second) + ")");
      return;
    }
    seen.emplace(r.id, number);
    records.push_back(std::move(r));
  });
  if (!problems.empty()) throw ValidationError(problems);
  return records;
}

void write_prefixes(const std::filesystem::path& path, std::span<const PrefixRecord> records) {
  std::vector<std::string> lines;
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    if (r.prefix_text) j["prefix_text"] = *r.prefix_text;
    if (r.prefix_tokens) j["prefix_tokens"] = *r.prefix_tokens;
    if (r.reference_text) j["reference_text"] = *r.reference_text;
    lines.push_back(dump_line(j));
  }
  write_lines(path, lines);
}

TokenSequence prefix_tokens(const PrefixRecord& record, std::size_t max_tokens) {
  TokenSequence tokens = record.prefix_tokens ? *record.prefix_tokens
                                              : encode_bytes(record.prefix_text.value_or(""));
  if (max_tokens > 0 && tokens.size() > max_tokens) tokens.resize(max_tokens);
  return tokens;
}

std::string record_to_json_line(const GenerationRecord& r) {
  json j;
  j["prefix_id"] = r.prefix_id;
  j["strategy"] = std::string(strategy_name(r.params.strategy));
  j["params"] = params_to_json(r.params);
  j["seed"] = std::to_string(r.run_seed);
  j["stream_seed"] = std::to_string(r.params.seed);
  j["prefix_tokens"] = r.prefix_tokens;
  j["generated_tokens"] = r.generated_tokens;
  j["generated_text"] = r.generated_text ? json(*r.generated_text) : json(nullptr);
  j["stopped_at_eos"] = r.stopped_at_eos;
  if (!r.diagnostics.empty()) {
    json steps = json::array();
    for (const auto& s : r.diagnostics) steps.push_back(step_to_json(s));
    j["diagnostics"] = std::move(steps);
  }
  j["wall_time_ms"] = r.wall_time_ms;
  return dump_line(j);
}

GenerationRecord record_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  GenerationRecord r;
  try {
    r.prefix_id = j.at("prefix_id").get<std::string>();
    r.params = params_from_json(j.at("params"));
    if (j.contains("strategy") && j["strategy"].get<std::string>() != strategy_name(r.params.strategy)) {
      throw ParseError("'strategy' disagrees with params.strategy");
    }
    r.run_seed = parse_seed(j.at("seed"), "seed");
    r.params.seed = j.contains("stream_seed") ? parse_seed(j["stream_seed"], "stream_seed") : r.run_seed;
    r.prefix_tokens = j.value("prefix_tokens", TokenSequence{});
    r.generated_tokens = j.at("generated_tokens").get<TokenSequence>();
    if (j.contains("generated_text") && !j["generated_text"].is_null()) {
      r.generated_text = j["generated_text"].get<std::string>();
    }
    r.stopped_at_eos = j.value("stopped_at_eos", false);
    if (j.contains("diagnostics")) {
      for (const auto& s : j["diagnostics"]) r.diagnostics.push_back(step_from_json(s));
    }
    r.wall_time_ms = j.value("wall_time_ms", 0.0);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad record: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("bad record: ") + e.what());
  }
  return r;
}

void write_records(const std::filesystem::path& path, std::span<const GenerationRecord> records) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(record_to_json_line(r));
  write_lines(path, lines);
}

std::vector<GenerationRecord> read_records(const std::filesystem::path& path) {
  std::vector<GenerationRecord> out;
  for_each_line(path, [&](const std::string& line, std::size_t number) {
    try {
      out.push_back(record_from_json_line(line));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  });
  return out;
}

std::string strip_volatile_fields(const std::string& line) {
  json j = json::parse(line);
  for (const char* field : kVolatileRecordFields) j.erase(field);
  return dump_line(j);
}

}  // namespace csearch
