#include "csearch/model_loader.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "csearch/error.hpp"
#include "csearch/transformer.hpp"
#include "json.hpp"

namespace csearch {

namespace {

using json = nlohmann::ordered_json;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

MockSpec parse_mock_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("mock spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("mock spec must be a JSON object");

  static const char* known[] = {"format",      "vocab_size",     "hidden_dim",       "context_order",
                                "max_context", "preset",         "seed",             "logit_scale",
                                "shared_cos",  "layer_shared_cos", "transitions",    "default_logits",
                                "rep_table", "rep_key"};
  for (const auto& item : j.items()) {
    if (std::find(std::begin(known), std::end(known), item.key()) == std::end(known)) {
      throw ConfigError("unknown mock spec field '" + item.key() + "'");
    }
  }

  try {
    const int vocab = j.at("vocab_size").get<int>();
    const int hidden = j.at("hidden_dim").get<int>();
    const int order = j.value("context_order", 1);

    MockSpec spec;
    const std::string preset = j.value("preset", std::string());
    if (preset == "repeat_trap") {
      spec = repeat_trap_spec(vocab, j.value("shared_cos", 0.0));
      spec.hidden_dim = hidden;
      if (order != spec.context_order) throw ConfigError("repeat_trap preset needs context_order 1");
      if (!j.contains("shared_cos") && j.contains("layer_shared_cos")) spec.shared_cos.reset();
    } else if (preset == "random") {
      spec = random_mock_spec(j.value("seed", std::uint64_t{0}), vocab, hidden, order,
                              j.value("logit_scale", 2.0));
    } else if (preset.empty()) {
      spec.vocab_size = vocab;
      spec.hidden_dim = hidden;
      spec.context_order = order;
    } else {
      throw ConfigError("unknown mock preset '" + preset + "'");
    }

    if (j.contains("max_context")) spec.max_context = j["max_context"].get<std::size_t>();
    if (j.contains("rep_key")) {
      const auto key = j["rep_key"].get<std::string>();
      if (key == "token") spec.rep_key = RepKey::token;
      else if (key == "position") spec.rep_key = RepKey::position;
      else throw ConfigError("rep_key must be 'token' or 'position', got '" + key + "'");
    }
    if (j.contains("transitions")) {
      spec.transition.clear();
      for (const auto& row : j["transitions"]) {
        auto ctx = row.at("context").get<TokenSequence>();
        if (!spec.transition.emplace(ctx, row.at("logits").get<std::vector<double>>()).second) {
          throw ConfigError("duplicate transition context");
        }
      }
    }
    if (j.contains("default_logits")) spec.default_logits = j["default_logits"].get<std::vector<double>>();
    if (j.contains("rep_table")) {
      spec.rep_table = j["rep_table"].get<std::vector<Representation>>();
      spec.shared_cos.reset();
    }
    if (j.contains("shared_cos") && !j["shared_cos"].is_null()) {
      spec.shared_cos = j["shared_cos"].get<double>();
    }
    if (j.contains("layer_shared_cos")) {
      spec.layer_shared_cos = j["layer_shared_cos"].get<std::vector<double>>();
    }
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad mock spec: ") + e.what());
  }
}

MockSpec load_mock_spec(const std::filesystem::path& path) {
  try {
    return parse_mock_spec(read_text(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_mock_spec(const std::filesystem::path& path, const MockSpec& spec) {
  // Round through MockLM so derived tables are filled in.
  const MockLM model(spec);
  const auto& s = model.spec();
  json j;
  j["format"] = "csearch-mock";
  j["vocab_size"] = s.vocab_size;
  j["hidden_dim"] = s.hidden_dim;
  j["context_order"] = s.context_order;
  j["max_context"] = s.max_context;
  j["rep_key"] = s.rep_key == RepKey::token ? "token" : "position";
  json rows = json::array();
  for (const auto& [ctx, logits] : s.transition) rows.push_back(json{{"context", ctx}, {"logits", logits}});
  j["transitions"] = std::move(rows);
  j["default_logits"] = s.default_logits;
  if (s.shared_cos) {
    j["shared_cos"] = *s.shared_cos;
  } else {
    j["rep_table"] = s.rep_table;
  }
  if (!s.layer_shared_cos.empty()) j["layer_shared_cos"] = s.layer_shared_cos;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::shared_ptr<const LanguageModel> load_model(const std::filesystem::path& path) {
  const std::string name = path.filename().string();
  if (name.ends_with(".manifest.json")) return load_weights(path, blob_path_for(path));
  if (name.ends_with(".mock.json")) return mock_lm_build(load_mock_spec(path));
  throw InvalidArgument("unrecognised model file '" + path.string() +
                        "' (expected *.manifest.json or *.mock.json)");
}

}  // namespace csearch
