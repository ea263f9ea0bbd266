#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "csearch/mock_lm.hpp"
#include "csearch/model.hpp"

namespace csearch {

/// Mock model files (`*.mock.json`) hold one JSON object:
///
///   vocab_size, hidden_dim     required
///   context_order              default 1
///   max_context                default 2^20
///   rep_key                    "token" (default) or "position"
///   preset                     "repeat_trap" or "random" (optional)
///   seed, logit_scale          for preset "random"
///   shared_cos                 representation table with pairwise cosine rho
///   layer_shared_cos           one rho per layer, last equals shared_cos
///   transitions                [{"context": [...], "logits": [...]}, ...]
///   default_logits             fallback row
///   rep_table                  explicit representations, one row per token
///
/// A preset builds the tables; explicit fields given next to it replace the
/// preset's.
MockSpec parse_mock_spec(const std::string& json_text);
MockSpec load_mock_spec(const std::filesystem::path& path);
/// Writes every table explicitly (no preset).
void write_mock_spec(const std::filesystem::path& path, const MockSpec& spec);

/// Loads `*.manifest.json` (transformer, blob next to it) or `*.mock.json`.
/// Throws LoadError/ConfigError/ParseError on bad input and InvalidArgument
/// on an unrecognised extension.
std::shared_ptr<const LanguageModel> load_model(const std::filesystem::path& path);

}  // namespace csearch
