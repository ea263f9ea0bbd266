#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "csearch/decoding.hpp"

namespace csearch {

/// Run configuration.
///
/// Grammar of a `.cfg` file, one item per line:
///
///   # comment            (also `;`)
///   [section]
///   key = value
///
/// Keys are addressed as `section.key`. Recognised keys and defaults:
///
///   model.path               required; .manifest.json or .mock.json
///   decoding.strategy        contrastive
///   decoding.k               5 (contrastive), 50 (top_k)
///   decoding.alpha           0.6
///   decoding.p               0.95
///   decoding.tau             0.95
///   decoding.beam_width      4
///   decoding.max_new_tokens  200
///   decoding.eos             none
///   decoding.seed            0; a comma list such as "0,1,2" runs every seed
///   data.prefixes            required; JSONL prefix file
///   data.prefix_length       40 (tokens kept from each prefix; 0 keeps all)
///   output.records           optional JSONL path
///   output.summary           optional CSV path
///   output.diagnostics       false
///   run.jobs                 1
///
/// Unknown keys are errors, and so are hyperparameters the chosen strategy
/// does not use. Relative paths resolve against the config file's directory.
struct RunConfig {
  std::filesystem::path model_path;
  DecodeParams params = DecodeParams::defaults(Strategy::contrastive);
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path prefixes_path;
  std::size_t prefix_length = 40;
  std::optional<std::filesystem::path> records_path;
  std::optional<std::filesystem::path> summary_path;
  bool diagnostics = false;
  int jobs = 1;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Flat `section.key -> value` view of a config file.
using ConfigValues = std::map<std::string, std::string>;

/// Environment variable naming the config used when none is given.
inline constexpr const char* kConfigEnvVar = "CSEARCH_CONFIG";

/// Every key load_config accepts.
const std::vector<std::string>& config_keys();

/// Parses the grammar above. Throws ParseError naming the line on a malformed
/// line or a repeated key.
ConfigValues parse_config_text(std::string_view text);

/// Validates `values` and builds a RunConfig. Every problem found is reported
/// at once in a ValidationError. With `check_paths`, the model file (and its
/// weight blob), the prefix file and the output directories must exist.
RunConfig build_run_config(const ConfigValues& values, const std::filesystem::path& base_dir,
                           bool check_paths = true);

RunConfig load_config(const std::filesystem::path& path, bool check_paths = true);

/// Inverse of load_config for a config whose paths are absolute.
std::string format_config(const RunConfig& config);

}  // namespace csearch
