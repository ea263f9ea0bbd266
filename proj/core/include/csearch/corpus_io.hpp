#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csearch/decoding.hpp"
#include "csearch/types.hpp"

namespace csearch {

/// One line of a prefix corpus. Exactly one of prefix_text / prefix_tokens is
/// set.
struct PrefixRecord {
  std::string id;
  std::optional<std::string> prefix_text;
  std::optional<TokenSequence> prefix_tokens;
  std::optional<std::string> reference_text;

  friend bool operator==(const PrefixRecord&, const PrefixRecord&) = default;
};

/// Reads a JSONL prefix file. Blank lines are skipped and unknown fields are
/// ignored. Throws ParseError (with the 1-based line number) on a malformed
/// line and ValidationError on a schema violation or duplicate id.
std::vector<PrefixRecord> load_prefixes(const std::filesystem::path& path);
void write_prefixes(const std::filesystem::path& path, std::span<const PrefixRecord> records);

/// Tokens of a prefix: prefix_tokens as given, otherwise the bytes of
/// prefix_text. Truncated to the first `max_tokens` when max_tokens > 0.
TokenSequence prefix_tokens(const PrefixRecord& record, std::size_t max_tokens = 0);

/// One generated continuation as persisted in a record file.
struct GenerationRecord {
  std::string prefix_id;
  TokenSequence prefix_tokens;
  DecodeParams params;  // params.seed is the stream seed actually used
  std::uint64_t run_seed = 0;
  TokenSequence generated_tokens;
  std::optional<std::string> generated_text;
  bool stopped_at_eos = false;
  std::vector<StepDiagnostics> diagnostics;  // empty unless requested
  double wall_time_ms = 0.0;

  friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

/// Record fields whose values legitimately differ between identical runs.
inline constexpr const char* kVolatileRecordFields[] = {"wall_time_ms"};

/// Field order: prefix_id, strategy, params, seed, stream_seed, prefix_tokens,
/// generated_tokens, generated_text, stopped_at_eos, [diagnostics],
/// wall_time_ms. Seeds are decimal strings.
std::string record_to_json_line(const GenerationRecord& record);
GenerationRecord record_from_json_line(const std::string& line);

void write_records(const std::filesystem::path& path, std::span<const GenerationRecord> records);
std::vector<GenerationRecord> read_records(const std::filesystem::path& path);

/// `line` with every volatile field removed, for byte comparisons.
std::string strip_volatile_fields(const std::string& line);

}  // namespace csearch
