#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csearch/corpus_io.hpp"
#include "csearch/decoding.hpp"
#include "csearch/model.hpp"

namespace csearch::cli {

struct Prefix {
  std::string id;
  TokenSequence tokens;
};

/// Tokenizes and truncates every record. Throws InvalidArgument for an empty
/// prefix or a token outside the model vocabulary.
std::vector<Prefix> prepare_prefixes(std::span<const PrefixRecord> records, std::size_t prefix_length,
                                     const LanguageModel& model);

using Progress = std::function<void(std::string_view)>;

/// One record per (seed, prefix), seeds outer, prefixes in input order. The
/// sampler of each record draws from derive_stream_seed(seed, prefix id), so
/// a record does not depend on which other prefixes share the run.
std::vector<GenerationRecord> generate_records(std::shared_ptr<const LanguageModel> model,
                                               std::span<const Prefix> prefixes,
                                               const DecodeParams& params,
                                               std::span<const std::uint64_t> seeds, bool diagnostics,
                                               int jobs, const Progress& progress = {});

}  // namespace csearch::cli
