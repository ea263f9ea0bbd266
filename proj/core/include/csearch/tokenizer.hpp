#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "csearch/types.hpp"

namespace csearch {

// Byte-level tokenizer: token id == byte value, vocabulary 256.
inline constexpr int kByteVocabSize = 256;

TokenSequence encode_bytes(std::string_view text);

/// Bytes for `tokens`, or nullopt when any id is outside [0, 256).
std::optional<std::string> decode_bytes(std::span<const TokenId> tokens);

}  // namespace csearch
