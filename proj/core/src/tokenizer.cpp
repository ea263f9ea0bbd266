#include "csearch/tokenizer.hpp"

namespace csearch {

TokenSequence encode_bytes(std::string_view text) {
  TokenSequence out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(static_cast<TokenId>(c));
  return out;
}

std::optional<std::string> decode_bytes(std::span<const TokenId> tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (TokenId t : tokens) {
    if (t < 0 || t >= kByteVocabSize) return std::nullopt;
    out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
  }
  return out;
}

}  // namespace csearch
