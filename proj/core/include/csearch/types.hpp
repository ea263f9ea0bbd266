#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace csearch {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

/// Hidden state of one token position. Stored in double so cosine-based
/// metrics are reproducible to ~1e-12.
using Representation = std::vector<double>;

/// A normalized next-token distribution. Construction validates that every
/// entry is non-negative and the total is 1 within 1e-6.
class ProbDist {
 public:
  ProbDist() = default;
  explicit ProbDist(std::vector<double> probs);

  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](TokenId token) const { return probs_.at(static_cast<std::size_t>(token)); }
  std::size_t size() const noexcept { return probs_.size(); }

 private:
  std::vector<double> probs_;
};

/// What a model emits after consuming one token.
struct StepOutput {
  // Next-position logits, one per vocabulary entry.
  std::vector<double> logits;
  // Final-layer hidden state of the token just consumed.
  Representation representation;
  // One entry per layer, last entry equal to `representation`. Empty when the
  // backend exposes no per-layer view.
  std::vector<Representation> layer_representations;
};

}  // namespace csearch
