#pragma once

#include <span>
#include <vector>

#include "csearch/types.hpp"

namespace csearch {

/// exp(l_i / T) / sum_j exp(l_j / T), evaluated with max-subtraction.
/// Throws InvalidArgument on a non-finite logit or T <= 0.
ProbDist softmax(std::span<const double> logits, double temperature = 1.0);

/// The min(k, |V|) most probable tokens, most probable first. Equal
/// probabilities are ordered by ascending token id.
std::vector<TokenId> top_k_set(const ProbDist& dist, int k);

/// Token ids of the whole vocabulary sorted by probability descending, ties by
/// ascending id.
std::vector<TokenId> rank_by_probability(const ProbDist& dist);

/// Highest-probability token, lowest id on ties.
TokenId argmax(const ProbDist& dist);

/// a.b / (|a||b|). Returns 0 when either norm is below 1e-12.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace csearch
