#pragma once

// Slow reference implementations used to check the library. Apart from
// max_cache_gap nothing here touches Session or the KV cache: every
// distribution and representation comes from a fresh forward_all over the
// whole context, and softmax, cosine and ranking are written out again.

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "csearch/model.hpp"
#include "csearch/types.hpp"

namespace oracle {

using csearch::LanguageModel;
using csearch::TokenId;
using csearch::TokenSequence;

std::vector<double> softmax(std::span<const double> logits);
double cosine(std::span<const double> a, std::span<const double> b);

/// Next-token probabilities after `context`, from a full uncached pass.
std::vector<double> next_probs(const LanguageModel& model, std::span<const TokenId> context);

struct Trace {
  TokenSequence tokens;  // eos excluded
  bool stopped_at_eos = false;
  // Logits the decision at each step was based on.
  std::vector<std::vector<double>> step_logits;
};

Trace greedy(const LanguageModel& model, std::span<const TokenId> prefix, int max_new,
             std::optional<TokenId> eos = std::nullopt);

Trace contrastive(const LanguageModel& model, std::span<const TokenId> prefix, int k, double alpha,
                  int max_new, std::optional<TokenId> eos = std::nullopt);

/// Length-synchronous beam search over full-vocabulary expansions: score is
/// the sum of natural-log probabilities, finished hypotheses compete
/// unchanged, ties go to the lexicographically smaller sequence.
Trace beam(const LanguageModel& model, std::span<const TokenId> prefix, int width, int max_new,
           std::optional<TokenId> eos = std::nullopt);

/// Highest-scoring continuation of exactly `length` tokens among all
/// vocab^length candidates (ties: lexicographically smallest).
TokenSequence exhaustive_best(const LanguageModel& model, std::span<const TokenId> prefix,
                              int length);

/// Population std of the top-k degeneration penalties after each step of an
/// uncached contrastive rollout: entry t-1 is measured with t generated
/// tokens, t = 1..steps.
std::vector<double> dp_variance_curve(const LanguageModel& model, std::span<const TokenId> prefix,
                                      int k, double alpha, int steps);

/// Largest |cached - uncached| over logits and representations when feeding
/// `tokens` one at a time through a Session.
double max_cache_gap(std::shared_ptr<const LanguageModel> model, std::span<const TokenId> tokens);

/// Direct definitions of the text metrics.
double rep_n(std::span<const TokenId> tokens, int n);
double diversity(std::span<const TokenId> tokens);
double self_similarity(const std::vector<std::vector<double>>& reps);

/// Distribution that top-k sampling draws from.
std::vector<double> top_k_distribution(std::span<const double> probs, int k);

/// Token sets the truncation samplers may draw from.
std::vector<TokenId> top_k_support(std::span<const double> probs, int k);
std::vector<TokenId> nucleus_support(std::span<const double> probs, double p);
std::vector<TokenId> typical_support(std::span<const double> probs, double tau);

}  // namespace oracle
