#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csearch/model.hpp"
#include "csearch/rng.hpp"
#include "csearch/types.hpp"

namespace csearch {

enum class Strategy { greedy, beam, typical, top_k, nucleus, contrastive };

std::string_view strategy_name(Strategy s) noexcept;
/// Accepts the names above; "top-k" is accepted as an alias of "top_k".
Strategy parse_strategy(std::string_view name);
bool is_stochastic(Strategy s) noexcept;

/// Hyperparameters of one decoding run. Strategy-specific fields are only set
/// for the strategy that uses them: k (top_k, contrastive), alpha
/// (contrastive), p (nucleus), tau (typical), beam_width (beam).
struct DecodeParams {
  Strategy strategy = Strategy::contrastive;
  std::optional<int> k;
  std::optional<double> alpha;
  std::optional<double> p;
  std::optional<double> tau;
  std::optional<int> beam_width;
  int max_new_tokens = 200;
  std::optional<TokenId> eos_token;
  std::uint64_t seed = 0;

  /// Defaults: beam width 4, tau 0.95, top-k k 50, nucleus p 0.95,
  /// contrastive k 5 and alpha 0.6.
  static DecodeParams defaults(Strategy s);

  /// Throws InvalidArgument when a field is out of range, a field the
  /// strategy needs is missing, or a field is set that the strategy does not
  /// use.
  void validate() const;

  /// Names of the strategy-specific fields of `s`, e.g. {"k", "alpha"}.
  static std::vector<std::string_view> fields_for(Strategy s);

  friend bool operator==(const DecodeParams&, const DecodeParams&) = default;
};

struct CandidateScore {
  TokenId token;
  double probability;
  double penalty;

  friend bool operator==(const CandidateScore&, const CandidateScore&) = default;
};

/// Per-step record. The contrastive fields are empty for other strategies.
struct StepDiagnostics {
  TokenId token = 0;
  double model_confidence = 0.0;
  std::optional<double> degeneration_penalty;
  std::vector<CandidateScore> candidates;
  std::optional<double> dp_variance;

  friend bool operator==(const StepDiagnostics&, const StepDiagnostics&) = default;
};

struct Generation {
  DecodeParams params;
  // Emitted tokens; an eos token stops decoding and is not included.
  TokenSequence tokens;
  bool stopped_at_eos = false;
  // Sum of ln p over emitted tokens, eos included.
  double log_prob = 0.0;
  // One entry per emitted token, eos included.
  std::vector<StepDiagnostics> steps;
};

// Each decoder takes ownership of a session that has consumed the prefix.
Generation decode_greedy(Session session, const DecodeParams& params);
Generation decode_beam(Session session, const DecodeParams& params);
Generation sample_top_k(Session session, const DecodeParams& params);
Generation sample_nucleus(Session session, const DecodeParams& params);
Generation sample_typical(Session session, const DecodeParams& params);
Generation decode_contrastive(Session session, const DecodeParams& params);

/// Builds a session over `prefix` (which must be non-empty), validates
/// `params`, and runs the selected strategy.
Generation decode(std::shared_ptr<const LanguageModel> model, std::span<const TokenId> prefix,
                  const DecodeParams& params);

// ---- truncation supports -------------------------------------------------

/// Smallest probability-descending prefix with mass >= p.
std::vector<TokenId> nucleus_support(const ProbDist& dist, double p);

/// Tokens ranked by |-ln p(v) - H| (natural-log entropy H), ties by higher
/// probability then lower id; smallest rank prefix with mass >= tau.
std::vector<TokenId> typical_support(const ProbDist& dist, double tau);

/// Draws from `dist` renormalized over `support`.
TokenId sample_from(const ProbDist& dist, std::span<const TokenId> support, Rng& rng);

// ---- contrastive search ----------------------------------------------------

/// max_j cos(candidate, context_j); -1 is never reached for an empty context
/// because callers require at least one context token.
double degeneration_penalty(std::span<const double> candidate,
                            std::span<const Representation> context);

/// sqrt(mean((x - mean(x))^2)). This is the quantity the degeneration-penalty
/// "variance" reports: a population standard deviation, not a variance.
double penalty_spread(std::span<const double> penalties);

/// One top-k candidate already advanced in its own forked session.
struct CandidateExpansion {
  TokenId token;
  double probability;
  double penalty;
  Session session;
};

/// Forks `session` once per top-k candidate, advances each fork by its
/// candidate and measures the candidate's degeneration penalty against every
/// representation already in `session`. Requires a non-empty session.
std::vector<CandidateExpansion> expand_candidates(const Session& session, int k);

struct ContrastiveStep {
  TokenId token;
  StepDiagnostics diagnostics;
  // The winner's fork, already advanced by `token`.
  Session committed;
};

/// Scores every candidate as (1 - alpha) p(v) - alpha penalty(v) and commits
/// the best (ties: higher p, then lower id).
ContrastiveStep contrastive_step(const Session& session, int k, double alpha);

}  // namespace csearch
