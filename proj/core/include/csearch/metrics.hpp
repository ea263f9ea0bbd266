#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "csearch/decoding.hpp"
#include "csearch/model.hpp"
#include "csearch/types.hpp"

namespace csearch {

/// Token representations of one text. `layers[l][i]` is position i at layer l
/// when the backend exposes per-layer states; the last layer equals `reps`.
struct RepSequence {
  std::vector<Representation> reps;
  std::vector<std::vector<Representation>> layers;
};

/// Runs `model` over `tokens` incrementally and keeps every representation.
RepSequence collect_representations(std::shared_ptr<const LanguageModel> model,
                                    std::span<const TokenId> tokens);

/// Mean cosine over the |x|(|x|-1) ordered pairs i != j. Needs >= 2 vectors.
double self_similarity(std::span<const Representation> reps);

/// 1 - mean self-similarity over the corpus. Every sequence needs >= 2 vectors.
double isotropy(std::span<const RepSequence> corpus);

/// Isotropy using layer `layer` (0-based) of every sequence.
double layerwise_isotropy(std::span<const RepSequence> corpus, int layer);

struct RepN {
  double value = 0.0;
  // Set when the sequence had fewer than n tokens; value is then 0.
  bool too_short = false;
};

/// 1 - distinct n-grams / total n-grams.
RepN rep_n(std::span<const TokenId> tokens, int n);

/// prod over n in {2,3,4} of (1 - rep_n). Needs >= 4 tokens.
double diversity(std::span<const TokenId> tokens);

/// Mean natural-log likelihood of `generated` given `prefix` under
/// `evaluator`. `prefix` and `generated` must both be non-empty.
double coherence(std::span<const TokenId> prefix, std::span<const TokenId> generated,
                 std::shared_ptr<const LanguageModel> evaluator);

/// Spread of the degeneration penalties of the top-k candidates of
/// `session`, computed exactly as contrastive search computes them. Returns
/// the population standard deviation (see penalty_spread).
double dp_variance(const Session& session, int k);

struct DpVarianceSettings {
  int k = 5;
  double alpha = 0.6;
  int steps = 200;  // T
};

/// f(t) for t = 1..T: the corpus mean of dp_variance measured after a
/// contrastive continuation of length t. End-of-sequence is ignored during
/// the rollout so every prefix contributes to every t.
std::vector<double> averaged_dp_variance(std::shared_ptr<const LanguageModel> model,
                                         std::span<const TokenSequence> prefixes,
                                         const DpVarianceSettings& settings, int jobs = 1);

/// Per-prefix curves behind averaged_dp_variance: curves[x][t-1].
std::vector<std::vector<double>> dp_variance_curves(std::shared_ptr<const LanguageModel> model,
                                                    std::span<const TokenSequence> prefixes,
                                                    const DpVarianceSettings& settings,
                                                    int jobs = 1);

/// (1/T) sum f(t).
double isotropy_dpvar_scalar(std::span<const double> curve);
double isotropy_dpvar_scalar(std::shared_ptr<const LanguageModel> model,
                             std::span<const TokenSequence> prefixes,
                             const DpVarianceSettings& settings);

/// M[i][j] = cos(h_i, h_j).
std::vector<std::vector<double>> token_similarity_matrix(std::span<const Representation> reps);

/// Metrics of one continuation.
struct MetricReport {
  double diversity = 1.0;
  std::map<int, double> rep_n;  // n in {2, 3, 4}
  std::optional<double> coherence;
  double gen_length = 0.0;
  std::optional<double> isotropy;
  std::vector<double> dp_variance_curve;
  // rep_n fell back to 0 for some n because the continuation was short.
  bool short_sequence = false;
};

/// Diversity (with the short-sequence fallback of rep_n), rep-2/3/4,
/// generation length and, when `evaluator` is given and the continuation is
/// non-empty, coherence.
MetricReport evaluate_continuation(std::span<const TokenId> prefix,
                                   std::span<const TokenId> generated,
                                   std::shared_ptr<const LanguageModel> evaluator);

/// Reference values for real checkpoints, for documentation only.
struct ReferenceIsotropy {
  const char* model;
  double isotropy;
};
inline constexpr ReferenceIsotropy kGpt2ReferenceIsotropy[] = {
    {"gpt2 (117M)", 0.10},
    {"gpt2-medium (345M)", 0.25},
    {"gpt2-large (774M)", 0.70},
    {"gpt2-xl (1.6B)", 0.72},
};

}  // namespace csearch
