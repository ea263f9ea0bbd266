#include "csearch/metrics.hpp"

#include <cmath>
#include <set>
#include <string>

#include "csearch/error.hpp"
#include "csearch/parallel.hpp"
#include "csearch/prob.hpp"

namespace csearch {

RepSequence collect_representations(std::shared_ptr<const LanguageModel> model,
                                    std::span<const TokenId> tokens) {
  Session session(std::move(model));
  RepSequence out;
  for (TokenId t : tokens) {
    const auto& step = session.advance(t);
    if (out.layers.size() < step.layer_representations.size()) {
      out.layers.resize(step.layer_representations.size());
    }
    for (std::size_t l = 0; l < step.layer_representations.size(); ++l) {
      out.layers[l].push_back(step.layer_representations[l]);
    }
  }
  out.reps = session.representations();
  return out;
}

double self_similarity(std::span<const Representation> reps) {
  const std::size_t n = reps.size();
  if (n < 2) throw InvalidArgument("self-similarity needs at least 2 representations");
  // cos is symmetric, so sum the upper triangle and count it twice.
  std::vector<double> rows(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) acc += cosine_similarity(reps[i], reps[j]);
    rows[i] = acc;
  }
  const double total = 2.0 * pairwise_sum(rows);
  return total / (static_cast<double>(n) * static_cast<double>(n - 1));
}

namespace {

double isotropy_of(std::span<const RepSequence> corpus,
                   const std::vector<Representation>& (*select)(const RepSequence&, int),
                   int layer) {
  if (corpus.empty()) throw InvalidArgument("isotropy needs a non-empty corpus");
  std::vector<double> sims(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) sims[i] = self_similarity(select(corpus[i], layer));
  return 1.0 - pairwise_sum(sims) / static_cast<double>(corpus.size());
}

const std::vector<Representation>& final_reps(const RepSequence& s, int) { return s.reps; }

const std::vector<Representation>& layer_reps(const RepSequence& s, int layer) {
  if (layer < 0 || static_cast<std::size_t>(layer) >= s.layers.size()) {
    throw InvalidArgument("layer " + std::to_string(layer) + " out of range for a sequence with " +
                          std::to_string(s.layers.size()) + " layers");
  }
  return s.layers[static_cast<std::size_t>(layer)];
}

}  // namespace

double isotropy(std::span<const RepSequence> corpus) { return isotropy_of(corpus, final_reps, 0); }

double layerwise_isotropy(std::span<const RepSequence> corpus, int layer) {
  return isotropy_of(corpus, layer_reps, layer);
}

RepN rep_n(std::span<const TokenId> tokens, int n) {
  if (n < 1) throw InvalidArgument("rep_n requires n >= 1");
  const auto un = static_cast<std::size_t>(n);
  if (tokens.size() < un) return RepN{0.0, true};
  std::set<std::vector<TokenId>> distinct;
  const std::size_t total = tokens.size() - un + 1;
  for (std::size_t i = 0; i < total; ++i) distinct.emplace(tokens.begin() + i, tokens.begin() + i + un);
  return RepN{1.0 - static_cast<double>(distinct.size()) / static_cast<double>(total), false};
}

double diversity(std::span<const TokenId> tokens) {
  if (tokens.size() < 4) throw InvalidArgument("diversity needs at least 4 tokens");
  double d = 1.0;
  for (int n = 2; n <= 4; ++n) d *= 1.0 - rep_n(tokens, n).value;
  return d;
}

double coherence(std::span<const TokenId> prefix, std::span<const TokenId> generated,
                 std::shared_ptr<const LanguageModel> evaluator) {
  if (!evaluator) throw InvalidArgument("coherence requires an evaluator model");
  if (prefix.empty()) throw InvalidArgument("coherence requires a non-empty prefix");
  if (generated.empty()) throw InvalidArgument("coherence requires a non-empty continuation");
  const int vocab = evaluator->vocab_size();
  for (auto seq : {prefix, generated}) {
    for (TokenId t : seq) {
      if (t < 0 || t >= vocab) {
        throw InvalidArgument("token " + std::to_string(t) + " outside evaluator vocabulary of " +
                              std::to_string(vocab));
      }
    }
  }
  Session session = open_session(std::move(evaluator), prefix);
  double total = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    total += std::log(session.next_distribution()[generated[i]]);
    if (i + 1 < generated.size()) session.advance(generated[i]);
  }
  return total / static_cast<double>(generated.size());
}

double dp_variance(const Session& session, int k) {
  if (k < 1) throw InvalidArgument("dp_variance requires k >= 1");
  const auto candidates = expand_candidates(session, k);
  std::vector<double> penalties;
  penalties.reserve(candidates.size());
  for (const auto& c : candidates) penalties.push_back(c.penalty);
  return penalty_spread(penalties);
}

std::vector<std::vector<double>> dp_variance_curves(std::shared_ptr<const LanguageModel> model,
                                                    std::span<const TokenSequence> prefixes,
                                                    const DpVarianceSettings& settings, int jobs) {
  if (!model) throw InvalidArgument("dp variance requires a model");
  if (settings.steps < 1) throw InvalidArgument("dp variance requires T >= 1");
  if (settings.k < 1) throw InvalidArgument("dp variance requires k >= 1");
  if (!(settings.alpha >= 0.0 && settings.alpha <= 1.0)) {
    throw InvalidArgument("alpha must lie in [0, 1]");
  }
  const auto T = static_cast<std::size_t>(settings.steps);
  for (const auto& prefix : prefixes) {
    if (prefix.empty()) throw InvalidArgument("dp variance requires non-empty prefixes");
    // T committed tokens plus one candidate position beyond them.
    if (prefix.size() + T + 1 > model->max_context()) {
      throw CapacityError("prefix of " + std::to_string(prefix.size()) + " tokens plus " +
                          std::to_string(T + 1) + " steps exceeds the model context");
    }
  }

  std::vector<std::vector<double>> curves(prefixes.size());
  parallel_for(prefixes.size(), jobs, [&](std::size_t x) {
    Session session = open_session(model, prefixes[x]);
    std::vector<double> curve(T);
    // Step s chooses token s+1; its diagnostics describe the context with s
    // generated tokens, which is f's argument.
    for (std::size_t s = 0; s < T; ++s) {
      auto step = contrastive_step(session, settings.k, settings.alpha);
      if (s >= 1) curve[s - 1] = *step.diagnostics.dp_variance;
      session = std::move(step.committed);
    }
    curve[T - 1] = dp_variance(session, settings.k);
    curves[x] = std::move(curve);
  });
  return curves;
}

std::vector<double> averaged_dp_variance(std::shared_ptr<const LanguageModel> model,
                                         std::span<const TokenSequence> prefixes,
                                         const DpVarianceSettings& settings, int jobs) {
  if (prefixes.empty()) throw InvalidArgument("dp variance requires a non-empty corpus");
  const auto curves = dp_variance_curves(std::move(model), prefixes, settings, jobs);
  const auto T = static_cast<std::size_t>(settings.steps);
  std::vector<double> f(T);
  std::vector<double> column(curves.size());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t x = 0; x < curves.size(); ++x) column[x] = curves[x][t];
    f[t] = pairwise_sum(column) / static_cast<double>(curves.size());
  }
  return f;
}

double isotropy_dpvar_scalar(std::span<const double> curve) {
  if (curve.empty()) throw InvalidArgument("scalar s needs T >= 1");
  return pairwise_sum(curve) / static_cast<double>(curve.size());
}

double isotropy_dpvar_scalar(std::shared_ptr<const LanguageModel> model,
                             std::span<const TokenSequence> prefixes,
                             const DpVarianceSettings& settings) {
  const auto f = averaged_dp_variance(std::move(model), prefixes, settings);
  return isotropy_dpvar_scalar(f);
}

std::vector<std::vector<double>> token_similarity_matrix(std::span<const Representation> reps) {
  const std::size_t n = reps.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double c = cosine_similarity(reps[i], reps[j]);
      m[i][j] = c;
      m[j][i] = c;
    }
  }
  return m;
}

MetricReport evaluate_continuation(std::span<const TokenId> prefix,
                                   std::span<const TokenId> generated,
                                   std::shared_ptr<const LanguageModel> evaluator) {
  MetricReport report;
  report.gen_length = static_cast<double>(generated.size());
  report.diversity = 1.0;
  for (int n = 2; n <= 4; ++n) {
    const RepN r = rep_n(generated, n);
    report.rep_n[n] = r.value;
    report.short_sequence = report.short_sequence || r.too_short;
    report.diversity *= 1.0 - r.value;
  }
  if (evaluator && !generated.empty()) report.coherence = coherence(prefix, generated, evaluator);
  return report;
}

}  // namespace csearch
