#include "csearch/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "csearch/error.hpp"
#include "csearch/prob.hpp"

namespace csearch {

std::string_view strategy_name(Strategy s) noexcept {
  switch (s) {
    case Strategy::greedy: return "greedy";
    case Strategy::beam: return "beam";
    case Strategy::typical: return "typical";
    case Strategy::top_k: return "top_k";
    case Strategy::nucleus: return "nucleus";
    case Strategy::contrastive: return "contrastive";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::greedy, Strategy::beam, Strategy::typical, Strategy::top_k,
                 Strategy::nucleus, Strategy::contrastive}) {
    if (name == strategy_name(s)) return s;
  }
  if (name == "top-k") return Strategy::top_k;
  throw InvalidArgument("unknown decoding strategy '" + std::string(name) + "'");
}

bool is_stochastic(Strategy s) noexcept {
  return s == Strategy::typical || s == Strategy::top_k || s == Strategy::nucleus;
}

DecodeParams DecodeParams::defaults(Strategy s) {
  DecodeParams p;
  p.strategy = s;
  switch (s) {
    case Strategy::greedy: break;
    case Strategy::beam: p.beam_width = 4; break;
    case Strategy::typical: p.tau = 0.95; break;
    case Strategy::top_k: p.k = 50; break;
    case Strategy::nucleus: p.p = 0.95; break;
    case Strategy::contrastive:
      p.k = 5;
      p.alpha = 0.6;
      break;
  }
  return p;
}

std::vector<std::string_view> DecodeParams::fields_for(Strategy s) {
  switch (s) {
    case Strategy::greedy: return {};
    case Strategy::beam: return {"beam_width"};
    case Strategy::typical: return {"tau"};
    case Strategy::top_k: return {"k"};
    case Strategy::nucleus: return {"p"};
    case Strategy::contrastive: return {"k", "alpha"};
  }
  return {};
}

void DecodeParams::validate() const {
  const auto fields = fields_for(strategy);
  const std::string name(strategy_name(strategy));
  auto check = [&](std::string_view field, bool present) {
    const bool wanted = std::find(fields.begin(), fields.end(), field) != fields.end();
    if (present && !wanted) {
      throw InvalidArgument("parameter '" + std::string(field) + "' does not apply to strategy " +
                            name);
    }
    if (!present && wanted) {
      throw InvalidArgument("strategy " + name + " requires parameter '" + std::string(field) +
                            "'");
    }
  };
  check("k", k.has_value());
  check("alpha", alpha.has_value());
  check("p", p.has_value());
  check("tau", tau.has_value());
  check("beam_width", beam_width.has_value());

  if (k && *k < 1) throw InvalidArgument("k must be >= 1");
  if (alpha && !(*alpha >= 0.0 && *alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  if (p && !(*p > 0.0 && *p <= 1.0)) throw InvalidArgument("p must lie in (0, 1]");
  if (tau && !(*tau > 0.0 && *tau <= 1.0)) throw InvalidArgument("tau must lie in (0, 1]");
  if (beam_width && *beam_width < 1) throw InvalidArgument("beam_width must be >= 1");
  if (max_new_tokens < 1) throw InvalidArgument("max_new_tokens must be >= 1");
  if (eos_token && *eos_token < 0) throw InvalidArgument("eos token must be non-negative");
}

// ---- supports ----------------------------------------------------------------

std::vector<TokenId> nucleus_support(const ProbDist& dist, double p) {
  auto ranked = rank_by_probability(dist);
  if (p >= 1.0) return ranked;
  std::vector<TokenId> support;
  double mass = 0.0;
  for (TokenId t : ranked) {
    support.push_back(t);
    mass += dist[t];
    if (mass >= p) break;
  }
  return support;
}

std::vector<TokenId> typical_support(const ProbDist& dist, double tau) {
  const auto probs = dist.probs();
  double entropy = 0.0;
  for (double q : probs) {
    if (q > 0.0) entropy -= q * std::log(q);
  }
  std::vector<double> distance(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    distance[i] = probs[i] > 0.0 ? std::abs(-std::log(probs[i]) - entropy)
                                 : std::numeric_limits<double>::infinity();
  }
  std::vector<TokenId> order(probs.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  std::sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
    const auto ia = static_cast<std::size_t>(a);
    const auto ib = static_cast<std::size_t>(b);
    if (distance[ia] != distance[ib]) return distance[ia] < distance[ib];
    if (probs[ia] != probs[ib]) return probs[ia] > probs[ib];
    return a < b;
  });
  if (tau >= 1.0) return order;
  std::vector<TokenId> support;
  double mass = 0.0;
  for (TokenId t : order) {
    support.push_back(t);
    mass += dist[t];
    if (mass >= tau) break;
  }
  return support;
}

TokenId sample_from(const ProbDist& dist, std::span<const TokenId> support, Rng& rng) {
  if (support.empty()) throw InvalidArgument("cannot sample from an empty support");
  double total = 0.0;
  for (TokenId t : support) total += dist[t];
  const double u = rng.uniform() * total;
  double cum = 0.0;
  for (TokenId t : support) {
    cum += dist[t];
    if (cum > u) return t;
  }
  // Rounding left u at the top of the range: take the last token with mass.
  for (auto it = support.rbegin(); it != support.rend(); ++it) {
    if (dist[*it] > 0.0) return *it;
  }
  return support.back();
}

// ---- shared loop -------------------------------------------------------------

namespace {

bool is_eos(const DecodeParams& params, TokenId t) {
  return params.eos_token && *params.eos_token == t;
}

// Runs the per-step `choose` rule until eos or max_new_tokens. `choose` maps
// the current distribution to a token.
template <typename Choose>
Generation run_simple(Session session, const DecodeParams& params, Choose&& choose) {
  Generation gen;
  gen.params = params;
  for (int step = 0; step < params.max_new_tokens; ++step) {
    const ProbDist dist = session.next_distribution();
    const TokenId token = choose(dist);
    const double prob = dist[token];
    gen.log_prob += std::log(prob);
    gen.steps.push_back(StepDiagnostics{token, prob, std::nullopt, {}, std::nullopt});
    if (is_eos(params, token)) {
      gen.stopped_at_eos = true;
      break;
    }
    gen.tokens.push_back(token);
    if (step + 1 < params.max_new_tokens) session.advance(token);
  }
  return gen;
}

}  // namespace

Generation decode_greedy(Session session, const DecodeParams& params) {
  return run_simple(std::move(session), params, [](const ProbDist& d) { return argmax(d); });
}

Generation sample_top_k(Session session, const DecodeParams& params) {
  Rng rng(params.seed);
  const int k = params.k.value_or(50);
  return run_simple(std::move(session), params, [&](const ProbDist& d) {
    const auto support = top_k_set(d, k);
    return sample_from(d, support, rng);
  });
}

Generation sample_nucleus(Session session, const DecodeParams& params) {
  Rng rng(params.seed);
  const double p = params.p.value_or(0.95);
  return run_simple(std::move(session), params, [&](const ProbDist& d) {
    const auto support = nucleus_support(d, p);
    return sample_from(d, support, rng);
  });
}

Generation sample_typical(Session session, const DecodeParams& params) {
  Rng rng(params.seed);
  const double tau = params.tau.value_or(0.95);
  return run_simple(std::move(session), params, [&](const ProbDist& d) {
    const auto support = typical_support(d, tau);
    return sample_from(d, support, rng);
  });
}

// ---- beam search -------------------------------------------------------------

namespace {

struct Hypothesis {
  Session session;
  TokenSequence tokens;  // without eos
  std::vector<double> step_probs;
  double score = 0.0;
  bool finished = false;
  TokenId eos = -1;  // set when finished by eos
};

// Token sequence used for tie-breaks; a finished hypothesis includes its eos.
TokenSequence full_sequence(const Hypothesis& h) {
  TokenSequence seq = h.tokens;
  if (h.finished) seq.push_back(h.eos);
  return seq;
}

}  // namespace

Generation decode_beam(Session session, const DecodeParams& params) {
  const auto width = static_cast<std::size_t>(params.beam_width.value_or(4));
  const int vocab = session.model().vocab_size();

  std::vector<Hypothesis> beams;
  beams.push_back(Hypothesis{std::move(session), {}, {}, 0.0, false, -1});

  for (int step = 0; step < params.max_new_tokens; ++step) {
    if (std::all_of(beams.begin(), beams.end(), [](const Hypothesis& h) { return h.finished; })) {
      break;
    }
    struct Candidate {
      std::size_t parent;
      TokenId token;  // -1: carry a finished hypothesis unchanged
      double score;
      double prob;
      TokenSequence sequence;
    };
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < beams.size(); ++i) {
      const auto& h = beams[i];
      if (h.finished) {
        candidates.push_back({i, -1, h.score, 1.0, full_sequence(h)});
        continue;
      }
      const ProbDist dist = h.session.next_distribution();
      for (TokenId v = 0; v < vocab; ++v) {
        TokenSequence seq = h.tokens;
        seq.push_back(v);
        candidates.push_back({i, v, h.score + std::log(dist[v]), dist[v], std::move(seq)});
      }
    }
    const std::size_t keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        return a.sequence < b.sequence;
                      });
    candidates.resize(keep);

    const bool last_step = step + 1 == params.max_new_tokens;
    std::vector<Hypothesis> next;
    next.reserve(keep);
    for (const auto& c : candidates) {
      const auto& parent = beams[c.parent];
      if (c.token < 0) {
        next.push_back(Hypothesis{parent.session.fork(), parent.tokens, parent.step_probs,
                                  parent.score, true, parent.eos});
        continue;
      }
      Hypothesis h{parent.session.fork(), parent.tokens, parent.step_probs, c.score, false, -1};
      h.step_probs.push_back(c.prob);
      if (is_eos(params, c.token)) {
        h.finished = true;
        h.eos = c.token;
      } else {
        h.tokens.push_back(c.token);
        if (!last_step) h.session.advance(c.token);
      }
      next.push_back(std::move(h));
    }
    beams = std::move(next);
  }

  const auto& best = beams.front();
  Generation gen;
  gen.params = params;
  gen.tokens = best.tokens;
  gen.stopped_at_eos = best.finished;
  gen.log_prob = best.score;
  for (std::size_t i = 0; i < best.step_probs.size(); ++i) {
    const TokenId t = i < best.tokens.size() ? best.tokens[i] : best.eos;
    gen.steps.push_back(StepDiagnostics{t, best.step_probs[i], std::nullopt, {}, std::nullopt});
  }
  return gen;
}

// ---- contrastive search ----------------------------------------------------------

double degeneration_penalty(std::span<const double> candidate,
                            std::span<const Representation> context) {
  if (context.empty()) throw PreconditionError("degeneration penalty needs a non-empty context");
  double best = -1.0;
  for (const auto& h : context) best = std::max(best, cosine_similarity(candidate, h));
  return best;
}

double penalty_spread(std::span<const double> penalties) {
  if (penalties.empty()) return 0.0;
  const auto n = static_cast<double>(penalties.size());
  double mean = 0.0;
  for (double v : penalties) mean += v;
  mean /= n;
  double acc = 0.0;
  for (double v : penalties) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / n);
}

std::vector<CandidateExpansion> expand_candidates(const Session& session, int k) {
  if (session.length() == 0) {
    throw PreconditionError("contrastive search needs at least one context token");
  }
  const ProbDist dist = session.next_distribution();
  const auto top = top_k_set(dist, k);
  std::vector<CandidateExpansion> out;
  out.reserve(top.size());
  for (TokenId v : top) {
    Session fork = session.fork();
    fork.advance(v);
    const double penalty =
        degeneration_penalty(fork.representations().back(), session.representations());
    out.push_back(CandidateExpansion{v, dist[v], penalty, std::move(fork)});
  }
  return out;
}

ContrastiveStep contrastive_step(const Session& session, int k, double alpha) {
  if (k < 1) throw InvalidArgument("contrastive search requires k >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  auto candidates = expand_candidates(session, k);

  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const double score = (1.0 - alpha) * c.probability - alpha * c.penalty;
    const auto& b = candidates[best];
    const bool better = score > best_score ||
                        (score == best_score && (c.probability > b.probability ||
                                                 (c.probability == b.probability && c.token < b.token)));
    if (i == 0 || better) {
      best = i;
      best_score = score;
    }
  }

  StepDiagnostics diag;
  diag.token = candidates[best].token;
  diag.model_confidence = candidates[best].probability;
  diag.degeneration_penalty = candidates[best].penalty;
  std::vector<double> penalties;
  for (const auto& c : candidates) {
    diag.candidates.push_back(CandidateScore{c.token, c.probability, c.penalty});
    penalties.push_back(c.penalty);
  }
  diag.dp_variance = penalty_spread(penalties);
  const TokenId token = candidates[best].token;
  return ContrastiveStep{token, std::move(diag), std::move(candidates[best].session)};
}

Generation decode_contrastive(Session session, const DecodeParams& params) {
  const int k = params.k.value_or(5);
  const double alpha = params.alpha.value_or(0.6);
  Generation gen;
  gen.params = params;
  for (int step = 0; step < params.max_new_tokens; ++step) {
    auto result = contrastive_step(session, k, alpha);
    gen.log_prob += std::log(result.diagnostics.model_confidence);
    gen.steps.push_back(std::move(result.diagnostics));
    if (is_eos(params, result.token)) {
      gen.stopped_at_eos = true;
      break;
    }
    gen.tokens.push_back(result.token);
    session = std::move(result.committed);
  }
  return gen;
}

// ---- dispatch ------------------------------------------------------------------

Generation decode(std::shared_ptr<const LanguageModel> model, std::span<const TokenId> prefix,
                  const DecodeParams& params) {
  if (!model) throw InvalidArgument("decode requires a model");
  params.validate();
  if (prefix.empty()) throw InvalidArgument("decoding requires a non-empty prefix");
  if (params.eos_token && *params.eos_token >= model->vocab_size()) {
    throw InvalidArgument("eos token outside the model vocabulary");
  }
  const auto needed = prefix.size() + static_cast<std::size_t>(params.max_new_tokens);
  if (needed > model->max_context()) {
    throw CapacityError("prefix of " + std::to_string(prefix.size()) + " tokens plus " +
                        std::to_string(params.max_new_tokens) +
                        " new tokens exceeds the model context of " +
                        std::to_string(model->max_context()));
  }
  Session session = open_session(std::move(model), prefix);
  switch (params.strategy) {
    case Strategy::greedy: return decode_greedy(std::move(session), params);
    case Strategy::beam: return decode_beam(std::move(session), params);
    case Strategy::typical: return sample_typical(std::move(session), params);
    case Strategy::top_k: return sample_top_k(std::move(session), params);
    case Strategy::nucleus: return sample_nucleus(std::move(session), params);
    case Strategy::contrastive: return decode_contrastive(std::move(session), params);
  }
  throw InvalidArgument("unknown strategy");
}

}  // namespace csearch
