#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace oracle {

std::vector<double> softmax(std::span<const double> logits) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  std::vector<double> out(logits.size());
  long double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (double& v : out) v = static_cast<double>(v / z);
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: size mismatch");
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return static_cast<double>(dot / std::sqrt(na * nb));
}

std::vector<double> next_probs(const LanguageModel& model, std::span<const TokenId> context) {
  const auto outs = model.forward_all(context);
  return softmax(outs.back().logits);
}

namespace {

TokenSequence concat(std::span<const TokenId> a, std::span<const TokenId> b) {
  TokenSequence out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Indices of the k largest probabilities, larger first, lower id on ties.
std::vector<TokenId> top_k(const std::vector<double>& probs, int k) {
  std::vector<TokenId> ids;
  for (TokenId i = 0; i < static_cast<TokenId>(probs.size()); ++i) ids.push_back(i);
  std::sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;
  });
  ids.resize(std::min<std::size_t>(ids.size(), static_cast<std::size_t>(k)));
  return ids;
}

struct Scored {
  TokenId token;
  double prob;
  double penalty;
};

std::vector<Scored> score_candidates(const LanguageModel& model, const TokenSequence& context,
                                     int k, std::vector<double>* logits_out) {
  const auto outs = model.forward_all(context);
  if (logits_out) *logits_out = outs.back().logits;
  const auto probs = softmax(outs.back().logits);
  std::vector<Scored> scored;
  for (TokenId v : top_k(probs, k)) {
    TokenSequence extended = context;
    extended.push_back(v);
    const auto h_v = model.forward_all(extended).back().representation;
    double penalty = -std::numeric_limits<double>::infinity();
    for (const auto& o : outs) penalty = std::max(penalty, cosine(h_v, o.representation));
    scored.push_back({v, probs[v], penalty});
  }
  return scored;
}

}  // namespace

Trace greedy(const LanguageModel& model, std::span<const TokenId> prefix, int max_new,
             std::optional<TokenId> eos) {
  Trace trace;
  TokenSequence context(prefix.begin(), prefix.end());
  for (int step = 0; step < max_new; ++step) {
    const auto logits = model.forward_all(context).back().logits;
    trace.step_logits.push_back(logits);
    const auto probs = softmax(logits);
    TokenId best = 0;
    for (TokenId v = 1; v < static_cast<TokenId>(probs.size()); ++v) {
      if (probs[v] > probs[best]) best = v;
    }
    if (eos && best == *eos) {
      trace.stopped_at_eos = true;
      break;
    }
    trace.tokens.push_back(best);
    context.push_back(best);
  }
  return trace;
}

Trace contrastive(const LanguageModel& model, std::span<const TokenId> prefix, int k, double alpha,
                  int max_new, std::optional<TokenId> eos) {
  Trace trace;
  TokenSequence context(prefix.begin(), prefix.end());
  for (int step = 0; step < max_new; ++step) {
    std::vector<double> logits;
    const auto scored = score_candidates(model, context, k, &logits);
    trace.step_logits.push_back(std::move(logits));
    const Scored* best = nullptr;
    double best_score = 0.0;
    for (const auto& c : scored) {
      const double s = (1.0 - alpha) * c.prob - alpha * c.penalty;
      if (!best || std::make_tuple(s, c.prob, -c.token) > std::make_tuple(best_score, best->prob, -best->token)) {
        best = &c;
        best_score = s;
      }
    }
    if (eos && best->token == *eos) {
      trace.stopped_at_eos = true;
      break;
    }
    trace.tokens.push_back(best->token);
    context.push_back(best->token);
  }
  return trace;
}

Trace beam(const LanguageModel& model, std::span<const TokenId> prefix, int width, int max_new,
           std::optional<TokenId> eos) {
  struct Hyp {
    TokenSequence seq;  // includes eos when finished
    double score = 0.0;
    bool finished = false;
  };
  std::vector<Hyp> hyps{Hyp{}};
  for (int step = 0; step < max_new; ++step) {
    bool all_done = true;
    for (const auto& h : hyps) all_done = all_done && h.finished;
    if (all_done) break;
    std::vector<Hyp> pool;
    for (const auto& h : hyps) {
      if (h.finished) {
        pool.push_back(h);
        continue;
      }
      const auto probs = next_probs(model, concat(prefix, h.seq));
      for (TokenId v = 0; v < static_cast<TokenId>(probs.size()); ++v) {
        Hyp next = h;
        next.seq.push_back(v);
        next.score += std::log(probs[v]);
        next.finished = eos && v == *eos;
        pool.push_back(std::move(next));
      }
    }
    std::stable_sort(pool.begin(), pool.end(), [](const Hyp& a, const Hyp& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.seq < b.seq;
    });
    pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(width)));
    hyps = std::move(pool);
  }
  Trace trace;
  trace.tokens = hyps.front().seq;
  trace.stopped_at_eos = hyps.front().finished;
  if (trace.stopped_at_eos) trace.tokens.pop_back();
  return trace;
}

TokenSequence exhaustive_best(const LanguageModel& model, std::span<const TokenId> prefix,
                              int length) {
  const int vocab = model.vocab_size();
  TokenSequence seq(static_cast<std::size_t>(length), 0);
  TokenSequence best;
  double best_score = -std::numeric_limits<double>::infinity();
  while (true) {
    const auto full = concat(prefix, seq);
    const auto outs = model.forward_all(full);
    double score = 0.0;
    for (int i = 0; i < length; ++i) {
      const auto probs = softmax(outs[prefix.size() - 1 + static_cast<std::size_t>(i)].logits);
      score += std::log(probs[seq[static_cast<std::size_t>(i)]]);
    }
    // Enumeration runs in lexicographic order, so strict > keeps the
    // smallest sequence among equal scores.
    if (score > best_score || best.empty()) {
      best = seq;
      best_score = score;
    }
    int pos = length - 1;
    while (pos >= 0 && seq[static_cast<std::size_t>(pos)] == vocab - 1) {
      seq[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++seq[static_cast<std::size_t>(pos)];
  }
  return best;
}

std::vector<double> dp_variance_curve(const LanguageModel& model, std::span<const TokenId> prefix,
                                      int k, double alpha, int steps) {
  TokenSequence context(prefix.begin(), prefix.end());
  std::vector<double> curve;
  for (int step = 0; step <= steps; ++step) {
    const auto scored = score_candidates(model, context, k, nullptr);
    if (step >= 1) {
      double mean = 0.0;
      for (const auto& c : scored) mean += c.penalty;
      mean /= static_cast<double>(scored.size());
      double var = 0.0;
      for (const auto& c : scored) var += (c.penalty - mean) * (c.penalty - mean);
      curve.push_back(std::sqrt(var / static_cast<double>(scored.size())));
    }
    if (step == steps) break;
    const Scored* best = nullptr;
    double best_score = 0.0;
    for (const auto& c : scored) {
      const double s = (1.0 - alpha) * c.prob - alpha * c.penalty;
      if (!best || std::make_tuple(s, c.prob, -c.token) > std::make_tuple(best_score, best->prob, -best->token)) {
        best = &c;
        best_score = s;
      }
    }
    context.push_back(best->token);
  }
  return curve;
}

double max_cache_gap(std::shared_ptr<const LanguageModel> model, std::span<const TokenId> tokens) {
  const auto reference = model->forward_all(tokens);
  csearch::Session session(model);
  double gap = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& out = session.advance(tokens[i]);
    for (std::size_t j = 0; j < out.logits.size(); ++j) {
      gap = std::max(gap, std::abs(out.logits[j] - reference[i].logits[j]));
    }
    for (std::size_t j = 0; j < out.representation.size(); ++j) {
      gap = std::max(gap, std::abs(out.representation[j] - reference[i].representation[j]));
    }
  }
  return gap;
}

double rep_n(std::span<const TokenId> tokens, int n) {
  const auto un = static_cast<std::size_t>(n);
  if (tokens.size() < un) return 0.0;
  const std::size_t total = tokens.size() - un + 1;
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < total; ++i) {
    bool seen_before = false;
    for (std::size_t j = 0; j < i && !seen_before; ++j) {
      seen_before = std::equal(tokens.begin() + i, tokens.begin() + i + un, tokens.begin() + j);
    }
    if (!seen_before) ++distinct;
  }
  return 1.0 - static_cast<double>(distinct) / static_cast<double>(total);
}

double diversity(std::span<const TokenId> tokens) {
  return (1.0 - rep_n(tokens, 2)) * (1.0 - rep_n(tokens, 3)) * (1.0 - rep_n(tokens, 4));
}

double self_similarity(const std::vector<std::vector<double>>& reps) {
  long double total = 0;
  const std::size_t n = reps.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) total += cosine(reps[i], reps[j]);
    }
  }
  return static_cast<double>(total / (static_cast<long double>(n) * (n - 1)));
}

std::vector<double> top_k_distribution(std::span<const double> probs, int k) {
  std::vector<double> p(probs.begin(), probs.end());
  const auto keep = top_k(p, k);
  std::vector<double> out(p.size(), 0.0);
  double mass = 0.0;
  for (TokenId t : keep) mass += p[t];
  for (TokenId t : keep) out[t] = p[t] / mass;
  return out;
}

namespace {

std::vector<TokenId> mass_prefix(const std::vector<TokenId>& order, std::span<const double> probs, double mass) {
  std::vector<TokenId> out;
  double total = 0.0;
  for (TokenId t : order) {
    out.push_back(t);
    total += probs[static_cast<std::size_t>(t)];
    if (total >= mass) break;
  }
  return out;
}

}  // namespace

std::vector<TokenId> top_k_support(std::span<const double> probs, int k) {
  std::vector<double> p(probs.begin(), probs.end());
  return top_k(p, k);
}

std::vector<TokenId> nucleus_support(std::span<const double> probs, double p) {
  std::vector<double> copy(probs.begin(), probs.end());
  return mass_prefix(top_k(copy, static_cast<int>(copy.size())), probs, p);
}

std::vector<TokenId> typical_support(std::span<const double> probs, double tau) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  std::vector<TokenId> ids(probs.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(i);
  std::stable_sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) {
    const double da = std::abs(-std::log(probs[static_cast<std::size_t>(a)]) - h);
    const double db = std::abs(-std::log(probs[static_cast<std::size_t>(b)]) - h);
    if (da != db) return da < db;
    return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
  });
  return mass_prefix(ids, probs, tau);
}

}  // namespace oracle
