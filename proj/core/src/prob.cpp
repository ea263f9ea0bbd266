#include "csearch/prob.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "csearch/error.hpp"

namespace csearch {

ProbDist::ProbDist(std::vector<double> probs) : probs_(std::move(probs)) {
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw InvalidArgument("probability entries must be finite and non-negative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw InvalidArgument("probabilities sum to " + std::to_string(total) + ", expected 1");
  }
}

ProbDist softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgument("softmax temperature must be positive");
  }
  if (logits.empty()) throw InvalidArgument("softmax over an empty logit vector");

  double max_logit = logits[0];
  for (double l : logits) {
    if (!std::isfinite(l)) throw InvalidArgument("softmax received a non-finite logit");
    max_logit = std::max(max_logit, l);
  }

  std::vector<double> probs(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp((logits[i] - max_logit) / temperature);
    z += probs[i];
  }
  for (double& p : probs) p /= z;
  return ProbDist(std::move(probs));
}

std::vector<TokenId> rank_by_probability(const ProbDist& dist) {
  std::vector<TokenId> order(dist.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  const auto probs = dist.probs();
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
    return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
  });
  return order;
}

std::vector<TokenId> top_k_set(const ProbDist& dist, int k) {
  if (k < 1) throw InvalidArgument("top-k requires k >= 1");
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
  std::vector<TokenId> order(dist.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  const auto probs = dist.probs();
  auto before = [&](TokenId a, TokenId b) {
    const double pa = probs[static_cast<std::size_t>(a)];
    const double pb = probs[static_cast<std::size_t>(b)];
    return pa != pb ? pa > pb : a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    before);
  order.resize(n);
  return order;
}

TokenId argmax(const ProbDist& dist) {
  const auto probs = dist.probs();
  if (probs.empty()) throw InvalidArgument("argmax of an empty distribution");
  const auto it = std::max_element(probs.begin(), probs.end());
  return static_cast<TokenId>(it - probs.begin());
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

}  // namespace csearch
