#include <cmath>
#include <numbers>

#include "csearch/decoding.hpp"
#include "csearch/error.hpp"
#include "csearch/metrics.hpp"
#include "csearch/mock_lm.hpp"
#include "csearch/model_loader.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace csearch;

namespace {

// Four tokens, token 0 is the prefix. After 0 token 1 has p=0.5, after 1
// token 2 has p=0.25, after 2 token 3 has p=0.125.
std::shared_ptr<const MockLM> halving_evaluator() {
  MockSpec spec = testing::table_spec({0, 0, 0, 0}, {{1, 0}, {0, 1}, {1, 1}, {1, -1}});
  auto logs = [](std::vector<double> p) {
    for (double& v : p) v = std::log(v);
    return p;
  };
  spec.transition[{0}] = logs({0.25, 0.5, 0.125, 0.125});
  spec.transition[{1}] = logs({0.25, 0.25, 0.25, 0.25});
  spec.transition[{2}] = logs({0.5, 0.25, 0.125, 0.125});
  return mock_lm_build(spec);
}

std::vector<Representation> orthogonal(int n) {
  std::vector<Representation> out(static_cast<std::size_t>(n), Representation(static_cast<std::size_t>(n), 0.0));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1.0;
  return out;
}

}  // namespace

// ---- rep-n and diversity ----------------------------------------------------------

TEST_CASE("rep_n examples") {
  CHECK(rep_n(TokenSequence{1, 2, 3, 4, 5}, 2).value == 0.0);
  CHECK(std::abs(rep_n(TokenSequence{7, 7, 7, 7}, 2).value - 2.0 / 3.0) < 1e-15);
  CHECK(rep_n(TokenSequence{7, 7, 7, 7}, 4).value == 0.0);
  const auto short_seq = rep_n(TokenSequence{1, 1}, 3);
  CHECK(short_seq.value == 0.0);
  CHECK(short_seq.too_short);
  CHECK_FALSE(rep_n(TokenSequence{1, 1, 1}, 3).too_short);
  CHECK_THROWS_AS(rep_n(TokenSequence{1}, 0), InvalidArgument);
}

TEST_CASE("diversity examples") {
  CHECK(diversity(TokenSequence{1, 2, 3, 4, 5, 6}) == 1.0);
  // 4 bigrams, 3 trigrams, 2 four-grams, one distinct each: (1/4)(1/3)(1/2).
  CHECK(std::abs(diversity(TokenSequence{9, 9, 9, 9, 9}) - 1.0 / 24.0) < 1e-15);
  CHECK_THROWS_AS(diversity(TokenSequence{1, 2, 3}), InvalidArgument);
}

TEST_CASE("property: rep_n and diversity match their direct definitions") {
  Rng rng(51);
  for (int trial = 0; trial < 300; ++trial) {
    const auto tokens = testing::random_tokens(rng, 4 + rng.next_u64() % 40, 1 + static_cast<int>(rng.next_u64() % 6));
    for (int n = 1; n <= 5; ++n) {
      if (tokens.size() >= static_cast<std::size_t>(n)) {
        CHECK(std::abs(rep_n(tokens, n).value - oracle::rep_n(tokens, n)) < 1e-12);
      }
    }
    const double d = diversity(tokens);
    CHECK(std::abs(d - oracle::diversity(tokens)) < 1e-12);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("property: a never-seen token never lowers the distinct n-gram count") {
  Rng rng(52);
  auto distinct = [](const TokenSequence& t, int n) {
    const auto r = rep_n(t, n);
    const double total = static_cast<double>(t.size()) - n + 1;
    return std::llround((1.0 - r.value) * total);
  };
  for (int trial = 0; trial < 200; ++trial) {
    auto tokens = testing::random_tokens(rng, 4 + rng.next_u64() % 20, 5);
    for (int n = 2; n <= 4; ++n) {
      const auto before = distinct(tokens, n);
      auto extended = tokens;
      extended.push_back(100);
      CHECK(distinct(extended, n) >= before);
    }
  }
}

// ---- coherence --------------------------------------------------------------------

TEST_CASE("coherence examples") {
  auto eval = halving_evaluator();
  const double got = coherence(TokenSequence{0}, TokenSequence{1, 2, 3}, eval);
  CHECK(std::abs(got + 2.0 * std::numbers::ln2) < 1e-9);

  auto certain = mock_lm_build(testing::table_spec({0.0, -1000.0}, {{1.0}, {0.5}}));
  CHECK(coherence(TokenSequence{1}, TokenSequence{0, 0, 0}, certain) == 0.0);

  const double p = std::exp(-1.0);
  auto inv_e = mock_lm_build(testing::table_spec({std::log(p), std::log(1 - p)}, {{1.0}, {0.5}}));
  CHECK(std::abs(coherence(TokenSequence{1}, TokenSequence{0, 0}, inv_e) + 1.0) < 1e-12);

  CHECK_THROWS_AS(coherence(TokenSequence{0}, TokenSequence{4}, eval), InvalidArgument);
  CHECK_THROWS_AS(coherence(TokenSequence{0}, TokenSequence{}, eval), InvalidArgument);
}

TEST_CASE("property: coherence agrees with a full uncached pass") {
  auto model = testing::tiny_transformer(17);
  Rng rng(53);
  for (int trial = 0; trial < 5; ++trial) {
    const auto prefix = testing::random_tokens(rng, 1 + rng.next_u64() % 8, 256);
    const auto gen = testing::random_tokens(rng, 1 + rng.next_u64() % 16, 256);
    TokenSequence all = prefix;
    all.insert(all.end(), gen.begin(), gen.end());
    const auto outs = model->forward_all(all);
    double total = 0.0;
    for (std::size_t i = 0; i < gen.size(); ++i) {
      const auto probs = oracle::softmax(outs[prefix.size() - 1 + i].logits);
      total += std::log(probs[static_cast<std::size_t>(gen[i])]);
    }
    CHECK(std::abs(coherence(prefix, gen, model) - total / static_cast<double>(gen.size())) < 1e-6);
  }
}

// ---- similarity and isotropy ------------------------------------------------------

TEST_CASE("self-similarity examples") {
  const std::vector<Representation> same(4, Representation{0.3, -1.2, 2.0});
  CHECK(std::abs(self_similarity(same) - 1.0) < 1e-12);
  CHECK(self_similarity(orthogonal(5)) == 0.0);
  for (int n : {2, 3, 10}) {
    const auto table = shared_cosine_table(n, n + 1, 0.4);
    CHECK(std::abs(self_similarity(table) - 0.4) < 1e-9);
    CHECK(std::abs(self_similarity(table) - oracle::self_similarity(table)) < 1e-12);
  }
  CHECK_THROWS_AS(self_similarity(std::vector<Representation>{{1.0}}), InvalidArgument);
}

TEST_CASE("isotropy examples") {
  const std::vector<Representation> same(3, Representation{1.0, 1.0});
  CHECK(std::abs(isotropy(std::vector<RepSequence>{{same, {}}, {same, {}}})) < 1e-12);
  CHECK(isotropy(std::vector<RepSequence>{{orthogonal(3), {}}, {orthogonal(4), {}}}) == 1.0);
  CHECK_THROWS_AS(isotropy(std::vector<RepSequence>{}), InvalidArgument);
  CHECK(kGpt2ReferenceIsotropy[0].isotropy == 0.10);
  CHECK(kGpt2ReferenceIsotropy[3].isotropy == 0.72);
}

TEST_CASE("property: self-similarity ignores per-vector scaling and stays in bounds") {
  Rng rng(54);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = 2 + rng.next_u64() % 10;
    std::vector<Representation> reps;
    for (std::size_t i = 0; i < n; ++i) reps.push_back(testing::random_vector(rng, 6));
    const double s = self_similarity(reps);
    CHECK(std::abs(s - oracle::self_similarity(reps)) < 1e-12);
    for (auto& r : reps) {
      const double lambda = std::exp(2.0 * rng.normal());
      for (double& v : r) v *= lambda;
    }
    CHECK(std::abs(self_similarity(reps) - s) < 1e-9);
    const double iso = isotropy(std::vector<RepSequence>{{reps, {}}});
    CHECK(iso >= 0.0);
    CHECK(iso <= 2.0);
    CHECK(std::abs(iso - (1.0 - self_similarity(reps))) < 1e-15);
  }
}

TEST_CASE("layerwise isotropy") {
  auto layered = load_model(testing::fixture("layered.mock.json"));
  std::vector<RepSequence> corpus;
  corpus.push_back(collect_representations(layered, TokenSequence{1, 2, 3, 3, 1}));
  corpus.push_back(collect_representations(layered, TokenSequence{4, 4}));
  CHECK(std::abs(layerwise_isotropy(corpus, 0) - 0.8) < 1e-9);
  CHECK(std::abs(layerwise_isotropy(corpus, 1) - 0.5) < 1e-9);
  CHECK(std::abs(layerwise_isotropy(corpus, 2) - 0.2) < 1e-9);
  CHECK(layerwise_isotropy(corpus, 2) == isotropy(corpus));
  CHECK_THROWS_AS(layerwise_isotropy(corpus, 3), InvalidArgument);
  CHECK_THROWS_AS(layerwise_isotropy(corpus, -1), InvalidArgument);

  auto tiny = testing::tiny_transformer(19);
  std::vector<RepSequence> text{collect_representations(tiny, TokenSequence{10, 20, 30, 40, 50})};
  for (int l = 0; l < 2; ++l) {
    const double v = layerwise_isotropy(text, l);
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(v <= 2.0);
  }
}

TEST_CASE("token similarity matrix") {
  const auto m = token_similarity_matrix(shared_cosine_table(6, 7, 0.4));
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(std::abs(m[i][j] - (i == j ? 1.0 : 0.4)) < 1e-9);
    }
  }
  const auto ident = token_similarity_matrix(orthogonal(3));
  CHECK(ident == std::vector<std::vector<double>>{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const auto ones = token_similarity_matrix(std::vector<Representation>(2, Representation{2.0, 1.0}));
  for (const auto& row : ones) {
    for (double v : row) CHECK(std::abs(v - 1.0) < 1e-12);
  }

  Rng rng(55);
  std::vector<Representation> reps;
  for (int i = 0; i < 8; ++i) reps.push_back(testing::random_vector(rng, 5));
  const auto r = token_similarity_matrix(reps);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(std::abs(r[i][i] - 1.0) < 1e-12);
    for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(r[i][j] - r[j][i]) < 1e-12);
  }
}

// ---- degeneration-penalty spread --------------------------------------------------

TEST_CASE("dp_variance examples") {
  // Context token 2; candidates 0 (copy of the context, penalty 1) and 1
  // (orthogonal, penalty 0).
  MockSpec spec = testing::table_spec({0.0, 0.0, 0.0}, {{1, 0, 0}, {0, 1, 0}, {1, 0, 0}});
  spec.transition[{2}] = {1.0, 0.5, -1000.0};
  auto model = mock_lm_build(spec);
  Session s = open_session(model, TokenSequence{2});
  CHECK(std::abs(dp_variance(s, 2) - 0.5) < 1e-12);
  CHECK(dp_variance(s, 1) == 0.0);

  auto flat = mock_lm_build(repeat_trap_spec(8, 0.3));
  Session f = open_session(flat, TokenSequence{0, 1});
  // Candidates 1..5: 1 repeats (cos 1), the rest sit at 0.3.
  const std::vector<double> pens{1.0, 0.3, 0.3, 0.3, 0.3};
  CHECK(std::abs(dp_variance(f, 5) - penalty_spread(pens)) < 1e-12);
  // Mean 0.44, deviations 0.56 and -0.14: sqrt((0.3136 + 4 * 0.0196) / 5) = 0.28.
  CHECK(std::abs(dp_variance(f, 5) - 0.28) < 1e-12);
  CHECK_THROWS_AS(dp_variance(f, 0), InvalidArgument);
}

TEST_CASE("averaged dp variance agrees with the uncached rollout") {
  auto model = mock_lm_build(random_mock_spec(61, 12, 6, 2));
  const std::vector<TokenSequence> prefixes{{1, 2}, {3}, {4, 5, 6}};
  DpVarianceSettings settings{3, 0.5, 12};
  const auto f = averaged_dp_variance(model, prefixes, settings);
  REQUIRE(f.size() == 12);
  std::vector<double> want(12, 0.0);
  for (const auto& p : prefixes) {
    const auto curve = oracle::dp_variance_curve(*model, p, 3, 0.5, 12);
    for (std::size_t t = 0; t < 12; ++t) want[t] += curve[t] / 3.0;
  }
  for (std::size_t t = 0; t < 12; ++t) {
    CHECK(std::abs(f[t] - want[t]) < 1e-9);
    CHECK(f[t] >= 0.0);
  }
  // Parallel reduction gives the same curve.
  CHECK(averaged_dp_variance(model, prefixes, settings, 4) == f);

  const auto single = averaged_dp_variance(model, std::vector<TokenSequence>{{3}}, settings);
  CHECK(single == dp_variance_curves(model, std::vector<TokenSequence>{{3}}, settings)[0]);
}

TEST_CASE("isotropy-dpvar scalar") {
  CHECK(isotropy_dpvar_scalar(std::vector<double>{0.25, 0.25, 0.25}) == 0.25);
  CHECK(isotropy_dpvar_scalar(std::vector<double>{0.1, 0.3}) == doctest::Approx(0.2));
  CHECK_THROWS_AS(isotropy_dpvar_scalar(std::vector<double>{}), InvalidArgument);

  auto model = mock_lm_build(repeat_trap_spec(16, 0.0));
  const std::vector<TokenSequence> prefixes{{0, 1, 2, 3}};
  DpVarianceSettings one{5, 0.6, 1};
  CHECK(isotropy_dpvar_scalar(model, prefixes, one) == averaged_dp_variance(model, prefixes, one)[0]);

  DpVarianceSettings bad{5, 0.6, 0};
  CHECK_THROWS_AS(averaged_dp_variance(model, prefixes, bad), InvalidArgument);
}

TEST_CASE("evaluate_continuation") {
  auto eval = halving_evaluator();
  const auto r = evaluate_continuation(TokenSequence{0}, TokenSequence{1, 2, 3}, eval);
  CHECK(r.short_sequence);
  CHECK(r.gen_length == 3.0);
  CHECK(std::abs(*r.coherence + 2.0 * std::numbers::ln2) < 1e-9);
  CHECK(r.rep_n.at(4) == 0.0);

  const auto no_eval = evaluate_continuation(TokenSequence{0}, TokenSequence{1, 1, 1, 1, 1}, nullptr);
  CHECK_FALSE(no_eval.coherence.has_value());
  CHECK(std::abs(no_eval.diversity - 1.0 / 24.0) < 1e-15);
  CHECK_FALSE(no_eval.short_sequence);

  const auto empty = evaluate_continuation(TokenSequence{0}, TokenSequence{}, eval);
  CHECK(empty.gen_length == 0.0);
  CHECK_FALSE(empty.coherence.has_value());
}
