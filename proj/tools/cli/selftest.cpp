#include "selftest.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

#include "csearch/decoding.hpp"
#include "csearch/metrics.hpp"
#include "csearch/mock_lm.hpp"
#include "csearch/model_loader.hpp"
#include "csearch/transformer.hpp"
#include "oracles.hpp"

namespace csearch::cli {

namespace {

struct Failure {
  std::string reason;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

std::string seq_str(const TokenSequence& s) {
  std::ostringstream os;
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  return os.str();
}

void check_decoders(const std::shared_ptr<const LanguageModel>& model, const TokenSequence& prefix,
                    int steps, const std::string& name) {
  DecodeParams greedy = DecodeParams::defaults(Strategy::greedy);
  greedy.max_new_tokens = steps;
  const auto g = decode(model, prefix, greedy);
  const auto og = oracle::greedy(*model, prefix, steps);
  expect(g.tokens == og.tokens, name + ": greedy " + seq_str(g.tokens) + " vs " + seq_str(og.tokens));

  DecodeParams cs = DecodeParams::defaults(Strategy::contrastive);
  cs.max_new_tokens = steps;
  const auto c = decode(model, prefix, cs);
  const auto oc = oracle::contrastive(*model, prefix, *cs.k, *cs.alpha, steps);
  expect(c.tokens == oc.tokens, name + ": contrastive " + seq_str(c.tokens) + " vs " + seq_str(oc.tokens));

  DecodeParams bm = DecodeParams::defaults(Strategy::beam);
  bm.max_new_tokens = std::min(steps, 6);
  const auto b = decode(model, prefix, bm);
  const auto ob = oracle::beam(*model, prefix, *bm.beam_width, bm.max_new_tokens);
  expect(b.tokens == ob.tokens, name + ": beam " + seq_str(b.tokens) + " vs " + seq_str(ob.tokens));

  TokenSequence all = prefix;
  all.insert(all.end(), c.tokens.begin(), c.tokens.end());
  const double gap = oracle::max_cache_gap(model, all);
  expect(gap <= 1e-5, name + ": cached/uncached gap " + std::to_string(gap));
}

void cache_oracle() {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto model = mock_lm_build(random_mock_spec(seed, 12, 8, 2));
    check_decoders(model, {1, 2, 3}, 12, "mock " + std::to_string(seed));
  }
  TransformerConfig cfg;
  auto tiny = std::make_shared<TransformerLM>(cfg, random_weights(cfg, 7));
  check_decoders(tiny, {104, 101, 108, 108, 111}, 12, "transformer");
}

void beam_oracle() {
  for (std::uint64_t seed = 100; seed < 105; ++seed) {
    auto model = mock_lm_build(random_mock_spec(seed, 3, 4, 2));
    DecodeParams p = DecodeParams::defaults(Strategy::beam);
    p.beam_width = 27;
    p.max_new_tokens = 3;
    const auto b = decode(model, TokenSequence{0}, p);
    const auto best = oracle::exhaustive_best(*model, TokenSequence{0}, 3);
    expect(b.tokens == best, "table " + std::to_string(seed) + ": beam " + seq_str(b.tokens) +
                                 " vs exhaustive " + seq_str(best));
  }
}

void metric_values() {
  const TokenSequence five_a{7, 7, 7, 7, 7};
  expect(std::abs(diversity(five_a) - 1.0 / 24.0) < 1e-12, "diversity of five identical tokens");

  auto uniform = mock_lm_build(fixed_distribution_spec({0.25, 0.25, 0.25, 0.25}));
  const double coh = coherence(TokenSequence{0}, TokenSequence{1, 2, 3}, uniform);
  expect(std::abs(coh + 2.0 * std::numbers::ln2) < 1e-9, "coherence under a uniform 4-way model");

  // Context {0}; candidate 0 repeats the context (penalty 1), candidate 1 is
  // orthogonal to it (penalty 0).
  MockSpec spec;
  spec.vocab_size = 3;
  spec.hidden_dim = 3;
  spec.default_logits = {1.0, 0.5, -5.0};
  spec.rep_table = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  auto two = mock_lm_build(spec);
  const double var = dp_variance(open_session(two, TokenSequence{0}), 2);
  expect(std::abs(var - 0.5) < 1e-12, "dp_variance of penalties {0, 1}");
}

void isotropy_construction() {
  for (double rho : {0.0, 0.4, 0.8}) {
    MockSpec spec = repeat_trap_spec(16, rho);
    auto model = mock_lm_build(spec);
    std::vector<RepSequence> corpus;
    corpus.push_back(collect_representations(model, TokenSequence{0, 1, 2, 3, 4, 5}));
    corpus.push_back(collect_representations(model, TokenSequence{9, 3, 14}));
    const double iso = isotropy(corpus);
    expect(std::abs(iso - (1.0 - rho)) < 1e-6,
           "rho " + std::to_string(rho) + " gave isotropy " + std::to_string(iso));
  }
}

}  // namespace

bool run_selftest(std::ostream& out, const std::optional<std::filesystem::path>& model) {
  bool ok = true;
  auto run = [&](const std::string& name, const std::function<void()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    try {
      fn();
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      out << "PASS " << name << " (" << static_cast<long>(ms) << " ms)\n";
    } catch (const Failure& f) {
      ok = false;
      out << "FAIL " << name << ": " << f.reason << '\n';
    } catch (const std::exception& e) {
      ok = false;
      out << "FAIL " << name << ": " << e.what() << '\n';
    }
    out.flush();
  };

  if (model) run("load " + model->string(), [&] { load_model(*model); });
  run("cached-vs-uncached", cache_oracle);
  run("beam-vs-exhaustive", beam_oracle);
  run("metric-exact-values", metric_values);
  run("isotropy-construction", isotropy_construction);
  return ok;
}

}  // namespace csearch::cli
