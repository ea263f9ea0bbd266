#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "csearch/decoding.hpp"
#include "csearch/error.hpp"
#include "csearch/mock_lm.hpp"
#include "csearch/model_loader.hpp"
#include "csearch/prob.hpp"
#include "csearch/tokenizer.hpp"
#include "csearch/transformer.hpp"
#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace csearch;
namespace fs = std::filesystem;

namespace {

double max_pairwise_error(const std::vector<Representation>& reps, double rho) {
  double worst = 0.0;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    for (std::size_t j = 0; j < reps.size(); ++j) {
      if (i == j) continue;
      worst = std::max(worst, std::abs(oracle::cosine(reps[i], reps[j]) - rho));
    }
  }
  return worst;
}

// Reorders the attention heads of every block: columns of q, k and v and the
// matching input rows of the output projection.
TransformerWeights permute_heads(const TransformerConfig& cfg, TransformerWeights w,
                                 const std::vector<int>& perm) {
  const auto h = static_cast<std::size_t>(cfg.hidden_dim);
  const auto d = static_cast<std::size_t>(cfg.head_dim());
  for (auto& b : w.blocks) {
    auto attn = b.attn_weight;
    auto bias = b.attn_bias;
    auto proj = b.attn_proj_weight;
    for (std::size_t part = 0; part < 3; ++part) {
      for (std::size_t head = 0; head < perm.size(); ++head) {
        const std::size_t src = part * h + static_cast<std::size_t>(perm[head]) * d;
        const std::size_t dst = part * h + head * d;
        for (std::size_t c = 0; c < d; ++c) {
          bias[dst + c] = b.attn_bias[src + c];
          for (std::size_t r = 0; r < h; ++r) attn[r * 3 * h + dst + c] = b.attn_weight[r * 3 * h + src + c];
        }
      }
    }
    for (std::size_t head = 0; head < perm.size(); ++head) {
      for (std::size_t c = 0; c < d; ++c) {
        const std::size_t src = static_cast<std::size_t>(perm[head]) * d + c;
        const std::size_t dst = head * d + c;
        for (std::size_t col = 0; col < h; ++col) proj[dst * h + col] = b.attn_proj_weight[src * h + col];
      }
    }
    b.attn_weight = std::move(attn);
    b.attn_bias = std::move(bias);
    b.attn_proj_weight = std::move(proj);
  }
  return w;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(testing::read_file(p)); }

void write_json(const fs::path& p, const nlohmann::json& j) { testing::write_file(p, j.dump(2)); }

std::string load_error(const fs::path& manifest) {
  try {
    load_weights(manifest, blob_path_for(manifest));
  } catch (const LoadError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

// ---- mock LM ----------------------------------------------------------------------

TEST_CASE("shared_cos table has the requested pairwise cosine") {
  for (double rho : {0.0, 0.2, 0.4, 0.8, 0.99}) {
    const auto table = shared_cosine_table(16, 17, rho);
    CHECK(max_pairwise_error(table, rho) < 1e-12);
  }
  CHECK_THROWS_AS(shared_cosine_table(16, 16, 0.4), ConfigError);
  CHECK_THROWS_AS(shared_cosine_table(4, 5, 1.5), ConfigError);
}

TEST_CASE("position-keyed representations keep pairwise cosine on repeats") {
  MockSpec spec = repeat_trap_spec(8, 0.4);
  spec.rep_key = RepKey::position;
  spec.max_context = 40;
  spec.hidden_dim = 41;
  auto model = mock_lm_build(spec);
  const TokenSequence tokens{3, 3, 3, 5, 3};
  const auto outs = model->forward_all(tokens);
  std::vector<Representation> reps;
  for (const auto& o : outs) reps.push_back(o.representation);
  CHECK(max_pairwise_error(reps, 0.4) < 1e-12);

  MockSpec too_long = repeat_trap_spec(8, 0.4);
  too_long.rep_key = RepKey::position;
  CHECK_THROWS_AS(mock_lm_build(too_long), ConfigError);
}

TEST_CASE("repeat trap makes greedy repeat the last prefix token") {
  auto model = mock_lm_build(repeat_trap_spec(16, 0.0));
  auto params = DecodeParams::defaults(Strategy::greedy);
  params.max_new_tokens = 10;
  const auto g = decode(model, TokenSequence{0, 1, 2, 3}, params);
  CHECK(g.tokens == TokenSequence(10, 3));

  const auto probs = oracle::next_probs(*model, TokenSequence{5});
  CHECK(top_k_set(ProbDist(probs), 5) == std::vector<TokenId>{5, 6, 7, 8, 9});
}

TEST_CASE("mock spec validation") {
  MockSpec bad = testing::table_spec({0.0, 0.0}, {{1.0}, {0.5}});
  bad.default_logits = {0.0};
  CHECK_THROWS_AS(mock_lm_build(bad), ConfigError);

  MockSpec short_rep = testing::table_spec({0.0, 0.0}, {{1.0}});
  CHECK_THROWS_AS(mock_lm_build(short_rep), ConfigError);

  MockSpec bad_ctx = testing::table_spec({0.0, 0.0}, {{1.0}, {0.5}});
  bad_ctx.transition[{0, 1}] = {0.0, 0.0};
  CHECK_THROWS_AS(mock_lm_build(bad_ctx), ConfigError);

  CHECK_THROWS_AS(repeat_trap_spec(5, 0.0), ConfigError);
}

TEST_CASE("mock transitions use the longest matching suffix") {
  MockSpec spec = testing::table_spec({0.0, 0.0, 0.0}, {{1, 0}, {0, 1}, {1, 1}});
  spec.context_order = 2;
  spec.transition[{1}] = {1.0, 0.0, 0.0};
  spec.transition[{0, 1}] = {0.0, 2.0, 0.0};
  MockLM model(spec);
  CHECK(model.logits_for(TokenSequence{2, 1}) == std::vector<double>{1.0, 0.0, 0.0});
  CHECK(model.logits_for(TokenSequence{0, 1}) == std::vector<double>{0.0, 2.0, 0.0});
  CHECK(model.logits_for(TokenSequence{2}) == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("layer tables expose one view per layer") {
  auto model = load_model(testing::fixture("layered.mock.json"));
  CHECK(model->num_layers() == 3);
  const auto outs = model->forward_all(TokenSequence{1, 2, 3, 4});
  const double expect[] = {0.2, 0.5, 0.8};
  for (int l = 0; l < 3; ++l) {
    std::vector<Representation> reps;
    for (const auto& o : outs) reps.push_back(o.layer_representations[static_cast<std::size_t>(l)]);
    CHECK(max_pairwise_error(reps, expect[l]) < 1e-12);
  }
  CHECK(outs.back().layer_representations.back() == outs.back().representation);
}

TEST_CASE("mock spec files round trip and reject unknown fields") {
  testing::TempDir dir;
  const auto spec = random_mock_spec(4, 6, 3, 2);
  write_mock_spec(dir / "r.mock.json", spec);
  auto a = mock_lm_build(spec);
  auto b = load_model(dir / "r.mock.json");
  const TokenSequence tokens{1, 5, 0, 2, 2};
  const auto oa = a->forward_all(tokens);
  const auto ob = b->forward_all(tokens);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    CHECK(oa[i].logits == ob[i].logits);
    CHECK(oa[i].representation == ob[i].representation);
  }

  CHECK_THROWS_AS(parse_mock_spec(R"({"vocab_size": 6, "hidden_dim": 7, "preset": "repeat_trap", "colour": 1})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_mock_spec("{not json"), Error);
  CHECK_THROWS_AS(load_model(dir / "model.txt"), InvalidArgument);
}

// ---- tokenizer --------------------------------------------------------------------

TEST_CASE("byte tokenizer") {
  CHECK(encode_bytes("ab") == TokenSequence{97, 98});
  CHECK(encode_bytes("").empty());
  std::string all;
  for (int b = 0; b < 256; ++b) all.push_back(static_cast<char>(b));
  CHECK(decode_bytes(encode_bytes(all)) == all);
  CHECK_FALSE(decode_bytes(TokenSequence{97, 256}).has_value());
  CHECK_FALSE(decode_bytes(TokenSequence{-1}).has_value());
}

// ---- transformer ------------------------------------------------------------------

TEST_CASE("fixture transformer reproduces its stored logits for \"ab\"") {
  const auto model = load_weights(testing::fixture("tiny.manifest.json"), testing::fixture("tiny.bin"));
  std::ifstream in(testing::fixture("tiny_ab_logits.txt"));
  std::vector<double> golden;
  for (double v; in >> v;) golden.push_back(v);
  REQUIRE(golden.size() == 512);

  const auto outs = model->forward_all(encode_bytes("ab"));
  Session s(model);
  s.advance('a');
  const auto after_a = s.last_output()->logits;
  s.advance('b');
  const auto after_ab = s.last_output()->logits;
  double gap = 0.0;
  for (std::size_t j = 0; j < 256; ++j) {
    gap = std::max(gap, std::abs(outs[0].logits[j] - golden[j]));
    gap = std::max(gap, std::abs(outs[1].logits[j] - golden[256 + j]));
    gap = std::max(gap, std::abs(after_a[j] - golden[j]));
    gap = std::max(gap, std::abs(after_ab[j] - golden[256 + j]));
  }
  CHECK(gap <= 1e-5);
}

TEST_CASE("transformer forward is deterministic") {
  auto a = testing::tiny_transformer(3);
  auto b = testing::tiny_transformer(3);
  const auto tokens = encode_bytes("hello world");
  const auto oa = a->forward_all(tokens);
  const auto ob = b->forward_all(tokens);
  for (std::size_t i = 0; i < tokens.size(); ++i) CHECK(oa[i].logits == ob[i].logits);
  CHECK(a->forward_all(tokens)[5].logits == oa[5].logits);
}

TEST_CASE("attention rows are causal distributions") {
  auto model = testing::tiny_transformer(4);
  const auto tokens = encode_bytes("attention");
  const auto maps = model->attention_maps(tokens);
  REQUIRE(maps.size() == 2);
  for (const auto& layer : maps) {
    REQUIRE(layer.size() == 4);
    for (const auto& head : layer) {
      for (std::size_t q = 0; q < tokens.size(); ++q) {
        double total = 0.0;
        for (std::size_t k = 0; k < tokens.size(); ++k) {
          if (k > q) CHECK(head[q][k] == 0.0);
          total += head[q][k];
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("property: future tokens do not change earlier outputs") {
  auto model = testing::tiny_transformer(5);
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto tokens = testing::random_tokens(rng, 2 + rng.next_u64() % 15, 256);
    const auto base = model->forward_all(tokens);
    tokens.back() = static_cast<TokenId>((tokens.back() + 1 + static_cast<TokenId>(rng.next_u64() % 255)) % 256);
    const auto changed = model->forward_all(tokens);
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) CHECK(base[i].logits == changed[i].logits);
  }
}

TEST_CASE("permuting attention heads leaves outputs unchanged") {
  TransformerConfig cfg;
  const auto w = random_weights(cfg, 8);
  TransformerLM a(cfg, w);
  TransformerLM b(cfg, permute_heads(cfg, w, {2, 0, 3, 1}));
  const auto tokens = encode_bytes("heads");
  const auto oa = a.forward_all(tokens);
  const auto ob = b.forward_all(tokens);
  double gap = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t j = 0; j < 256; ++j) gap = std::max(gap, std::abs(oa[i].logits[j] - ob[i].logits[j]));
  }
  CHECK(gap <= 1e-9);
}

TEST_CASE("transformer layer views end with the final representation") {
  auto model = testing::tiny_transformer(6);
  const auto outs = model->forward_all(encode_bytes("xyz"));
  for (const auto& o : outs) {
    REQUIRE(o.layer_representations.size() == 2);
    CHECK(o.layer_representations.back() == o.representation);
    CHECK(o.representation.size() == 32);
  }
}

TEST_CASE("transformer config validation") {
  TransformerConfig cfg;
  cfg.hidden_dim = 30;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.n_layers = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  TransformerConfig ok;
  auto w = random_weights(ok, 1);
  w.blocks.pop_back();
  CHECK_THROWS_AS(TransformerLM(ok, w), Error);
}

TEST_CASE("weights round trip through manifest and blob") {
  testing::TempDir dir;
  TransformerConfig cfg;
  cfg.n_layers = 1;
  cfg.max_positions = 16;
  const auto w = random_weights(cfg, 12);
  save_weights(dir / "m.manifest.json", dir / "m.bin", cfg, w);
  CHECK(blob_path_for(dir / "m.manifest.json") == dir / "m.bin");
  const auto loaded = load_weights(dir / "m.manifest.json", dir / "m.bin");
  CHECK(loaded->config() == cfg);
  CHECK(loaded->weights() == w);
  CHECK(load_model(dir / "m.manifest.json")->vocab_size() == 256);
}

TEST_CASE("weight loading names the offending tensor") {
  testing::TempDir dir;
  TransformerConfig cfg;
  cfg.n_layers = 1;
  cfg.max_positions = 16;
  const fs::path manifest = dir / "m.manifest.json";
  const fs::path blob = dir / "m.bin";
  save_weights(manifest, blob, cfg, random_weights(cfg, 13));
  const auto original = read_json(manifest);
  const auto original_blob = testing::read_file(blob);

  SUBCASE("shape mismatch") {
    auto j = original;
    for (auto& t : j["tensors"]) {
      if (t["name"] == "h.0.mlp.c_fc.weight") t["shape"] = {32, 64};
    }
    write_json(manifest, j);
    const auto msg = load_error(manifest);
    CHECK(msg.find("h.0.mlp.c_fc.weight") != std::string::npos);
    CHECK(msg.find("[32, 128]") != std::string::npos);
  }
  SUBCASE("missing tensor") {
    auto j = original;
    auto& ts = j["tensors"];
    for (auto it = ts.begin(); it != ts.end(); ++it) {
      if ((*it)["name"] == "ln_f.bias") {
        ts.erase(it);
        break;
      }
    }
    write_json(manifest, j);
    CHECK(load_error(manifest).find("missing tensor 'ln_f.bias'") != std::string::npos);
  }
  SUBCASE("unexpected tensor") {
    auto j = original;
    j["tensors"].push_back({{"name", "h.1.ln_1.weight"}, {"shape", {32}}, {"offset", 0}});
    write_json(manifest, j);
    CHECK(load_error(manifest).find("unexpected tensor 'h.1.ln_1.weight'") != std::string::npos);
  }
  SUBCASE("truncated blob") {
    testing::write_file(blob, original_blob.substr(0, original_blob.size() - 8));
    CHECK(load_error(manifest).find("truncated") != std::string::npos);
  }
  SUBCASE("corrupted blob") {
    auto bytes = original_blob;
    bytes[100] = static_cast<char>(bytes[100] ^ 0x40);
    testing::write_file(blob, bytes);
    CHECK(load_error(manifest).find("corrupted") != std::string::npos);
  }
  SUBCASE("missing blob") {
    fs::remove(blob);
    CHECK(load_error(manifest).find("cannot open weight blob") != std::string::npos);
  }
  SUBCASE("bad config") {
    auto j = original;
    j["config"]["n_heads"] = 5;
    write_json(manifest, j);
    CHECK_FALSE(load_error(manifest).empty());
  }
}
