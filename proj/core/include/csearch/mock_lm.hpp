#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "csearch/model.hpp"

namespace csearch {

/// Table-driven language model.
///
/// Logits for the next position are looked up by the suffix of the consumed
/// tokens: the longest suffix (at most `context_order` tokens) with an entry
/// in `transition` wins, otherwise `default_logits` is used. The
/// representation of a consumed token depends only on the token and comes
/// from `rep_table`.
///
/// When `shared_cos` is set the representation table is generated as
/// h_i = sqrt(rho) u + sqrt(1 - rho) e_i over orthonormal u, e_0, e_1, ...,
/// which puts every distinct pair at cosine exactly rho. This needs
/// hidden_dim >= vocab_size + 1. `layer_shared_cos` builds one such table per
/// layer; the last layer must match the final table.
///
/// With `rep_key == position` the tables are indexed by the absolute position
/// of the token instead of its id (one row per position, max_context rows),
/// so a shared_cos construction gives pairwise cosine rho for any sequence,
/// repeats included.
enum class RepKey { token, position };

struct MockSpec {
  int vocab_size = 0;
  int hidden_dim = 0;
  int context_order = 1;
  std::map<TokenSequence, std::vector<double>> transition;
  std::vector<double> default_logits;
  std::vector<Representation> rep_table;
  std::optional<double> shared_cos;
  std::vector<double> layer_shared_cos;
  std::vector<std::vector<Representation>> layer_rep_tables;
  std::size_t max_context = std::size_t{1} << 20;
  RepKey rep_key = RepKey::token;
};

/// Representation table with pairwise cosine rho, see MockSpec.
std::vector<Representation> shared_cosine_table(int vocab_size, int hidden_dim, double rho);

class MockLM final : public LanguageModel {
 public:
  /// Validates and completes `spec`. Throws ConfigError when a table has the
  /// wrong dimension or a required row is missing.
  explicit MockLM(MockSpec spec);

  int vocab_size() const override { return spec_.vocab_size; }
  int hidden_dim() const override { return spec_.hidden_dim; }
  int num_layers() const override;
  std::size_t max_context() const override { return spec_.max_context; }
  std::string describe() const override;

  std::unique_ptr<ModelState> initial_state() const override;
  StepOutput advance(ModelState& state, TokenId token) const override;
  std::vector<StepOutput> forward_all(std::span<const TokenId> tokens) const override;

  const MockSpec& spec() const noexcept { return spec_; }

  /// Row that would be used after consuming `context`.
  const std::vector<double>& logits_for(std::span<const TokenId> context) const;

 private:
  StepOutput output_for(std::span<const TokenId> context) const;

  MockSpec spec_;
};

std::shared_ptr<const MockLM> mock_lm_build(MockSpec spec);

/// "Repeat trap": after token t the logit of t is 10, the tokens t+1..t+4
/// (mod V) follow at 0, -0.1, -0.2, -0.3 and everything else sits at -1. Greedy
/// decoding therefore repeats the last prefix token forever, while the next
/// few ids are the runners-up.
MockSpec repeat_trap_spec(int vocab_size, double shared_cos);

/// Random transition table over every context of length `context_order`
/// (logits ~ N(0, logit_scale^2)) and Gaussian representations.
MockSpec random_mock_spec(std::uint64_t seed, int vocab_size, int hidden_dim, int context_order,
                          double logit_scale = 2.0);

/// Context-free model whose every step uses `probs` (all entries > 0).
MockSpec fixed_distribution_spec(const std::vector<double>& probs);

}  // namespace csearch
