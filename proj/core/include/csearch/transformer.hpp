#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "csearch/model.hpp"

namespace csearch {

struct TransformerConfig {
  int n_layers = 2;
  int n_heads = 4;
  int hidden_dim = 32;
  int mlp_dim = 128;
  int vocab_size = 256;
  int max_positions = 128;
  double layernorm_eps = 1e-5;

  /// Throws ConfigError when a dimension is < 1 or hidden_dim is not
  /// divisible by n_heads.
  void validate() const;
  int head_dim() const { return hidden_dim / n_heads; }

  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

/// Parameters of one pre-norm block. Matrices are row-major with shape
/// [in, out] (y = x W + b), the GPT-2 Conv1D layout.
struct BlockWeights {
  std::vector<float> ln1_weight, ln1_bias;
  std::vector<float> attn_weight, attn_bias;  // [hidden, 3*hidden] -> q | k | v
  std::vector<float> attn_proj_weight, attn_proj_bias;
  std::vector<float> ln2_weight, ln2_bias;
  std::vector<float> fc_weight, fc_bias;            // [hidden, mlp]
  std::vector<float> fc_proj_weight, fc_proj_bias;  // [mlp, hidden]

  friend bool operator==(const BlockWeights&, const BlockWeights&) = default;
};

struct TransformerWeights {
  std::vector<float> token_embedding;     // [vocab, hidden]; also the output projection
  std::vector<float> position_embedding;  // [max_positions, hidden]
  std::vector<BlockWeights> blocks;
  std::vector<float> lnf_weight, lnf_bias;

  friend bool operator==(const TransformerWeights&, const TransformerWeights&) = default;
};

/// Named view of one parameter tensor.
struct TensorRef {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float>* data;
};

struct TensorShape {
  std::string name;
  std::vector<std::int64_t> shape;
};

/// Tensor names and shapes for `config`, in canonical file order:
/// wte.weight, wpe.weight, h.{l}.{ln_1,attn.c_attn,attn.c_proj,ln_2,mlp.c_fc,
/// mlp.c_proj}.{weight,bias}, ln_f.{weight,bias}.
std::vector<TensorShape> expected_tensors(const TransformerConfig& config);
std::vector<TensorRef> tensor_refs(const TransformerConfig& config, TransformerWeights& weights);

/// Weights allocated for `config` with every tensor zero-filled.
TransformerWeights zero_weights(const TransformerConfig& config);

/// Deterministic Gaussian initialization: embeddings ~ N(0, embed_std^2),
/// matrices ~ N(0, weight_std^2), biases ~ N(0, (weight_std/4)^2), layer norm
/// gains 1 + N(0, 0.01) and biases N(0, 0.01).
TransformerWeights random_weights(const TransformerConfig& config, std::uint64_t seed,
                                  double embed_std = 0.3, double weight_std = 0.2);

/// Small GPT-2 style decoder: learned token and position embeddings, pre-norm
/// blocks of causal multi-head attention and a tanh-GELU MLP, final layer
/// norm, output projection tied to the token embedding.
///
/// Per-layer representations are the residual stream after each block; the
/// last entry has the final layer norm applied and is the token
/// representation.
class TransformerLM final : public LanguageModel {
 public:
  TransformerLM(TransformerConfig config, TransformerWeights weights);

  int vocab_size() const override { return config_.vocab_size; }
  int hidden_dim() const override { return config_.hidden_dim; }
  int num_layers() const override { return config_.n_layers; }
  std::size_t max_context() const override {
    return static_cast<std::size_t>(config_.max_positions);
  }
  std::string describe() const override;

  std::unique_ptr<ModelState> initial_state() const override;
  StepOutput advance(ModelState& state, TokenId token) const override;
  std::vector<StepOutput> forward_all(std::span<const TokenId> tokens) const override;

  /// Attention probabilities of the uncached pass: [layer][head][query][key],
  /// zero above the diagonal.
  std::vector<std::vector<std::vector<std::vector<double>>>> attention_maps(
      std::span<const TokenId> tokens) const;

  const TransformerConfig& config() const noexcept { return config_; }
  const TransformerWeights& weights() const noexcept { return weights_; }

 private:
  std::vector<StepOutput> run_uncached(
      std::span<const TokenId> tokens,
      std::vector<std::vector<std::vector<std::vector<double>>>>* maps) const;

  TransformerConfig config_;
  TransformerWeights weights_;
};

/// Writes `<stem>.manifest.json` and `<stem>.bin` style pairs; see weights.cpp
/// for the format.
void save_weights(const std::filesystem::path& manifest_path, const std::filesystem::path& blob_path,
                  const TransformerConfig& config, const TransformerWeights& weights);

/// Loads and validates a manifest/blob pair. Throws LoadError naming the
/// offending tensor on a shape mismatch, a missing or unexpected tensor,
/// overlapping extents, or a blob whose length differs from the declared
/// extent.
std::shared_ptr<const TransformerLM> load_weights(const std::filesystem::path& manifest_path,
                                                  const std::filesystem::path& blob_path);

/// `foo.manifest.json` -> `foo.bin`.
std::filesystem::path blob_path_for(const std::filesystem::path& manifest_path);

}  // namespace csearch
