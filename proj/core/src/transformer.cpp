#include "csearch/transformer.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "csearch/error.hpp"
#include "csearch/rng.hpp"

namespace csearch {

void TransformerConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string("transformer ") + name + " must be >= 1");
  };
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(hidden_dim, "hidden_dim");
  positive(mlp_dim, "mlp_dim");
  positive(vocab_size, "vocab_size");
  positive(max_positions, "max_positions");
  if (hidden_dim % n_heads != 0) {
    throw ConfigError("transformer hidden_dim " + std::to_string(hidden_dim) +
                      " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (!(layernorm_eps > 0.0)) throw ConfigError("transformer layernorm_eps must be positive");
}

std::vector<TensorShape> expected_tensors(const TransformerConfig& c) {
  const std::int64_t h = c.hidden_dim;
  const std::int64_t m = c.mlp_dim;
  std::vector<TensorShape> out;
  out.push_back({"wte.weight", {c.vocab_size, h}});
  out.push_back({"wpe.weight", {c.max_positions, h}});
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "h." + std::to_string(l) + ".";
    out.push_back({p + "ln_1.weight", {h}});
    out.push_back({p + "ln_1.bias", {h}});
    out.push_back({p + "attn.c_attn.weight", {h, 3 * h}});
    out.push_back({p + "attn.c_attn.bias", {3 * h}});
    out.push_back({p + "attn.c_proj.weight", {h, h}});
    out.push_back({p + "attn.c_proj.bias", {h}});
    out.push_back({p + "ln_2.weight", {h}});
    out.push_back({p + "ln_2.bias", {h}});
    out.push_back({p + "mlp.c_fc.weight", {h, m}});
    out.push_back({p + "mlp.c_fc.bias", {m}});
    out.push_back({p + "mlp.c_proj.weight", {m, h}});
    out.push_back({p + "mlp.c_proj.bias", {h}});
  }
  out.push_back({"ln_f.weight", {h}});
  out.push_back({"ln_f.bias", {h}});
  return out;
}

std::vector<TensorRef> tensor_refs(const TransformerConfig& config, TransformerWeights& w) {
  if (w.blocks.size() != static_cast<std::size_t>(config.n_layers)) {
    throw ConfigError("weights have " + std::to_string(w.blocks.size()) + " blocks, config has " +
                      std::to_string(config.n_layers));
  }
  const auto shapes = expected_tensors(config);
  std::vector<std::vector<float>*> slots;
  slots.push_back(&w.token_embedding);
  slots.push_back(&w.position_embedding);
  for (auto& b : w.blocks) {
    for (auto* v : {&b.ln1_weight, &b.ln1_bias, &b.attn_weight, &b.attn_bias, &b.attn_proj_weight,
                    &b.attn_proj_bias, &b.ln2_weight, &b.ln2_bias, &b.fc_weight, &b.fc_bias,
                    &b.fc_proj_weight, &b.fc_proj_bias}) {
      slots.push_back(v);
    }
  }
  slots.push_back(&w.lnf_weight);
  slots.push_back(&w.lnf_bias);

  std::vector<TensorRef> refs;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    refs.push_back({shapes[i].name, shapes[i].shape, slots[i]});
  }
  return refs;
}

namespace {

std::size_t element_count(const std::vector<std::int64_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

TransformerWeights zero_weights(const TransformerConfig& config) {
  config.validate();
  TransformerWeights w;
  w.blocks.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& ref : tensor_refs(config, w)) ref.data->assign(element_count(ref.shape), 0.0f);
  return w;
}

TransformerWeights random_weights(const TransformerConfig& config, std::uint64_t seed,
                                  double embed_std, double weight_std) {
  TransformerWeights w = zero_weights(config);
  Rng rng(seed);
  for (auto& ref : tensor_refs(config, w)) {
    const bool is_embedding = ref.name == "wte.weight" || ref.name == "wpe.weight";
    const bool is_norm = ref.name.find("ln_") != std::string::npos;
    const bool is_bias = ref.name.ends_with(".bias");
    for (float& v : *ref.data) {
      double x = rng.normal();
      if (is_embedding) {
        x *= embed_std;
      } else if (is_norm) {
        x = (is_bias ? 0.0 : 1.0) + 0.1 * x;
      } else if (is_bias) {
        x *= weight_std / 4.0;
      } else {
        x *= weight_std;
      }
      v = static_cast<float>(x);
    }
  }
  return w;
}

namespace {

using Vec = std::vector<double>;

void layer_norm(std::span<const double> x, const std::vector<float>& gain,
                const std::vector<float>& bias, double eps, std::span<double> out) {
  const auto n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - mean) * inv * static_cast<double>(gain[i]) + static_cast<double>(bias[i]);
  }
}

// out = x W + b with W row-major [in, out].
void affine(std::span<const double> x, const std::vector<float>& weight,
            const std::vector<float>& bias, std::span<double> out) {
  const std::size_t n_in = x.size();
  const std::size_t n_out = out.size();
  for (std::size_t j = 0; j < n_out; ++j) out[j] = static_cast<double>(bias[j]);
  for (std::size_t i = 0; i < n_in; ++i) {
    const double xi = x[i];
    const float* row = weight.data() + i * n_out;
    for (std::size_t j = 0; j < n_out; ++j) out[j] += xi * static_cast<double>(row[j]);
  }
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

void tied_logits(std::span<const double> hidden, const std::vector<float>& wte, int vocab,
                 std::vector<double>& logits) {
  const std::size_t h = hidden.size();
  logits.assign(static_cast<std::size_t>(vocab), 0.0);
  for (std::size_t v = 0; v < logits.size(); ++v) {
    const float* row = wte.data() + v * h;
    double acc = 0.0;
    for (std::size_t i = 0; i < h; ++i) acc += hidden[i] * static_cast<double>(row[i]);
    logits[v] = acc;
  }
}

class KvCache final : public ModelState {
 public:
  explicit KvCache(std::size_t layers) : keys(layers), values(layers) {}
  std::unique_ptr<ModelState> clone() const override { return std::make_unique<KvCache>(*this); }

  // Per layer, flattened [position][hidden].
  std::vector<Vec> keys;
  std::vector<Vec> values;
  std::size_t position = 0;
};

}  // namespace

TransformerLM::TransformerLM(TransformerConfig config, TransformerWeights weights)
    : config_(config), weights_(std::move(weights)) {
  config_.validate();
  for (const auto& ref : tensor_refs(config_, weights_)) {
    if (ref.data->size() != element_count(ref.shape)) {
      throw ConfigError("tensor '" + ref.name + "' has " + std::to_string(ref.data->size()) +
                        " elements, expected " + std::to_string(element_count(ref.shape)));
    }
  }
}

std::string TransformerLM::describe() const {
  std::ostringstream os;
  os << "transformer(layers=" << config_.n_layers << ", heads=" << config_.n_heads
     << ", hidden=" << config_.hidden_dim << ", vocab=" << config_.vocab_size << ")";
  return os.str();
}

std::unique_ptr<ModelState> TransformerLM::initial_state() const {
  return std::make_unique<KvCache>(static_cast<std::size_t>(config_.n_layers));
}

StepOutput TransformerLM::advance(ModelState& state, TokenId token) const {
  auto& cache = static_cast<KvCache&>(state);
  const auto h = static_cast<std::size_t>(config_.hidden_dim);
  const auto hd = static_cast<std::size_t>(config_.head_dim());
  const auto pos = cache.position;
  if (pos >= static_cast<std::size_t>(config_.max_positions)) {
    throw CapacityError("transformer position " + std::to_string(pos) + " exceeds max_positions " +
                        std::to_string(config_.max_positions));
  }

  Vec x(h);
  for (std::size_t i = 0; i < h; ++i) {
    x[i] = static_cast<double>(weights_.token_embedding[static_cast<std::size_t>(token) * h + i]) +
           static_cast<double>(weights_.position_embedding[pos * h + i]);
  }

  StepOutput out;
  Vec normed(h), qkv(3 * h), attn(h), proj(h), fc(static_cast<std::size_t>(config_.mlp_dim));
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (std::size_t l = 0; l < weights_.blocks.size(); ++l) {
    const auto& b = weights_.blocks[l];
    layer_norm(x, b.ln1_weight, b.ln1_bias, config_.layernorm_eps, normed);
    affine(normed, b.attn_weight, b.attn_bias, qkv);

    auto& keys = cache.keys[l];
    auto& values = cache.values[l];
    keys.insert(keys.end(), qkv.begin() + static_cast<std::ptrdiff_t>(h),
                qkv.begin() + static_cast<std::ptrdiff_t>(2 * h));
    values.insert(values.end(), qkv.begin() + static_cast<std::ptrdiff_t>(2 * h), qkv.end());

    const std::size_t n_pos = pos + 1;
    Vec scores(n_pos);
    for (std::size_t head = 0; head < static_cast<std::size_t>(config_.n_heads); ++head) {
      const std::size_t off = head * hd;
      double max_score = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n_pos; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < hd; ++d) s += qkv[off + d] * keys[j * h + off + d];
        scores[j] = s * scale;
        max_score = std::max(max_score, scores[j]);
      }
      double z = 0.0;
      for (double& s : scores) {
        s = std::exp(s - max_score);
        z += s;
      }
      for (std::size_t d = 0; d < hd; ++d) attn[off + d] = 0.0;
      for (std::size_t j = 0; j < n_pos; ++j) {
        const double p = scores[j] / z;
        for (std::size_t d = 0; d < hd; ++d) attn[off + d] += p * values[j * h + off + d];
      }
    }
    affine(attn, b.attn_proj_weight, b.attn_proj_bias, proj);
    for (std::size_t i = 0; i < h; ++i) x[i] += proj[i];

    layer_norm(x, b.ln2_weight, b.ln2_bias, config_.layernorm_eps, normed);
    affine(normed, b.fc_weight, b.fc_bias, fc);
    for (double& v : fc) v = gelu(v);
    affine(fc, b.fc_proj_weight, b.fc_proj_bias, proj);
    for (std::size_t i = 0; i < h; ++i) x[i] += proj[i];

    if (l + 1 < weights_.blocks.size()) out.layer_representations.push_back(x);
  }
  cache.position = pos + 1;

  Vec final_hidden(h);
  layer_norm(x, weights_.lnf_weight, weights_.lnf_bias, config_.layernorm_eps, final_hidden);
  tied_logits(final_hidden, weights_.token_embedding, config_.vocab_size, out.logits);
  out.layer_representations.push_back(final_hidden);
  out.representation = std::move(final_hidden);
  return out;
}

std::vector<StepOutput> TransformerLM::run_uncached(
    std::span<const TokenId> tokens,
    std::vector<std::vector<std::vector<std::vector<double>>>>* maps) const {
  const std::size_t n = tokens.size();
  if (n > static_cast<std::size_t>(config_.max_positions)) {
    throw CapacityError("sequence of " + std::to_string(n) + " tokens exceeds max_positions " +
                        std::to_string(config_.max_positions));
  }
  const auto h = static_cast<std::size_t>(config_.hidden_dim);
  const auto hd = static_cast<std::size_t>(config_.head_dim());
  const auto heads = static_cast<std::size_t>(config_.n_heads);
  const auto m = static_cast<std::size_t>(config_.mlp_dim);
  for (TokenId t : tokens) {
    if (t < 0 || t >= config_.vocab_size) throw InvalidArgument("token outside vocabulary");
  }

  // Row-major [position][hidden] activations for the whole sequence.
  std::vector<Vec> x(n, Vec(h));
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < h; ++i) {
      x[t][i] =
          static_cast<double>(weights_.token_embedding[static_cast<std::size_t>(tokens[t]) * h + i]) +
          static_cast<double>(weights_.position_embedding[t * h + i]);
    }
  }

  std::vector<StepOutput> outs(n);
  if (maps) maps->assign(weights_.blocks.size(), {});
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (std::size_t l = 0; l < weights_.blocks.size(); ++l) {
    const auto& b = weights_.blocks[l];
    std::vector<Vec> qkv(n, Vec(3 * h));
    Vec normed(h);
    for (std::size_t t = 0; t < n; ++t) {
      layer_norm(x[t], b.ln1_weight, b.ln1_bias, config_.layernorm_eps, normed);
      affine(normed, b.attn_weight, b.attn_bias, qkv[t]);
    }

    std::vector<Vec> attn(n, Vec(h, 0.0));
    if (maps) (*maps)[l].assign(heads, std::vector<Vec>(n, Vec(n, 0.0)));
    for (std::size_t head = 0; head < heads; ++head) {
      const std::size_t off = head * hd;
      // Full score matrix with the causal mask applied as -inf.
      std::vector<Vec> probs(n, Vec(n, -std::numeric_limits<double>::infinity()));
      for (std::size_t q = 0; q < n; ++q) {
        for (std::size_t k = 0; k <= q; ++k) {
          double s = 0.0;
          for (std::size_t d = 0; d < hd; ++d) s += qkv[q][off + d] * qkv[k][h + off + d];
          probs[q][k] = s * scale;
        }
        double row_max = -std::numeric_limits<double>::infinity();
        for (double s : probs[q]) row_max = std::max(row_max, s);
        double z = 0.0;
        for (double& s : probs[q]) {
          s = std::exp(s - row_max);
          z += s;
        }
        for (double& s : probs[q]) s /= z;
        for (std::size_t k = 0; k < n; ++k) {
          for (std::size_t d = 0; d < hd; ++d) attn[q][off + d] += probs[q][k] * qkv[k][2 * h + off + d];
        }
      }
      if (maps) (*maps)[l][head] = std::move(probs);
    }

    Vec proj(h), fc(m);
    for (std::size_t t = 0; t < n; ++t) {
      affine(attn[t], b.attn_proj_weight, b.attn_proj_bias, proj);
      for (std::size_t i = 0; i < h; ++i) x[t][i] += proj[i];
      layer_norm(x[t], b.ln2_weight, b.ln2_bias, config_.layernorm_eps, normed);
      affine(normed, b.fc_weight, b.fc_bias, fc);
      for (double& v : fc) v = gelu(v);
      affine(fc, b.fc_proj_weight, b.fc_proj_bias, proj);
      for (std::size_t i = 0; i < h; ++i) x[t][i] += proj[i];
      if (l + 1 < weights_.blocks.size()) outs[t].layer_representations.push_back(x[t]);
    }
  }

  for (std::size_t t = 0; t < n; ++t) {
    Vec final_hidden(h);
    layer_norm(x[t], weights_.lnf_weight, weights_.lnf_bias, config_.layernorm_eps, final_hidden);
    tied_logits(final_hidden, weights_.token_embedding, config_.vocab_size, outs[t].logits);
    outs[t].layer_representations.push_back(final_hidden);
    outs[t].representation = std::move(final_hidden);
  }
  return outs;
}

std::vector<StepOutput> TransformerLM::forward_all(std::span<const TokenId> tokens) const {
  return run_uncached(tokens, nullptr);
}

std::vector<std::vector<std::vector<std::vector<double>>>> TransformerLM::attention_maps(
    std::span<const TokenId> tokens) const {
  std::vector<std::vector<std::vector<std::vector<double>>>> maps;
  run_uncached(tokens, &maps);
  return maps;
}

}  // namespace csearch
