#include "csearch/mock_lm.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "csearch/error.hpp"
#include "csearch/rng.hpp"

namespace csearch {

namespace {

class MockState final : public ModelState {
 public:
  std::unique_ptr<ModelState> clone() const override { return std::make_unique<MockState>(*this); }
  TokenSequence history;
};

std::size_t table_rows(const MockSpec& spec) {
  return spec.rep_key == RepKey::token ? static_cast<std::size_t>(spec.vocab_size) : spec.max_context;
}

void check_table(const std::vector<Representation>& table, const MockSpec& spec,
                 const std::string& what) {
  if (table.size() != table_rows(spec)) {
    throw ConfigError(what + " has " + std::to_string(table.size()) + " rows, expected " +
                      std::to_string(table_rows(spec)));
  }
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].size() != static_cast<std::size_t>(spec.hidden_dim)) {
      throw ConfigError(what + " row " + std::to_string(i) + " has dimension " +
                        std::to_string(table[i].size()) + ", expected hidden_dim " +
                        std::to_string(spec.hidden_dim));
    }
    for (double v : table[i]) {
      if (!std::isfinite(v)) throw ConfigError(what + " row " + std::to_string(i) + " is not finite");
    }
  }
}

void check_rho(double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw ConfigError("shared_cos must lie in [0, 1), got " + std::to_string(rho));
  }
}

}  // namespace

std::vector<Representation> shared_cosine_table(int vocab_size, int hidden_dim, double rho) {
  check_rho(rho);
  if (hidden_dim < vocab_size + 1) {
    throw ConfigError("shared_cos construction needs hidden_dim >= vocab_size + 1 (" +
                      std::to_string(vocab_size + 1) + "), got " + std::to_string(hidden_dim));
  }
  // u = basis vector 0, e_i = basis vector i + 1.
  const double shared = std::sqrt(rho);
  const double own = std::sqrt(1.0 - rho);
  std::vector<Representation> table(static_cast<std::size_t>(vocab_size),
                                    Representation(static_cast<std::size_t>(hidden_dim), 0.0));
  for (int i = 0; i < vocab_size; ++i) {
    auto& row = table[static_cast<std::size_t>(i)];
    row[0] = shared;
    row[static_cast<std::size_t>(i) + 1] = own;
  }
  return table;
}

MockLM::MockLM(MockSpec spec) : spec_(std::move(spec)) {
  if (spec_.vocab_size < 1) throw ConfigError("mock vocab_size must be >= 1");
  if (spec_.hidden_dim < 1) throw ConfigError("mock hidden_dim must be >= 1");
  if (spec_.context_order < 1) throw ConfigError("mock context_order must be >= 1");
  if (spec_.max_context < 1) throw ConfigError("mock max_context must be >= 1");
  if (spec_.rep_key == RepKey::position && spec_.max_context > 1024) {
    throw ConfigError("position-keyed mock representations need max_context <= 1024");
  }
  const int rows = static_cast<int>(table_rows(spec_));

  if (!spec_.layer_shared_cos.empty()) {
    spec_.layer_rep_tables.clear();
    for (double rho : spec_.layer_shared_cos) {
      spec_.layer_rep_tables.push_back(
          shared_cosine_table(rows, spec_.hidden_dim, rho));
    }
    if (spec_.shared_cos && *spec_.shared_cos != spec_.layer_shared_cos.back()) {
      throw ConfigError("shared_cos must equal the last entry of layer_shared_cos");
    }
    spec_.shared_cos = spec_.layer_shared_cos.back();
  }
  if (spec_.shared_cos) {
    spec_.rep_table = shared_cosine_table(rows, spec_.hidden_dim, *spec_.shared_cos);
  }
  check_table(spec_.rep_table, spec_, "rep_table");
  for (std::size_t l = 0; l < spec_.layer_rep_tables.size(); ++l) {
    check_table(spec_.layer_rep_tables[l], spec_, "layer " + std::to_string(l) + " rep table");
  }
  if (!spec_.layer_rep_tables.empty() && spec_.layer_rep_tables.back() != spec_.rep_table) {
    throw ConfigError("final layer rep table must equal rep_table");
  }

  if (spec_.default_logits.size() != static_cast<std::size_t>(spec_.vocab_size)) {
    throw ConfigError("mock default_logits must have vocab_size entries (the fallback row for "
                      "unmatched contexts)");
  }
  auto check_row = [&](const std::vector<double>& row, const std::string& what) {
    if (row.size() != static_cast<std::size_t>(spec_.vocab_size)) {
      throw ConfigError(what + " has " + std::to_string(row.size()) + " logits, expected " +
                        std::to_string(spec_.vocab_size));
    }
    for (double v : row) {
      if (!std::isfinite(v)) throw ConfigError(what + " has a non-finite logit");
    }
  };
  check_row(spec_.default_logits, "default_logits");
  for (const auto& [ctx, row] : spec_.transition) {
    if (ctx.empty() || ctx.size() > static_cast<std::size_t>(spec_.context_order)) {
      throw ConfigError("transition context length must be in [1, context_order]");
    }
    for (TokenId t : ctx) {
      if (t < 0 || t >= spec_.vocab_size) throw ConfigError("transition context token out of range");
    }
    check_row(row, "transition row");
  }
}

int MockLM::num_layers() const {
  return spec_.layer_rep_tables.empty() ? 1 : static_cast<int>(spec_.layer_rep_tables.size());
}

std::string MockLM::describe() const {
  std::ostringstream os;
  os << "mock(vocab=" << spec_.vocab_size << ", hidden=" << spec_.hidden_dim
     << ", order=" << spec_.context_order;
  if (spec_.shared_cos) os << ", shared_cos=" << *spec_.shared_cos;
  if (spec_.rep_key == RepKey::position) os << ", position reps";
  os << ")";
  return os.str();
}

std::unique_ptr<ModelState> MockLM::initial_state() const { return std::make_unique<MockState>(); }

const std::vector<double>& MockLM::logits_for(std::span<const TokenId> context) const {
  const auto max_n = std::min<std::size_t>(static_cast<std::size_t>(spec_.context_order),
                                           context.size());
  for (std::size_t n = max_n; n >= 1; --n) {
    TokenSequence key(context.end() - static_cast<std::ptrdiff_t>(n), context.end());
    if (auto it = spec_.transition.find(key); it != spec_.transition.end()) return it->second;
  }
  return spec_.default_logits;
}

StepOutput MockLM::output_for(std::span<const TokenId> context) const {
  StepOutput out;
  out.logits = logits_for(context);
  const auto row = spec_.rep_key == RepKey::token ? static_cast<std::size_t>(context.back())
                                                  : context.size() - 1;
  out.representation = spec_.rep_table[row];
  if (!spec_.layer_rep_tables.empty()) {
    for (const auto& table : spec_.layer_rep_tables) out.layer_representations.push_back(table[row]);
  } else {
    out.layer_representations.push_back(out.representation);
  }
  return out;
}

StepOutput MockLM::advance(ModelState& state, TokenId token) const {
  auto& s = static_cast<MockState&>(state);
  s.history.push_back(token);
  return output_for(s.history);
}

std::vector<StepOutput> MockLM::forward_all(std::span<const TokenId> tokens) const {
  std::vector<StepOutput> outs;
  outs.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) outs.push_back(output_for(tokens.first(i + 1)));
  return outs;
}

std::shared_ptr<const MockLM> mock_lm_build(MockSpec spec) {
  return std::make_shared<const MockLM>(std::move(spec));
}

MockSpec repeat_trap_spec(int vocab_size, double shared_cos) {
  if (vocab_size < 6) throw ConfigError("repeat-trap mock needs vocab_size >= 6");
  MockSpec spec;
  spec.vocab_size = vocab_size;
  spec.hidden_dim = vocab_size + 1;
  spec.context_order = 1;
  spec.shared_cos = shared_cos;
  spec.default_logits.assign(static_cast<std::size_t>(vocab_size), 0.0);
  const double runners_up[] = {0.0, -0.1, -0.2, -0.3};
  for (int t = 0; t < vocab_size; ++t) {
    std::vector<double> row(static_cast<std::size_t>(vocab_size), -1.0);
    row[static_cast<std::size_t>(t)] = 10.0;
    for (int j = 1; j <= 4; ++j) {
      row[static_cast<std::size_t>((t + j) % vocab_size)] = runners_up[j - 1];
    }
    spec.transition[{t}] = std::move(row);
  }
  return spec;
}

MockSpec random_mock_spec(std::uint64_t seed, int vocab_size, int hidden_dim, int context_order,
                          double logit_scale) {
  if (vocab_size < 1 || hidden_dim < 1 || context_order < 1) {
    throw ConfigError("random mock dimensions must be >= 1");
  }
  Rng rng(seed);
  MockSpec spec;
  spec.vocab_size = vocab_size;
  spec.hidden_dim = hidden_dim;
  spec.context_order = context_order;
  auto random_row = [&] {
    std::vector<double> row(static_cast<std::size_t>(vocab_size));
    for (double& v : row) v = logit_scale * rng.normal();
    return row;
  };
  spec.default_logits = random_row();

  TokenSequence ctx(static_cast<std::size_t>(context_order), 0);
  while (true) {
    spec.transition[ctx] = random_row();
    std::size_t i = 0;
    while (i < ctx.size() && ++ctx[i] == vocab_size) ctx[i++] = 0;
    if (i == ctx.size()) break;
  }

  spec.rep_table.assign(static_cast<std::size_t>(vocab_size),
                        Representation(static_cast<std::size_t>(hidden_dim)));
  for (auto& row : spec.rep_table) {
    for (double& v : row) v = rng.normal();
  }
  return spec;
}

MockSpec fixed_distribution_spec(const std::vector<double>& probs) {
  MockSpec spec;
  spec.vocab_size = static_cast<int>(probs.size());
  spec.hidden_dim = spec.vocab_size + 1;
  spec.shared_cos = 0.0;
  for (double p : probs) {
    if (!(p > 0.0)) throw ConfigError("fixed distribution entries must be positive");
    spec.default_logits.push_back(std::log(p));
  }
  return spec;
}

}  // namespace csearch
