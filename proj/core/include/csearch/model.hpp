#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csearch/types.hpp"

namespace csearch {

/// Opaque per-backend incremental state (a KV cache, a token history, ...).
class ModelState {
 public:
  virtual ~ModelState() = default;
  virtual std::unique_ptr<ModelState> clone() const = 0;
};

/// An autoregressive language model. Implementations are immutable after
/// construction and may be shared across threads; all mutable decoding state
/// lives in a ModelState owned by a Session.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual int vocab_size() const = 0;
  virtual int hidden_dim() const = 0;
  virtual int num_layers() const = 0;
  virtual std::size_t max_context() const = 0;
  virtual std::string describe() const = 0;

  virtual std::unique_ptr<ModelState> initial_state() const = 0;

  /// Consumes `token` at the next position of `state`. Callers (Session) have
  /// already validated the token and the capacity.
  virtual StepOutput advance(ModelState& state, TokenId token) const = 0;

  /// Reference pass without any cache: one StepOutput per position of
  /// `tokens`, entry i conditioned on tokens[0..i].
  virtual std::vector<StepOutput> forward_all(std::span<const TokenId> tokens) const = 0;
};

/// Incremental decoding state over one model. A Session is single-owner; use
/// fork() to obtain an independent copy that shares nothing mutable.
class Session {
 public:
  explicit Session(std::shared_ptr<const LanguageModel> model);

  Session(Session&&) noexcept = default;
  Session& operator=(Session&&) noexcept = default;
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  Session fork() const;

  /// Consumes one token. Throws InvalidArgument for a token outside the
  /// vocabulary and CapacityError when the context is full.
  const StepOutput& advance(TokenId token);
  void advance_all(std::span<const TokenId> tokens);

  /// Next-token distribution at temperature 1. Requires at least one consumed
  /// token.
  ProbDist next_distribution() const;

  const LanguageModel& model() const noexcept { return *model_; }
  const std::shared_ptr<const LanguageModel>& model_handle() const noexcept { return model_; }
  const TokenSequence& consumed() const noexcept { return consumed_; }
  const std::vector<Representation>& representations() const noexcept { return reps_; }
  const std::optional<StepOutput>& last_output() const noexcept { return last_output_; }
  std::size_t length() const noexcept { return consumed_.size(); }

 private:
  Session(std::shared_ptr<const LanguageModel> model, std::unique_ptr<ModelState> cache);

  std::shared_ptr<const LanguageModel> model_;
  TokenSequence consumed_;
  std::vector<Representation> reps_;
  std::unique_ptr<ModelState> cache_;
  std::optional<StepOutput> last_output_;
};

/// Session advanced over `prefix`.
Session open_session(std::shared_ptr<const LanguageModel> model, std::span<const TokenId> prefix);

}  // namespace csearch
