#include "csearch/model.hpp"

#include <string>

#include "csearch/error.hpp"
#include "csearch/prob.hpp"

namespace csearch {

Session::Session(std::shared_ptr<const LanguageModel> model)
    : model_(std::move(model)) {
  if (!model_) throw InvalidArgument("session requires a model");
  cache_ = model_->initial_state();
}

Session::Session(std::shared_ptr<const LanguageModel> model, std::unique_ptr<ModelState> cache)
    : model_(std::move(model)), cache_(std::move(cache)) {}

Session Session::fork() const {
  Session child(model_, cache_->clone());
  child.consumed_ = consumed_;
  child.reps_ = reps_;
  child.last_output_ = last_output_;
  return child;
}

const StepOutput& Session::advance(TokenId token) {
  if (token < 0 || token >= model_->vocab_size()) {
    throw InvalidArgument("token " + std::to_string(token) + " outside vocabulary of size " +
                          std::to_string(model_->vocab_size()));
  }
  if (consumed_.size() >= model_->max_context()) {
    throw CapacityError("context full at " + std::to_string(consumed_.size()) + " tokens");
  }
  StepOutput out = model_->advance(*cache_, token);
  consumed_.push_back(token);
  reps_.push_back(out.representation);
  last_output_ = std::move(out);
  return *last_output_;
}

void Session::advance_all(std::span<const TokenId> tokens) {
  for (TokenId t : tokens) advance(t);
}

ProbDist Session::next_distribution() const {
  if (!last_output_) {
    throw PreconditionError("next-token distribution requested before any token was consumed");
  }
  return softmax(last_output_->logits);
}

Session open_session(std::shared_ptr<const LanguageModel> model, std::span<const TokenId> prefix) {
  Session s(std::move(model));
  s.advance_all(prefix);
  return s;
}

}  // namespace csearch
