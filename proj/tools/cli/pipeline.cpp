#include "pipeline.hpp"

#include <atomic>
#include <chrono>

#include "csearch/error.hpp"
#include "csearch/parallel.hpp"
#include "csearch/rng.hpp"
#include "csearch/tokenizer.hpp"

namespace csearch::cli {

std::vector<Prefix> prepare_prefixes(std::span<const PrefixRecord> records, std::size_t prefix_length,
                                     const LanguageModel& model) {
  std::vector<Prefix> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Prefix p{r.id, prefix_tokens(r, prefix_length)};
    if (p.tokens.empty()) throw InvalidArgument("prefix '" + r.id + "' is empty");
    for (TokenId t : p.tokens) {
      if (t < 0 || t >= model.vocab_size()) {
        throw InvalidArgument("prefix '" + r.id + "' has token " + std::to_string(t) +
                              " outside the model vocabulary of " + std::to_string(model.vocab_size()));
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<GenerationRecord> generate_records(std::shared_ptr<const LanguageModel> model,
                                               std::span<const Prefix> prefixes,
                                               const DecodeParams& params,
                                               std::span<const std::uint64_t> seeds, bool diagnostics,
                                               int jobs, const Progress& progress) {
  params.validate();
  const bool byte_vocab = model->vocab_size() == kByteVocabSize;
  std::vector<GenerationRecord> records;
  records.reserve(prefixes.size() * seeds.size());

  for (std::uint64_t seed : seeds) {
    std::vector<GenerationRecord> batch(prefixes.size());
    std::atomic<std::size_t> done{0};
    parallel_for(prefixes.size(), jobs, [&](std::size_t i) {
      const auto& prefix = prefixes[i];
      DecodeParams p = params;
      p.seed = derive_stream_seed(seed, prefix.id);

      const auto start = std::chrono::steady_clock::now();
      Generation gen = decode(model, prefix.tokens, p);
      const auto stop = std::chrono::steady_clock::now();

      GenerationRecord& r = batch[i];
      r.prefix_id = prefix.id;
      r.prefix_tokens = prefix.tokens;
      r.params = p;
      r.run_seed = seed;
      r.generated_tokens = std::move(gen.tokens);
      if (byte_vocab) r.generated_text = decode_bytes(r.generated_tokens);
      r.stopped_at_eos = gen.stopped_at_eos;
      if (diagnostics) r.diagnostics = std::move(gen.steps);
      r.wall_time_ms = std::chrono::duration<double, std::milli>(stop - start).count();
      ++done;
    });
    if (progress) {
      progress("seed " + std::to_string(seed) + ": " + std::to_string(done.load()) + " prefixes done");
    }
    for (auto& r : batch) records.push_back(std::move(r));
  }
  return records;
}

}  // namespace csearch::cli
