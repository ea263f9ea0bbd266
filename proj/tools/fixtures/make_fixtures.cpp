// Regenerates the checked-in test fixtures. The files under tests/fixtures are
// frozen; rerun this only when a format changes on purpose.
//
//   make_fixtures <fixtures-dir>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "csearch/model.hpp"
#include "csearch/model_loader.hpp"
#include "csearch/tokenizer.hpp"
#include "csearch/transformer.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <fixtures-dir>\n";
    return 2;
  }
  const fs::path dir = argv[1];
  fs::create_directories(dir);

  csearch::TransformerConfig cfg;  // 2 layers, hidden 32, vocab 256, 128 positions
  const auto weights = csearch::random_weights(cfg, 20221113);
  const auto manifest = dir / "tiny.manifest.json";
  csearch::save_weights(manifest, csearch::blob_path_for(manifest), cfg, weights);

  // Logits after "a" and after "ab", one value per line.
  auto model = csearch::load_model(manifest);
  csearch::Session session(model);
  std::ofstream golden(dir / "tiny_ab_logits.txt");
  for (csearch::TokenId t : csearch::encode_bytes("ab")) {
    const auto& out = session.advance(t);
    for (double v : out.logits) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      golden << buf << '\n';
    }
  }
  std::cout << "wrote fixtures to " << dir << '\n';
  return 0;
}
