#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "csearch/config.hpp"
#include "csearch/corpus_io.hpp"
#include "csearch/decoding.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace csearch;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "csearch");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<double> csv_numbers(const std::string& line) {
  std::vector<double> out;
  std::istringstream in(line);
  std::string cell;
  std::getline(in, cell, ',');  // row label
  while (std::getline(in, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

std::string fx(const std::string& name) { return testing::fixture(name).string(); }

}  // namespace

TEST_CASE("cli: usage errors exit 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"--help"}).code == 0);
  testing::TempDir dir;
  const auto out = (dir / "r.jsonl").string();
  const auto bad = run({"generate", "--model", fx("random.mock.json"), "--prefixes", fx("prefixes.jsonl"),
                        "--strategy", "greedy", "--p", "0.9", "--out", out});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("decoding.p ") != std::string::npos);
  CHECK(run({"generate", "--model", fx("random.mock.json"), "--prefixes", fx("prefixes.jsonl"), "--alpha", "1.5",
             "--out", out})
            .code == 2);
  CHECK(run({"generate", "--model", fx("random.mock.json"), "--prefixes", fx("prefixes.jsonl")}).code == 2);
  CHECK(run({"generate", "--model", (dir / "gone.manifest.json").string(), "--prefixes", fx("prefixes.jsonl"),
             "--out", out})
            .code == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("cli: generate is deterministic and echoes overrides") {
  testing::TempDir dir;
  const auto a = (dir / "a.jsonl").string();
  const auto b = (dir / "b.jsonl").string();
  for (const auto& out : {a, b}) {
    const auto r = run({"generate", "--model", fx("random.mock.json"), "--prefixes", fx("prefixes.jsonl"),
                        "--strategy", "greedy", "--max-new-tokens", "12", "--out", out, "--jobs", "3"});
    REQUIRE(r.code == 0);
  }
  const auto ra = read_records(a);
  REQUIRE(ra.size() == 10);
  CHECK(ra[0].prefix_id == "p0");
  CHECK(ra[9].prefix_id == "p9");
  std::string sa, sb;
  for (const auto& l : lines(testing::read_file(a))) sa += strip_volatile_fields(l) + "\n";
  for (const auto& l : lines(testing::read_file(b))) sb += strip_volatile_fields(l) + "\n";
  CHECK(sa == sb);

  const auto cs = (dir / "cs.jsonl").string();
  REQUIRE(run({"generate", "--model", fx("random.mock.json"), "--prefixes", fx("prefixes.jsonl"), "--strategy",
               "contrastive", "--k", "5", "--alpha", "0.6", "--max-new-tokens", "8", "--out", cs})
              .code == 0);
  for (const auto& r : read_records(cs)) {
    CHECK(r.params.strategy == Strategy::contrastive);
    CHECK(*r.params.k == 5);
    CHECK(*r.params.alpha == 0.6);
    CHECK(r.generated_tokens.size() == 8);
  }
}

TEST_CASE("cli: flags override the config file, which can come from the environment") {
  testing::TempDir dir;
  const auto cfg = dir / "run.cfg";
  testing::write_file(cfg, "[model]\npath = " + fx("random.mock.json") + "\n[data]\nprefixes = " +
                               fx("prefixes.jsonl") + "\n[decoding]\nk = 3\nalpha = 0.2\nmax_new_tokens = 5\n" +
                               "[output]\nrecords = out.jsonl\n");
  REQUIRE(run({"generate", "--config", cfg.string(), "--alpha", "0.7"}).code == 0);
  auto records = read_records(dir / "out.jsonl");
  CHECK(*records[0].params.k == 3);
  CHECK(*records[0].params.alpha == 0.7);

  // Switching strategy drops the config's contrastive settings.
  REQUIRE(run({"generate", "--config", cfg.string(), "--strategy", "nucleus", "--p", "0.8"}).code == 0);
  records = read_records(dir / "out.jsonl");
  CHECK(records[0].params.strategy == Strategy::nucleus);
  CHECK_FALSE(records[0].params.k.has_value());

  ::setenv(kConfigEnvVar, cfg.c_str(), 1);
  const auto env_run = run({"generate", "--max-new-tokens", "4"});
  ::unsetenv(kConfigEnvVar);
  REQUIRE(env_run.code == 0);
  CHECK(read_records(dir / "out.jsonl")[0].generated_tokens.size() == 4);
}

TEST_CASE("cli: evaluate writes a seed-grouped summary") {
  testing::TempDir dir;
  const auto rec = (dir / "r.jsonl").string();
  REQUIRE(run({"generate", "--model", fx("random.mock.json"), "--prefixes", fx("prefixes.jsonl"), "--strategy",
               "top_k", "--k", "4", "--seed", "0,1,2", "--max-new-tokens", "20", "--out", rec})
              .code == 0);
  CHECK(read_records(rec).size() == 30);
  const auto r = run({"evaluate", "--records", rec, "--evaluator", fx("random.mock.json")});
  REQUIRE(r.code == 0);
  const auto rows = lines(r.out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == "strategy,params,runs,diversity(%),diversity_std,rep-2(%),rep-3(%),rep-4(%),gen-length,"
                   "gen-length_std,coherence,coherence_std");
  CHECK(rows[1].rfind("top_k,k=4 max_new_tokens=20,3,", 0) == 0);

  const auto file = (dir / "s.csv").string();
  REQUIRE(run({"evaluate", "--records", rec, "--out", file}).code == 0);
  CHECK(testing::read_file(file).substr(testing::read_file(file).size() - 3) == ",,\n");

  testing::write_file(dir / "empty.jsonl", "");
  const auto empty = run({"evaluate", "--records", (dir / "empty.jsonl").string()});
  CHECK(empty.code == 1);
  CHECK(empty.err.find("error:") != std::string::npos);

  // Byte-level records do not fit a 32-token evaluator.
  const auto bytes = (dir / "bytes.jsonl").string();
  REQUIRE(run({"generate", "--model", fx("tiny.manifest.json"), "--prefixes", fx("texts.jsonl"), "--strategy",
               "greedy", "--max-new-tokens", "4", "--out", bytes})
              .code == 0);
  CHECK(run({"evaluate", "--records", bytes, "--evaluator", fx("random.mock.json")}).code != 0);
}

TEST_CASE("cli: isotropy") {
  const auto r = run({"isotropy", "--model", fx("cos04.mock.json"), "--prefixes", fx("prefixes.jsonl")});
  REQUIRE(r.code == 0);
  const auto rows = lines(r.out);
  REQUIRE(rows.size() == 2);
  CHECK(std::abs(csv_numbers(rows[1])[0] - 0.6) < 1e-6);
  const auto final_layer = run({"isotropy", "--model", fx("cos04.mock.json"), "--prefixes", fx("prefixes.jsonl"),
                                "--layer", "final"});
  CHECK(final_layer.out == r.out);

  const auto layered = run({"isotropy", "--model", fx("layered.mock.json"), "--prefixes", fx("prefixes.jsonl"),
                            "--layer", "all"});
  REQUIRE(layered.code == 0);
  const auto lrows = lines(layered.out);
  REQUIRE(lrows.size() == 4);
  CHECK(std::abs(csv_numbers(lrows[1])[0] - 0.8) < 1e-6);
  CHECK(std::abs(csv_numbers(lrows[3])[0] - 0.2) < 1e-6);

  const auto tiny = run({"isotropy", "--model", fx("tiny.manifest.json"), "--prefixes", fx("texts.jsonl"),
                         "--layer", "all"});
  REQUIRE(tiny.code == 0);
  CHECK(lines(tiny.out).size() == 3);

  CHECK(run({"isotropy", "--model", fx("tiny.manifest.json"), "--prefixes", fx("texts.jsonl"), "--layer", "3"})
            .code == 2);

  testing::TempDir dir;
  testing::write_file(dir / "short.jsonl",
                      "{\"id\": \"a\", \"prefix_tokens\": [1]}\n{\"id\": \"b\", \"prefix_tokens\": [1, 2, 3]}\n");
  const auto skipped = run({"isotropy", "--model", fx("cos04.mock.json"), "--prefixes", (dir / "short.jsonl").string()});
  CHECK(skipped.code == 0);
  CHECK(skipped.err.find("skipped 1") != std::string::npos);
}

TEST_CASE("cli: dpvar") {
  testing::TempDir dir;
  testing::write_file(dir / "one.jsonl", "{\"id\": \"a\", \"prefix_tokens\": [0, 1, 2, 3]}\n");
  const auto one = run({"dpvar", "--model", fx("isotropic.mock.json"), "--prefixes", (dir / "one.jsonl").string(),
                        "--steps", "1"});
  REQUIRE(one.code == 0);
  const auto rows = lines(one.out);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "t,f");
  CHECK(rows[1].rfind("1,", 0) == 0);
  CHECK(rows[2].rfind("s,", 0) == 0);
  CHECK(csv_numbers(rows[1]) == csv_numbers(rows[2]));

  const auto svg = (dir / "f.svg").string();
  const auto iso = run({"dpvar", "--model", fx("isotropic.mock.json"), "--prefixes", (dir / "one.jsonl").string(),
                        "--steps", "20", "--svg", svg});
  const auto aniso = run({"dpvar", "--model", fx("anisotropic.mock.json"), "--prefixes",
                          (dir / "one.jsonl").string(), "--steps", "20"});
  REQUIRE(iso.code == 0);
  REQUIRE(aniso.code == 0);
  CHECK(testing::read_file(svg).find("<svg") != std::string::npos);
  const auto ri = lines(iso.out);
  const auto ra = lines(aniso.out);
  for (std::size_t t = 1; t <= 20; ++t) {
    CHECK(csv_numbers(ra[t])[0] <= 0.01);
    CHECK(csv_numbers(ri[t])[0] > csv_numbers(ra[t])[0]);
  }
}

TEST_CASE("cli: sweep grids") {
  const auto cs = run({"sweep", "--model", fx("random.mock.json"), "--prefixes", fx("prefixes.jsonl"), "--strategy",
                       "contrastive", "--grid", "k=2,5,10", "--grid", "alpha=0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9",
                       "--max-new-tokens", "6", "--evaluator", fx("random.mock.json"), "--jobs", "2"});
  REQUIRE(cs.code == 0);
  const auto rows = lines(cs.out);
  REQUIRE(rows.size() == 28);
  CHECK(rows[0].rfind("k,alpha,runs,", 0) == 0);
  CHECK(rows[1].rfind("2,0.1,1,", 0) == 0);
  CHECK(rows[27].rfind("10,0.9,1,", 0) == 0);

  const auto nucleus = run({"sweep", "--model", fx("random.mock.json"), "--prefixes", fx("prefixes.jsonl"),
                            "--strategy", "nucleus", "--grid", "p=0.4,0.5,0.6,0.7,0.8,0.9,0.95,1.0,0.9",
                            "--max-new-tokens", "6", "--seed", "0,1,2"});
  REQUIRE(nucleus.code == 0);
  CHECK(lines(nucleus.out).size() == 9);
  CHECK(nucleus.err.find("duplicate grid value p=0.9") != std::string::npos);

  CHECK(run({"sweep", "--model", fx("random.mock.json"), "--prefixes", fx("prefixes.jsonl"), "--strategy",
             "greedy", "--grid", "k=1,2"})
            .code == 2);
}

TEST_CASE("cli: heatmap") {
  const auto one = run({"heatmap", "--model", fx("tiny.manifest.json"), "--text", "a"});
  REQUIRE(one.code == 0);
  CHECK(lines(one.out) == std::vector<std::string>{"token,97", "97,1"});

  const auto five = run({"heatmap", "--model", fx("cos04.mock.json"), "--tokens", "1,2,3,3,4"});
  REQUIRE(five.code == 0);
  const auto rows = lines(five.out);
  REQUIRE(rows.size() == 6);
  std::vector<std::vector<double>> m;
  for (std::size_t i = 1; i < rows.size(); ++i) m.push_back(csv_numbers(rows[i]));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(std::abs(m[i][j] - m[j][i]) < 1e-12);
      CHECK(std::abs(m[i][j] - (i == j ? 1.0 : 0.4)) < 1e-9);
    }
  }

  const auto text = run({"heatmap", "--model", fx("tiny.manifest.json"), "--text", "symmetric?"});
  REQUIRE(text.code == 0);
  std::vector<std::vector<double>> t;
  for (const auto& row : lines(text.out)) {
    if (row.rfind("token", 0) != 0) t.push_back(csv_numbers(row));
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < t.size(); ++j) CHECK(std::abs(t[i][j] - t[j][i]) < 1e-12);
  }

  CHECK(run({"heatmap", "--model", fx("tiny.manifest.json"), "--text", ""}).code == 2);
  CHECK(run({"heatmap", "--model", fx("cos04.mock.json"), "--tokens", "1,99"}).code == 2);
}

TEST_CASE("cli: selftest") {
  const auto ok = run({"selftest", "--model", fx("tiny.manifest.json")});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  CHECK(ok.out.find("PASS load") != std::string::npos);

  testing::TempDir dir;
  fs::copy_file(testing::fixture("tiny.manifest.json"), dir / "tiny.manifest.json");
  auto blob = testing::read_file(testing::fixture("tiny.bin"));
  blob[1234] = static_cast<char>(blob[1234] ^ 0x10);
  testing::write_file(dir / "tiny.bin", blob);
  const auto bad = run({"selftest", "--model", (dir / "tiny.manifest.json").string()});
  CHECK(bad.code == 1);
  CHECK(bad.out.find("FAIL load") != std::string::npos);
  CHECK(bad.out.find("corrupted") != std::string::npos);
}
