// Weight files come in pairs:
//
//   <stem>.manifest.json  UTF-8 JSON
//     {
//       "format": "csearch-weights", "version": 1, "dtype": "float32-le",
//       "config": {"n_layers": 2, "n_heads": 4, "hidden_dim": 32, "mlp_dim": 128,
//                  "vocab_size": 256, "max_positions": 128, "layernorm_eps": 1e-05},
//       "tensors": [{"name": "wte.weight", "shape": [256, 32], "offset": 0}, ...]
//     }
//   <stem>.bin            raw little-endian IEEE-754 float32, row-major tensors
//
// "offset" is in bytes. Extents may appear in any order but must not overlap,
// and the blob must end exactly at the largest extent. An optional
// "blob_fnv1a64" (16 hex digits) is checked against the blob when present.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "csearch/error.hpp"
#include "csearch/transformer.hpp"
#include "json.hpp"

namespace csearch {

namespace {

using json = nlohmann::ordered_json;

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::uint64_t byte_count(const std::vector<std::int64_t>& shape) {
  std::uint64_t n = 4;
  for (auto d : shape) n *= static_cast<std::uint64_t>(d);
  return n;
}

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
}

void floats_from_le(const char* src, std::size_t count, std::vector<float>& out) {
  out.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, src + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    out[i] = std::bit_cast<float>(bits);
  }
}

void floats_to_le(const std::vector<float>& in, std::string& out) {
  for (float f : in) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    char buf[4];
    std::memcpy(buf, &bits, 4);
    out.append(buf, 4);
  }
}

std::string fnv1a64_hex(const std::string& data) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json config_to_json(const TransformerConfig& c) {
  json j;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["hidden_dim"] = c.hidden_dim;
  j["mlp_dim"] = c.mlp_dim;
  j["vocab_size"] = c.vocab_size;
  j["max_positions"] = c.max_positions;
  j["layernorm_eps"] = c.layernorm_eps;
  return j;
}

TransformerConfig config_from_json(const json& j) {
  TransformerConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.mlp_dim = j.at("mlp_dim").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.layernorm_eps = j.value("layernorm_eps", 1e-5);
  return c;
}

}  // namespace

std::filesystem::path blob_path_for(const std::filesystem::path& manifest_path) {
  std::string s = manifest_path.string();
  constexpr std::string_view suffix = ".manifest.json";
  if (s.size() > suffix.size() && s.ends_with(suffix)) {
    return s.substr(0, s.size() - suffix.size()) + ".bin";
  }
  auto p = manifest_path;
  return p.replace_extension(".bin");
}

void save_weights(const std::filesystem::path& manifest_path, const std::filesystem::path& blob_path,
                  const TransformerConfig& config, const TransformerWeights& weights) {
  config.validate();
  auto copy = weights;
  json tensors = json::array();
  std::string blob;
  for (const auto& ref : tensor_refs(config, copy)) {
    if (ref.data->size() * 4 != byte_count(ref.shape)) {
      throw InvalidArgument("tensor '" + ref.name + "' does not match shape " +
                            shape_string(ref.shape));
    }
    json t;
    t["name"] = ref.name;
    t["shape"] = ref.shape;
    t["offset"] = blob.size();
    tensors.push_back(std::move(t));
    floats_to_le(*ref.data, blob);
  }
  json manifest;
  manifest["format"] = "csearch-weights";
  manifest["version"] = 1;
  manifest["dtype"] = "float32-le";
  manifest["config"] = config_to_json(config);
  manifest["blob_fnv1a64"] = fnv1a64_hex(blob);
  manifest["tensors"] = std::move(tensors);

  std::ofstream m(manifest_path, std::ios::binary);
  if (!m) throw IoError("cannot write " + manifest_path.string());
  m << manifest.dump(2) << '\n';
  std::ofstream b(blob_path, std::ios::binary);
  if (!b) throw IoError("cannot write " + blob_path.string());
  b.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!m || !b) throw IoError("write failed for " + manifest_path.string());
}

std::shared_ptr<const TransformerLM> load_weights(const std::filesystem::path& manifest_path,
                                                  const std::filesystem::path& blob_path) {
  const std::string where = manifest_path.string();
  std::ifstream m(manifest_path, std::ios::binary);
  if (!m) throw LoadError("cannot open weight manifest " + where);
  json manifest;
  TransformerConfig config;
  try {
    manifest = json::parse(m);
    config = config_from_json(manifest.at("config"));
  } catch (const json::exception& e) {
    throw LoadError("unparseable weight manifest " + where + ": " + e.what());
  }
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw LoadError(where + ": " + e.what());
  }
  if (manifest.contains("dtype") && manifest["dtype"] != "float32-le") {
    throw LoadError(where + ": unsupported dtype " + manifest["dtype"].dump());
  }

  struct Entry {
    std::string name;
    std::vector<std::int64_t> shape;
    std::uint64_t offset;
  };
  std::map<std::string, Entry> declared;
  std::vector<std::string> problems;
  try {
    for (const auto& t : manifest.at("tensors")) {
      Entry e{t.at("name").get<std::string>(), t.at("shape").get<std::vector<std::int64_t>>(),
              t.at("offset").get<std::uint64_t>()};
      if (declared.contains(e.name)) {
        problems.push_back("tensor '" + e.name + "' declared twice");
        continue;
      }
      declared.emplace(e.name, std::move(e));
    }
  } catch (const json::exception& e) {
    throw LoadError("unparseable tensor list in " + where + ": " + e.what());
  }

  const auto expected = expected_tensors(config);
  std::set<std::string> expected_names;
  for (const auto& t : expected) {
    expected_names.insert(t.name);
    auto it = declared.find(t.name);
    if (it == declared.end()) {
      problems.push_back("missing tensor '" + t.name + "'");
    } else if (it->second.shape != t.shape) {
      problems.push_back("tensor '" + t.name + "' has shape " + shape_string(it->second.shape) +
                         ", expected " + shape_string(t.shape));
    } else if (it->second.offset % 4 != 0) {
      problems.push_back("tensor '" + t.name + "' offset is not 4-byte aligned");
    }
  }
  for (const auto& [name, e] : declared) {
    if (!expected_names.contains(name)) problems.push_back("unexpected tensor '" + name + "'");
  }
  if (!problems.empty()) throw LoadError(where + ": " + ValidationError(problems).what());

  std::vector<const Entry*> by_offset;
  for (const auto& [name, e] : declared) by_offset.push_back(&e);
  std::sort(by_offset.begin(), by_offset.end(),
            [](const Entry* a, const Entry* b) { return a->offset < b->offset; });
  std::uint64_t extent = 0;
  for (std::size_t i = 0; i < by_offset.size(); ++i) {
    const auto end = by_offset[i]->offset + byte_count(by_offset[i]->shape);
    if (i + 1 < by_offset.size() && end > by_offset[i + 1]->offset) {
      throw LoadError(where + ": tensors '" + by_offset[i]->name + "' and '" +
                      by_offset[i + 1]->name + "' overlap");
    }
    extent = std::max(extent, end);
  }

  std::ifstream b(blob_path, std::ios::binary);
  if (!b) throw LoadError("cannot open weight blob " + blob_path.string());
  std::string blob((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  if (blob.size() < extent) {
    std::string culprit;
    for (const auto* e : by_offset) {
      if (e->offset + byte_count(e->shape) > blob.size()) {
        culprit = e->name;
        break;
      }
    }
    throw LoadError("weight blob " + blob_path.string() + " is truncated: " +
                    std::to_string(blob.size()) + " bytes, tensor '" + culprit + "' needs " +
                    std::to_string(extent));
  }
  if (blob.size() > extent) {
    throw LoadError("weight blob " + blob_path.string() + " has " + std::to_string(blob.size()) +
                    " bytes, manifest declares " + std::to_string(extent));
  }

  if (manifest.contains("blob_fnv1a64")) {
    const auto want = manifest["blob_fnv1a64"].get<std::string>();
    const auto got = fnv1a64_hex(blob);
    if (want != got) {
      throw LoadError("weight blob " + blob_path.string() + " is corrupted: checksum " + got +
                      " does not match manifest " + want);
    }
  }

  TransformerWeights weights;
  weights.blocks.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& ref : tensor_refs(config, weights)) {
    const auto& e = declared.at(ref.name);
    floats_from_le(blob.data() + e.offset, byte_count(e.shape) / 4, *ref.data);
    for (float f : *ref.data) {
      if (!std::isfinite(f)) throw LoadError("tensor '" + ref.name + "' contains non-finite values");
    }
  }
  return std::make_shared<const TransformerLM>(config, std::move(weights));
}

}  // namespace csearch
