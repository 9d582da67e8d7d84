// Copyright 2026 the embforge authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "embforge/model.hpp"

#include <bit>
#include <cstring>

#include "embforge/instruction.hpp"
#include "embforge/io.hpp"

namespace embforge {
namespace {

constexpr std::string_view kMagic = "EMBFCKPT";
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

template <typename T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::string_view& in, const std::string& what) {
  require(in.size() >= sizeof(T), ErrorKind::kData, "truncated checkpoint (" + what + ")");
  T v;
  std::memcpy(&v, in.data(), sizeof(T));
  in.remove_prefix(sizeof(T));
  return v;
}

Json config_json(const EncoderConfig& c) {
  Json j;
  j["vocab_size"] = c.vocab_size;
  j["dim"] = c.dim;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["max_len"] = c.max_len;
  j["mask_mode"] = to_string(c.mask);
  j["positional"] = c.positional;
  j["vocab_hash"] = c.vocab_hash;
  return j;
}

EncoderConfig config_from_json(const Json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.dim = j.at("dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.mask = parse_mask_mode(j.at("mask_mode").get<std::string>());
  c.positional = j.at("positional").get<bool>();
  c.vocab_hash = j.at("vocab_hash").get<std::uint64_t>();
  return c;
}

}  // namespace

MaskMode parse_mask_mode(const std::string& s) {
  if (s == "bidirectional") return MaskMode::kBidirectional;
  if (s == "causal") return MaskMode::kCausal;
  raise(ErrorKind::kConfig, "unknown mask mode '" + s + "'");
}

void EncoderConfig::validate() const {
  require(vocab_size >= 2, ErrorKind::kConfig, "encoder: vocab_size must be >= 2");
  require(dim >= 1, ErrorKind::kConfig, "encoder: dim must be >= 1");
  require(layers >= 0, ErrorKind::kConfig, "encoder: layers must be >= 0");
  require(heads >= 1 && dim % heads == 0, ErrorKind::kConfig,
          "encoder: heads must divide dim");
  require(max_len >= 1, ErrorKind::kConfig, "encoder: max_len must be >= 1");
}

std::string format_query(std::string_view instruction, std::string_view query) {
  require(query.find_first_not_of(" \t\r\n") != std::string_view::npos, ErrorKind::kInput,
          "format_query: empty query");
  if (instruction.empty()) return std::string(query);
  std::string out = "Instruct: ";
  out += instruction;
  out += " \n Query: ";
  out += query;
  return out;
}

Model init_model(Tokenizer tokenizer, EncoderConfig cfg, std::uint64_t seed) {
  cfg.vocab_size = static_cast<int>(tokenizer.size());
  cfg.vocab_hash = tokenizer.hash();
  SeededRng rng(seed);
  auto params = init_encoder<float>(cfg, rng);
  return Model{std::move(tokenizer), std::move(params)};
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  Json header;
  header["config"] = config_json(model.params.config);
  header["vocab"] = model.tokenizer.vocab();
  Json tensors = Json::array();
  model.params.for_each([&](const std::string& name, const Mat<float>& t) {
    tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
  });
  header["tensors"] = std::move(tensors);
  const std::string hdr = header.dump();

  std::string out(kMagic);
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(hdr.size()));
  out += hdr;
  model.params.for_each([&](const std::string&, const Mat<float>& t) {
    out.append(reinterpret_cast<const char*>(t.data()), static_cast<std::size_t>(t.size()) * sizeof(float));
  });
  write_file_atomic(path, out);
}

Model load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::string_view in(bytes);
  require(in.substr(0, kMagic.size()) == kMagic, ErrorKind::kData,
          path.string() + ": not an embforge checkpoint");
  in.remove_prefix(kMagic.size());
  const auto version = take<std::uint32_t>(in, "version");
  require(version == kVersion, ErrorKind::kData, "unsupported checkpoint version " + std::to_string(version));
  const auto hdr_len = take<std::uint64_t>(in, "header length");
  require(in.size() >= hdr_len, ErrorKind::kData, "truncated checkpoint header");
  Json header;
  EncoderConfig cfg;
  std::vector<std::string> vocab;
  try {
    header = Json::parse(in.substr(0, hdr_len));
    cfg = config_from_json(header.at("config"));
    vocab = header.at("vocab").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    raise(ErrorKind::kData, path.string() + ": malformed checkpoint header: " + e.what());
  }
  in.remove_prefix(hdr_len);

  require(vocab.size() >= 2 && vocab[0] == Tokenizer::kPadToken && vocab[1] == Tokenizer::kUnkToken,
          ErrorKind::kData, "checkpoint vocabulary lacks special tokens");
  Tokenizer tok(std::vector<std::string>(vocab.begin() + 2, vocab.end()));
  require(static_cast<int>(tok.size()) == cfg.vocab_size && tok.hash() == cfg.vocab_hash,
          ErrorKind::kData, "checkpoint vocabulary does not match its config header");

  auto params = EncoderParams<float>::zeros(cfg);
  const auto& table = header.at("tensors");
  std::size_t ti = 0;
  params.for_each([&](const std::string& name, Mat<float>& t) {
    require(ti < table.size() && table[ti].at("name") == name &&
                table[ti].at("rows").get<Eigen::Index>() == t.rows() &&
                table[ti].at("cols").get<Eigen::Index>() == t.cols(),
            ErrorKind::kData, "checkpoint tensor table mismatch at " + name);
    const std::size_t n = static_cast<std::size_t>(t.size()) * sizeof(float);
    require(in.size() >= n, ErrorKind::kData, "truncated tensor " + name);
    std::memcpy(t.data(), in.data(), n);
    in.remove_prefix(n);
    ++ti;
  });
  require(in.empty() && ti == table.size(), ErrorKind::kData, "trailing bytes in checkpoint");
  return Model{std::move(tok), std::move(params)};
}

Model load_checkpoint(const std::filesystem::path& path, const EncoderConfig& expected) {
  Model m = load_checkpoint(path);
  require(m.params.config == expected, ErrorKind::kConfig,
          path.string() + ": checkpoint config does not match the expected encoder config");
  return m;
}

}  // namespace embforge
