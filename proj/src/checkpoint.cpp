#include "miqa/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "miqa/errors.hpp"

namespace miqa {
namespace {

constexpr char kMagic[4] = {'P', 'N', 'S', 'M'};

constexpr uint32_t kFlagExtractor = 1u << 0;
constexpr uint32_t kFlagComplement = 1u << 1;
constexpr uint32_t kFlagPredictor = 1u << 2;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {
      static_cast<unsigned char>(v & 0xff),
      static_cast<unsigned char>((v >> 8) & 0xff),
      static_cast<unsigned char>((v >> 16) & 0xff),
      static_cast<unsigned char>((v >> 24) & 0xff),
  };
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  uint64_t bits = std::bit_cast<uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) {
    b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t take_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw ConfigError("checkpoint truncated: " + path);
  }
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

double take_f64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw ConfigError("checkpoint truncated: " + path);
  }
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

void put_mlp(std::ostream& out, const Mlp& mlp) {
  put_u32(out, static_cast<uint32_t>(mlp.spec.input_dim));
  put_u32(out, static_cast<uint32_t>(mlp.spec.hidden_dims.size()));
  for (size_t h : mlp.spec.hidden_dims) {
    put_u32(out, static_cast<uint32_t>(h));
  }
  put_u32(out, static_cast<uint32_t>(mlp.spec.output_dim));
  for (const Layer& layer : mlp.layers) {
    for (double w : layer.weight) put_f64(out, w);
    for (double b : layer.bias) put_f64(out, b);
  }
}

Mlp take_mlp(std::istream& in, const std::string& path) {
  MlpSpec spec;
  spec.input_dim = take_u32(in, path);
  uint32_t hidden_count = take_u32(in, path);
  if (hidden_count > 64) {
    throw ConfigError("checkpoint corrupt (implausible layer count): " + path);
  }
  spec.hidden_dims.resize(hidden_count);
  for (uint32_t i = 0; i < hidden_count; ++i) {
    spec.hidden_dims[i] = take_u32(in, path);
  }
  spec.output_dim = take_u32(in, path);

  Mlp mlp;
  mlp.spec = spec;
  size_t in_dim = spec.input_dim;
  std::vector<size_t> outs(spec.hidden_dims);
  outs.push_back(spec.output_dim);
  for (size_t out_dim : outs) {
    if (in_dim == 0 || out_dim == 0) {
      throw ConfigError("checkpoint corrupt (zero layer dim): " + path);
    }
    Layer layer;
    layer.in = in_dim;
    layer.out = out_dim;
    layer.weight.resize(in_dim * out_dim);
    layer.bias.resize(out_dim);
    for (double& w : layer.weight) w = take_f64(in, path);
    for (double& b : layer.bias) b = take_f64(in, path);
    mlp.layers.push_back(std::move(layer));
    in_dim = out_dim;
  }
  return mlp;
}

}  // namespace

void save_checkpoint(const ModelTriple& triple, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot open checkpoint for writing: " + path);
  }
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);

  uint32_t flags = kFlagExtractor | kFlagPredictor;
  if (triple.complement_extractor.has_value()) flags |= kFlagComplement;
  put_u32(out, flags);

  put_mlp(out, triple.extractor);
  if (triple.complement_extractor.has_value()) {
    put_mlp(out, *triple.complement_extractor);
  }
  put_mlp(out, triple.predictor);

  out.flush();
  if (!out) {
    throw ConfigError("checkpoint write failed: " + path);
  }
}

ModelTriple load_checkpoint(const std::string& path, LoadMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open checkpoint: " + path);
  }
  char magic[4];
  if (!in.read(magic, 4)) {
    throw ConfigError("checkpoint truncated: " + path);
  }
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw ConfigError("not a model checkpoint (bad magic): " + path);
  }
  uint32_t version = take_u32(in, path);
  if (version != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " +
                      std::to_string(version) + ": " + path);
  }
  uint32_t flags = take_u32(in, path);
  if (!(flags & kFlagExtractor) || !(flags & kFlagPredictor)) {
    throw ConfigError("checkpoint missing extractor or predictor: " + path);
  }

  ModelTriple triple;
  triple.extractor = take_mlp(in, path);
  if (flags & kFlagComplement) {
    Mlp complement = take_mlp(in, path);
    if (mode == LoadMode::Full) {
      triple.complement_extractor = std::move(complement);
    }
  }
  triple.predictor = take_mlp(in, path);

  // Anything after the last component means the file was not written by us.
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ConfigError("checkpoint has trailing bytes: " + path);
  }
  return triple;
}

}  // namespace miqa
