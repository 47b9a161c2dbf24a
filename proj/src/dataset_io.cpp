#include "miqa/dataset_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "miqa/errors.hpp"

namespace miqa {
namespace {

constexpr char kMagic[4] = {'P', 'N', 'S', 'A'};

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {
      static_cast<unsigned char>(v & 0xff),
      static_cast<unsigned char>((v >> 8) & 0xff),
      static_cast<unsigned char>((v >> 16) & 0xff),
      static_cast<unsigned char>((v >> 24) & 0xff),
  };
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t take_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw ConfigError("dataset truncated: " + path);
  }
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
  uint32_t bits = std::bit_cast<uint32_t>(v);
  put_u32(out, bits);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("dataset meta: bad numeric value for " + key + ": '" +
                      s + "'");
  }
}

}  // namespace

void save_dataset(const Dataset& dataset, const DatasetMeta& meta,
                  const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot open dataset for writing: " + path);
  }
  out.write(kMagic, 4);
  put_u32(out, kDatasetFormatVersion);
  put_u32(out, static_cast<uint32_t>(dataset.images.size()));
  put_u32(out, static_cast<uint32_t>(dataset.height));
  put_u32(out, static_cast<uint32_t>(dataset.width));
  const size_t pixels = dataset.height * dataset.width;
  for (const auto& img : dataset.images) {
    if (img.pixels.size() != pixels) {
      throw ConfigError("dataset image has wrong pixel count");
    }
    const char grade = static_cast<char>(img.grade);
    out.write(&grade, 1);
    for (float v : img.pixels) put_f32(out, v);
  }
  out.flush();
  if (!out) {
    throw ConfigError("dataset write failed: " + path);
  }

  std::ofstream side(path + ".meta", std::ios::trunc);
  if (!side) {
    throw ConfigError("cannot open dataset meta for writing: " + path +
                      ".meta");
  }
  side << "seed: " << meta.seed << "\n";
  side << "count: " << dataset.images.size() << "\n";
  side << "height: " << dataset.height << "\n";
  side << "width: " << dataset.width << "\n";
  side << "proportion_good: " << format_double(meta.proportions.good) << "\n";
  side << "proportion_limited: " << format_double(meta.proportions.limited)
       << "\n";
  side << "proportion_poor: " << format_double(meta.proportions.poor) << "\n";
  side << "limited_crop_only_prob: "
       << format_double(meta.limited_crop_only_prob) << "\n";
  side << "generator_version: " << meta.generator_version << "\n";
  side.flush();
  if (!side) {
    throw ConfigError("dataset meta write failed: " + path + ".meta");
  }
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open dataset: " + path);
  }
  char magic[4];
  if (!in.read(magic, 4)) {
    throw ConfigError("dataset truncated: " + path);
  }
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw ConfigError("not a dataset file (bad magic): " + path);
  }
  const uint32_t version = take_u32(in, path);
  if (version != kDatasetFormatVersion) {
    throw ConfigError("unsupported dataset version " +
                      std::to_string(version) + ": " + path);
  }
  const uint32_t count = take_u32(in, path);
  Dataset ds;
  ds.height = take_u32(in, path);
  ds.width = take_u32(in, path);
  if (ds.height < 16 || ds.width < 16) {
    throw ConfigError("dataset corrupt (degenerate image size): " + path);
  }
  const size_t pixels = ds.height * ds.width;
  ds.images.resize(count);
  std::vector<unsigned char> raw(pixels * 4);
  for (auto& img : ds.images) {
    char grade = 0;
    if (!in.read(&grade, 1)) {
      throw ConfigError("dataset truncated: " + path);
    }
    if (grade < 0 || grade > 2) {
      throw ConfigError("dataset corrupt (bad grade byte): " + path);
    }
    img.grade = static_cast<Grade>(grade);
    if (!in.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size()))) {
      throw ConfigError("dataset truncated: " + path);
    }
    img.pixels.resize(pixels);
    for (size_t i = 0; i < pixels; ++i) {
      uint32_t bits = static_cast<uint32_t>(raw[4 * i]) |
                      (static_cast<uint32_t>(raw[4 * i + 1]) << 8) |
                      (static_cast<uint32_t>(raw[4 * i + 2]) << 16) |
                      (static_cast<uint32_t>(raw[4 * i + 3]) << 24);
      img.pixels[i] = std::bit_cast<float>(bits);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ConfigError("dataset has trailing bytes: " + path);
  }
  return ds;
}

DatasetMeta load_dataset_meta(const std::string& path) {
  const std::string meta_path = path + ".meta";
  std::ifstream in(meta_path);
  if (!in) {
    throw ConfigError("cannot open dataset meta: " + meta_path);
  }
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t colon = line.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("dataset meta: malformed line '" + line + "'");
    }
    std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    while (!value.empty() && value.front() == ' ') value.erase(0, 1);
    kv[key] = value;
  }

  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw ConfigError("dataset meta: missing key '" + std::string(key) +
                        "' in " + meta_path);
    }
    return it->second;
  };

  DatasetMeta meta;
  meta.seed = std::stoull(need("seed"));
  meta.count = std::stoull(need("count"));
  meta.proportions.good = parse_double(need("proportion_good"), "proportion_good");
  meta.proportions.limited =
      parse_double(need("proportion_limited"), "proportion_limited");
  meta.proportions.poor = parse_double(need("proportion_poor"), "proportion_poor");
  meta.limited_crop_only_prob = parse_double(need("limited_crop_only_prob"),
                                             "limited_crop_only_prob");
  meta.generator_version =
      static_cast<uint32_t>(std::stoul(need("generator_version")));
  return meta;
}

}  // namespace miqa
