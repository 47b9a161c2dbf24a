#pragma once

#include <cstdint>
#include <string>

#include "miqa/synthetic.hpp"

namespace miqa {

inline constexpr uint32_t kDatasetFormatVersion = 1;
inline constexpr uint32_t kGeneratorVersion = 1;

/// Provenance stored next to the binary file as "<path>.meta", one
/// "key: value" per line.
struct DatasetMeta {
  uint64_t seed = 0;
  size_t count = 0;
  ClassProportions proportions;
  double limited_crop_only_prob = 0.5;
  uint32_t generator_version = kGeneratorVersion;
};

/// Little-endian binary: magic "PNSA", format version u32, count u32,
/// height u32, width u32, then per image one grade byte (0 Good,
/// 1 Limited, 2 Poor) and height*width f32 pixels row-major. Scene
/// parameters are provenance, not payload; they stay out of the file.
void save_dataset(const Dataset& dataset, const DatasetMeta& meta,
                  const std::string& path);

/// Loaded images carry pixels and grade only; params are default-valued.
Dataset load_dataset(const std::string& path);

DatasetMeta load_dataset_meta(const std::string& path);

}  // namespace miqa
