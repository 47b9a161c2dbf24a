#pragma once

#include <string>

#include "miqa/model.hpp"

namespace miqa {

/// Checkpoint layout, little-endian throughout:
///   magic "PNSM", format version (u32), component flags (u32:
///   bit 0 = extractor, bit 1 = complement extractor, bit 2 = predictor),
///   then each present component in that order as
///   input_dim u32, hidden count u32, hidden dims u32..., output_dim u32,
///   followed per layer by the f64 weight buffer (row-major) and the bias.
inline constexpr uint32_t kCheckpointVersion = 1;

enum class LoadMode {
  Full,           ///< load every component present in the file
  InferenceOnly,  ///< drop the complement extractor even if present
};

void save_checkpoint(const ModelTriple& triple, const std::string& path);

/// Round-trips are bit-exact. Throws ConfigError on corrupt, truncated or
/// version-mismatched files; nothing is returned partially constructed.
ModelTriple load_checkpoint(const std::string& path,
                            LoadMode mode = LoadMode::Full);

}  // namespace miqa
