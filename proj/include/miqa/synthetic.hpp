#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "miqa/objective.hpp"
#include "miqa/rng.hpp"

namespace miqa {

/// Raw three-way grade. Limited and Poor collapse to Deficient for the
/// binary task.
enum class Grade : uint8_t { Good = 0, Limited = 1, Poor = 2 };

QualityLabel task_label(Grade grade);
const char* grade_name(Grade grade);

/// Generating factors for one image. The grade is a deterministic
/// function of these (see grade_from_params); rng_seed drives the
/// renderer's streak placement and pixel noise.
struct SceneParams {
  double chamber_clarity = 1.0;
  double crop_fraction = 0.0;
  double artifact_strength = 0.0;
  double noise_sigma = 0.0;
  uint64_t rng_seed = 0;
};

struct GeneratorOptions {
  size_t height = 32;
  size_t width = 32;
  /// Within Limited, probability of the cropped-chamber case (the rest
  /// get mild streaks instead). The interesting out-of-distribution
  /// images come from the cropped case.
  double limited_crop_only_prob = 0.5;
};

/// Draws scene factors for a grade:
///   Good:    clarity in [0.8,1], crop in [0,0.1], no artifact.
///   Poor:    heavy artifact in [0.7,1] over an otherwise Good-like scene.
///   Limited: either cropped (crop in [0.3,0.8], artifact in [0,0.05]) or
///            mildly occluded (artifact in [0.3,0.6], Good-like geometry),
///            chosen with limited_crop_only_prob.
/// Artifact presence is sufficient but not necessary for a deficient
/// grade; a clear, uncropped chamber is necessary and sufficient for Good.
SceneParams sample_params(Grade grade, Rng& rng,
                          double limited_crop_only_prob = 0.5);

/// Recovers the grade from scene factors. Total on the sampled ranges,
/// which do not overlap across grades.
Grade grade_from_params(const SceneParams& params);

/// Deterministic rasterization: dark background, a bright chamber arc
/// spanning the frame (contrast scaled by clarity, shifted right out of
/// frame by crop_fraction of the width), dark vertical streaks whose
/// count and opacity grow with artifact_strength, then Gaussian noise,
/// clamped to [0,1]. Row-major, values exactly representable in f32.
std::vector<float> render(const SceneParams& params, size_t height,
                          size_t width);

struct SyntheticImage {
  SceneParams params;
  Grade grade = Grade::Good;
  std::vector<float> pixels;
};

struct Dataset {
  size_t height = 0;
  size_t width = 0;
  std::vector<SyntheticImage> images;
};

struct ClassProportions {
  double good = 0.21;
  double limited = 0.647;
  double poor = 0.143;
};

/// Largest-remainder apportionment of `total` into weights.size() parts.
/// Deterministic; ties go to the lower index. Weights need not sum to 1.
std::vector<size_t> apportion(size_t total, const std::vector<double>& weights);

/// Exact class counts for a dataset of n images.
std::array<size_t, 3> class_counts(size_t n, const ClassProportions& props);

/// Deterministic in (n, props, seed, options): grade order is a seeded
/// shuffle and every image draws from its own derived stream, so the
/// result is byte-identical across runs and machines.
Dataset generate_dataset(size_t n, const ClassProportions& props,
                         uint64_t seed, const GeneratorOptions& options = {});

enum class Scenario { Iid, LimitedHoldout, PoorHoldout };

Scenario scenario_from_string(const std::string& name);
const char* scenario_name(Scenario scenario);

/// Index partition of a dataset. OOD scenarios put every image of the
/// held-out grade in test and split the rest 70/30 into train/val.
struct Split {
  std::vector<size_t> train;
  std::vector<size_t> val;
  std::vector<size_t> test;
};

/// iid: exact 70/15/15 overall, stratified by grade. Holdouts: the named
/// grade becomes the whole test set. Requires all three grades present.
Split make_split(const Dataset& dataset, Scenario scenario, uint64_t seed);

}  // namespace miqa
