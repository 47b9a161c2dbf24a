#include "miqa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "miqa/errors.hpp"

namespace miqa {
namespace {

constexpr double kBackground = 0.05;
constexpr double kArcPeak = 0.95;
constexpr double kNoiseSigmaMin = 0.005;
constexpr double kNoiseSigmaMax = 0.02;
constexpr int kMaxStreaks = 6;

}  // namespace

QualityLabel task_label(Grade grade) {
  return grade == Grade::Good ? QualityLabel::Good : QualityLabel::Deficient;
}

const char* grade_name(Grade grade) {
  switch (grade) {
    case Grade::Good:
      return "good";
    case Grade::Limited:
      return "limited";
    case Grade::Poor:
      return "poor";
  }
  return "?";
}

SceneParams sample_params(Grade grade, Rng& rng,
                          double limited_crop_only_prob) {
  SceneParams p;
  p.noise_sigma = rng.uniform(kNoiseSigmaMin, kNoiseSigmaMax);
  switch (grade) {
    case Grade::Good:
      p.chamber_clarity = rng.uniform(0.8, 1.0);
      p.crop_fraction = rng.uniform(0.0, 0.1);
      p.artifact_strength = 0.0;
      break;
    case Grade::Poor:
      p.chamber_clarity = rng.uniform(0.8, 1.0);
      p.crop_fraction = rng.uniform(0.0, 0.1);
      p.artifact_strength = rng.uniform(0.7, 1.0);
      break;
    case Grade::Limited:
      p.chamber_clarity = rng.uniform(0.8, 1.0);
      if (rng.uniform() < limited_crop_only_prob) {
        p.crop_fraction = rng.uniform(0.3, 0.8);
        p.artifact_strength = rng.uniform(0.0, 0.05);
      } else {
        p.crop_fraction = rng.uniform(0.0, 0.1);
        p.artifact_strength = rng.uniform(0.3, 0.6);
      }
      break;
  }
  return p;
}

Grade grade_from_params(const SceneParams& p) {
  if (p.artifact_strength >= 0.7) return Grade::Poor;
  if (p.artifact_strength == 0.0 && p.chamber_clarity >= 0.8 &&
      p.crop_fraction <= 0.1) {
    return Grade::Good;
  }
  return Grade::Limited;
}

std::vector<float> render(const SceneParams& p, size_t height, size_t width) {
  if (height < 16 || width < 16) {
    throw ConfigError("render: image dimensions must be at least 16x16, got " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);

  // Chamber arc: a thick circle whose top edge domes into the upper half
  // of the frame from a center well below it.
  const double cy = 1.5 * h;
  const double cx = 0.5 * w;
  const double radius = cy - 0.35 * h;
  const double half_thick = 0.06 * h;
  const double arc_value = kBackground + p.chamber_clarity * (kArcPeak - kBackground);
  const double shift = p.crop_fraction * w;

  std::vector<double> pix(height * width, kBackground);
  for (size_t y = 0; y < height; ++y) {
    const double py = static_cast<double>(y) + 0.5;
    for (size_t x = 0; x < width; ++x) {
      // The camera pans right by the crop amount; scene content past the
      // chamber's span renders as background.
      const double scene_x = static_cast<double>(x) + 0.5 + shift;
      if (scene_x >= w) continue;
      const double dx = scene_x - cx;
      const double dy = py - cy;
      const double dist = std::sqrt(dx * dx + dy * dy);
      if (std::fabs(dist - radius) <= half_thick) {
        pix[y * width + x] = arc_value;
      }
    }
  }

  if (p.artifact_strength > 0.0) {
    const int streaks = static_cast<int>(
        std::ceil(p.artifact_strength * kMaxStreaks));
    const double opacity = 0.15 + 0.85 * p.artifact_strength;
    Rng streak_rng(Rng::derive(p.rng_seed, 1));
    for (int s = 0; s < streaks; ++s) {
      const size_t x0 = streak_rng.index(width - 1);
      for (size_t y = 0; y < height; ++y) {
        pix[y * width + x0] *= 1.0 - opacity;
        pix[y * width + x0 + 1] *= 1.0 - opacity;
      }
    }
  }

  std::vector<float> out(height * width);
  if (p.noise_sigma > 0.0) {
    Rng noise_rng(Rng::derive(p.rng_seed, 2));
    for (size_t i = 0; i < pix.size(); ++i) {
      pix[i] += noise_rng.normal() * p.noise_sigma;
    }
  }
  for (size_t i = 0; i < pix.size(); ++i) {
    out[i] = static_cast<float>(std::clamp(pix[i], 0.0, 1.0));
  }
  return out;
}

std::vector<size_t> apportion(size_t total,
                              const std::vector<double>& weights) {
  if (weights.empty()) {
    throw ConfigError("apportion: no weights");
  }
  double sum = 0.0;
  for (double v : weights) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError("apportion: weights must be finite and non-negative");
    }
    sum += v;
  }
  if (sum <= 0.0) {
    throw ConfigError("apportion: weights sum to zero");
  }

  std::vector<size_t> counts(weights.size(), 0);
  std::vector<std::pair<double, size_t>> remainders;
  size_t assigned = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    const double share = static_cast<double>(total) * weights[i] / sum;
    counts[i] = static_cast<size_t>(std::floor(share));
    assigned += counts[i];
    remainders.emplace_back(share - std::floor(share), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t k = 0; assigned < total; ++k) {
    counts[remainders[k % remainders.size()].second] += 1;
    ++assigned;
  }
  return counts;
}

std::array<size_t, 3> class_counts(size_t n, const ClassProportions& props) {
  const double sum = props.good + props.limited + props.poor;
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw ConfigError("class proportions must sum to 1, got " +
                      std::to_string(sum));
  }
  auto counts = apportion(n, {props.good, props.limited, props.poor});
  return {counts[0], counts[1], counts[2]};
}

Dataset generate_dataset(size_t n, const ClassProportions& props,
                         uint64_t seed, const GeneratorOptions& options) {
  if (options.limited_crop_only_prob < 0.0 ||
      options.limited_crop_only_prob > 1.0) {
    throw ConfigError("limited_crop_only_prob must lie in [0,1]");
  }
  const auto counts = class_counts(n, props);

  std::vector<Grade> grades;
  grades.reserve(n);
  for (size_t g = 0; g < 3; ++g) {
    grades.insert(grades.end(), counts[g], static_cast<Grade>(g));
  }
  Rng order_rng(Rng::derive(seed, 0));
  order_rng.shuffle(grades);

  Dataset ds;
  ds.height = options.height;
  ds.width = options.width;
  ds.images.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const uint64_t stream = Rng::derive(seed, 1 + i);
    Rng rng(Rng::derive(stream, 0));
    SyntheticImage img;
    img.grade = grades[i];
    img.params = sample_params(grades[i], rng, options.limited_crop_only_prob);
    img.params.rng_seed = stream;
    img.pixels = render(img.params, options.height, options.width);
    ds.images.push_back(std::move(img));
  }
  return ds;
}

Scenario scenario_from_string(const std::string& name) {
  if (name == "iid") return Scenario::Iid;
  if (name == "limited-holdout") return Scenario::LimitedHoldout;
  if (name == "poor-holdout") return Scenario::PoorHoldout;
  throw ConfigError("unknown scenario '" + name +
                    "' (expected iid, limited-holdout, or poor-holdout)");
}

const char* scenario_name(Scenario scenario) {
  switch (scenario) {
    case Scenario::Iid:
      return "iid";
    case Scenario::LimitedHoldout:
      return "limited-holdout";
    case Scenario::PoorHoldout:
      return "poor-holdout";
  }
  return "?";
}

Split make_split(const Dataset& dataset, Scenario scenario, uint64_t seed) {
  std::array<std::vector<size_t>, 3> pools;
  for (size_t i = 0; i < dataset.images.size(); ++i) {
    pools[static_cast<size_t>(dataset.images[i].grade)].push_back(i);
  }
  for (size_t g = 0; g < 3; ++g) {
    if (pools[g].empty()) {
      throw ConfigError(std::string("make_split: dataset has no ") +
                        grade_name(static_cast<Grade>(g)) + " images");
    }
  }
  Rng rng(Rng::derive(seed, 11));
  for (auto& pool : pools) rng.shuffle(pool);

  Split split;
  auto take = [](std::vector<size_t>& dst, const std::vector<size_t>& pool,
                 size_t from, size_t count) {
    dst.insert(dst.end(), pool.begin() + from, pool.begin() + from + count);
  };

  if (scenario == Scenario::Iid) {
    const size_t n = dataset.images.size();
    auto global = apportion(n, {0.70, 0.15, 0.15});
    std::vector<double> sizes;
    for (const auto& pool : pools) {
      sizes.push_back(static_cast<double>(pool.size()));
    }
    auto t = apportion(global[0], sizes);
    auto v = apportion(global[1], sizes);
    // Cap validation at remaining capacity, handing any spillover to
    // grades that still have room; totals stay exact.
    size_t deficit = 0;
    for (size_t g = 0; g < 3; ++g) {
      const size_t cap = pools[g].size() - t[g];
      if (v[g] > cap) {
        deficit += v[g] - cap;
        v[g] = cap;
      }
    }
    for (size_t g = 0; g < 3 && deficit > 0; ++g) {
      const size_t spare = pools[g].size() - t[g] - v[g];
      const size_t move = std::min(spare, deficit);
      v[g] += move;
      deficit -= move;
    }
    for (size_t g = 0; g < 3; ++g) {
      take(split.train, pools[g], 0, t[g]);
      take(split.val, pools[g], t[g], v[g]);
      take(split.test, pools[g], t[g] + v[g],
           pools[g].size() - t[g] - v[g]);
    }
    return split;
  }

  const size_t held =
      scenario == Scenario::LimitedHoldout ? 1 : 2;  // grade index
  std::vector<size_t> kept;
  for (size_t g = 0; g < 3; ++g) {
    if (g != held) kept.push_back(g);
  }
  size_t n_keep = 0;
  std::vector<double> sizes;
  for (size_t g : kept) {
    n_keep += pools[g].size();
    sizes.push_back(static_cast<double>(pools[g].size()));
  }
  auto global = apportion(n_keep, {0.70, 0.30});
  auto t = apportion(global[0], sizes);
  for (size_t k = 0; k < kept.size(); ++k) {
    const size_t g = kept[k];
    take(split.train, pools[g], 0, t[k]);
    take(split.val, pools[g], t[k], pools[g].size() - t[k]);
  }
  split.test = pools[held];
  return split;
}

}  // namespace miqa
