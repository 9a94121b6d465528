#pragma once

// Time and frequency masking of feature maps (the t1 / t2 views used for
// the siamese objective).

#include <stdexcept>
#include <string>
#include <utility>

#include "ssvc/features.hpp"
#include "ssvc/random.hpp"

namespace ssvc {

enum class MaskAxis { time, frequency };
enum class MaskFill { mean_of_map, zero };

struct MaskSpec {
  MaskAxis axis = MaskAxis::time;
  std::size_t max_width = 0;
  std::size_t n_masks = 1;
  MaskFill fill = MaskFill::mean_of_map;

  // One mask, up to 20% of the axis extent.
  static MaskSpec defaults_for(MaskAxis axis, std::size_t extent) {
    return {axis, extent / 5, 1, MaskFill::mean_of_map};
  }

  std::size_t extent_of(const FeatureMap& x) const {
    return axis == MaskAxis::time ? x.n_frames() : x.n_mcep();
  }

  void validate_for(const FeatureMap& x) const {
    if (max_width > extent_of(x)) {
      throw std::invalid_argument("mask max_width " + std::to_string(max_width) +
                                  " exceeds axis extent " + std::to_string(extent_of(x)));
    }
  }
};

inline std::string to_string(MaskAxis a) { return a == MaskAxis::time ? "time" : "frequency"; }
inline std::string to_string(MaskFill f) { return f == MaskFill::zero ? "zero" : "mean"; }

inline FeatureMap apply_mask(const FeatureMap& x, const MaskSpec& spec, Rng& rng) {
  spec.validate_for(x);
  FeatureMap out = x;
  double fill = 0.0;
  if (spec.fill == MaskFill::mean_of_map) {
    for (double v : x.data()) fill += v;
    fill /= static_cast<double>(x.data().size());
  }
  const std::size_t extent = spec.extent_of(x);
  for (std::size_t m = 0; m < spec.n_masks; ++m) {
    const auto width = static_cast<std::size_t>(uniform_index(rng, spec.max_width + 1));
    const auto start = static_cast<std::size_t>(uniform_index(rng, extent - width + 1));
    for (std::size_t i = start; i < start + width; ++i) {
      if (spec.axis == MaskAxis::time) {
        for (std::size_t d = 0; d < x.n_mcep(); ++d) out.at(d, i) = fill;
      } else {
        for (std::size_t t = 0; t < x.n_frames(); ++t) out.at(i, t) = fill;
      }
    }
  }
  return out;
}

// x1 = t1(x), x2 = t2(x); the two draws use consecutive, independent
// portions of the engine stream.
inline std::pair<FeatureMap, FeatureMap> augment_pair(const FeatureMap& x, const MaskSpec& t1,
                                                      const MaskSpec& t2, Rng& rng) {
  t1.validate_for(x);
  t2.validate_for(x);
  FeatureMap x1 = apply_mask(x, t1, rng);
  FeatureMap x2 = apply_mask(x, t2, rng);
  return {std::move(x1), std::move(x2)};
}

}  // namespace ssvc
