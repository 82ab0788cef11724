// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "panpp/geometry.hpp"
#include "panpp/label_map.hpp"
#include "panpp/tensor.hpp"

namespace panpp {

inline constexpr double kDefaultShrinkRate = 0.7;

/// Ground-truth maps for one image. Instance ids number the non-ignored
/// annotations consecutively in file order; later annotations overwrite earlier
/// ones where they overlap.
struct LabelSet {
  Tensor g_tex;                      // [1,H,W] binary text region
  Tensor g_ker;                      // [1,H,W] binary text kernel
  InstanceLabelMap instances;        // region ids
  InstanceLabelMap kernel_instances; // kernel ids (same numbering)
  Tensor ignore_mask;                // [1,H,W] binary DO-NOT-CARE union
};

/// m = Area * (1 - r^2) / Perimeter.
double shrink_margin(const Polygon& p, double r);

LabelSet generate_labels(std::span<const TextAnnotation> annotations, int h, int w,
                         double r = kDefaultShrinkRate);

}  // namespace panpp
