// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "panpp/geometry.hpp"
#include "panpp/label_map.hpp"
#include "panpp/tensor.hpp"

namespace panpp {

struct PAConfig {
  float tex_threshold = 0.5f;
  float ker_threshold = 0.5f;
  float dist_threshold = 3.0f;
  int min_kernel_area = 5;
  int min_instance_area = 10;
  float min_confidence = 0.5f;
  /// Factor from map resolution back to image resolution.
  double scale = 4.0;

  void validate() const;
};

struct TextInstance {
  int id = 0;
  std::size_t area = 0;      // pixels at map resolution
  float confidence = 0.0f;   // mean p_tex over the pixels
  Polygon contour;           // map resolution
  Polygon image_contour;     // scaled to image resolution
};

struct PAResult {
  InstanceLabelMap labels;  // final instance ids, 1..instances.size()
  std::vector<TextInstance> instances;
};

/// 4-connected labeling of pixels > 0.5, ids in raster discovery order.
/// Components with fewer than `min_area` pixels are removed and the
/// remaining ids re-compacted.
InstanceLabelMap connected_components(const Tensor& mask, int min_area = 0);

/// Kernel-seeded breadth-first growth over the text region, gated by the
/// embedding distance to the frozen kernel mean. FIFO seeded in (kernel id,
/// raster index) order, neighbours visited up, down, left, right; a pixel
/// goes to whichever kernel claims it first.
PAResult aggregate(const Tensor& p_tex, const Tensor& p_ker, const Tensor& emb, const PAConfig& cfg);

/// Outer boundary of a 4-connected region (pixels where labels == id), traced
/// along pixel edges so the polygon's raster reproduces the region (holes
/// filled). Vertices are multiplied by `scale`; collinear vertices dropped.
Polygon extract_contour(const InstanceLabelMap& labels, int id, double scale = 1.0);

}  // namespace panpp
