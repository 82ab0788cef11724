// SPDX-License-Identifier: Apache-2.0
#include "panpp/labelgen.hpp"

#include "panpp/error.hpp"

namespace panpp {

double shrink_margin(const Polygon& p, double r) {
  if (!(r >= 0.0 && r <= 1.0)) throw_usage("shrink rate must lie in [0,1]");
  return area(p) * (1.0 - r * r) / perimeter(p);
}

LabelSet generate_labels(std::span<const TextAnnotation> annotations, int h, int w, double r) {
  if (h < 1 || w < 1) throw_usage("label canvas must be at least 1x1");
  if (!(r >= 0.0 && r <= 1.0)) throw_usage("shrink rate must lie in [0,1]");
  LabelSet out{Tensor({1, h, w}), Tensor({1, h, w}), InstanceLabelMap(h, w), InstanceLabelMap(h, w),
               Tensor({1, h, w})};

  std::int32_t next_id = 1;
  for (const auto& ann : annotations) {
    const auto region = rasterize_mask(ann.polygon, h, w);
    if (ann.ignore) {
      for (std::size_t i = 0; i < region.size(); ++i) {
        if (region[i]) out.ignore_mask[i] = 1.0f;
      }
      continue;
    }
    const std::int32_t id = next_id++;
    auto kernel_poly = shrink(ann.polygon, shrink_margin(ann.polygon, r));
    auto kernel = kernel_poly ? rasterize_mask(*kernel_poly, h, w) : region;
    bool any = false;
    for (auto v : kernel) any = any || v;
    // Tiny texts: keep a nonempty kernel so the instance stays recoverable.
    if (!any) kernel = region;
    for (std::size_t i = 0; i < region.size(); ++i) {
      if (region[i]) out.instances[i] = id;
      if (kernel[i]) out.kernel_instances[i] = id;
    }
  }
  for (std::size_t i = 0; i < out.instances.size(); ++i) {
    out.g_tex[i] = out.instances[i] ? 1.0f : 0.0f;
    out.g_ker[i] = out.kernel_instances[i] ? 1.0f : 0.0f;
  }
  return out;
}

}  // namespace panpp
