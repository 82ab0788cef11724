// SPDX-License-Identifier: Apache-2.0
#include "panpp/label_map.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "panpp/error.hpp"

namespace panpp {

std::int32_t InstanceLabelMap::max_id() const noexcept {
  return labels_.empty() ? 0 : *std::max_element(labels_.begin(), labels_.end());
}

std::vector<std::size_t> InstanceLabelMap::histogram() const {
  std::vector<std::size_t> h(static_cast<std::size_t>(max_id()) + 1, 0);
  for (auto id : labels_) ++h[static_cast<std::size_t>(id)];
  return h;
}

Tensor InstanceLabelMap::to_tensor() const {
  Tensor t({1, h_, w_});
  for (std::size_t i = 0; i < labels_.size(); ++i) t[i] = static_cast<float>(labels_[i]);
  return t;
}

InstanceLabelMap InstanceLabelMap::from_tensor(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 1) throw_data("instance map must be [1,H,W], got " + t.shape_string());
  InstanceLabelMap m(t.dim(1), t.dim(2));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const float v = t[i];
    if (!(v >= 0.0f) || v != std::floor(v) || v > 2.0e9f) throw_data("instance map holds a non-id value");
    m[i] = static_cast<std::int32_t>(v);
  }
  return m;
}

bool same_partition(const InstanceLabelMap& a, const InstanceLabelMap& b) {
  if (a.height() != b.height() || a.width() != b.width()) return false;
  std::unordered_map<std::int32_t, std::int32_t> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a[i], y = b[i];
    if ((x == 0) != (y == 0)) return false;
    if (x == 0) continue;
    auto [it1, new1] = ab.emplace(x, y);
    auto [it2, new2] = ba.emplace(y, x);
    if (it1->second != y || it2->second != x) return false;
  }
  return true;
}

}  // namespace panpp
