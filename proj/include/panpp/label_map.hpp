// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "panpp/tensor.hpp"

namespace panpp {

/// H x W map of instance ids, 0 = background.
class InstanceLabelMap {
 public:
  InstanceLabelMap() = default;
  InstanceLabelMap(int h, int w) : h_(h), w_(w), labels_(static_cast<std::size_t>(h) * w, 0) {}

  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  std::size_t size() const noexcept { return labels_.size(); }

  std::int32_t& operator[](std::size_t i) noexcept { return labels_[i]; }
  std::int32_t operator[](std::size_t i) const noexcept { return labels_[i]; }
  std::int32_t& at(int y, int x) noexcept { return labels_[static_cast<std::size_t>(y) * w_ + x]; }
  std::int32_t at(int y, int x) const noexcept { return labels_[static_cast<std::size_t>(y) * w_ + x]; }

  const std::vector<std::int32_t>& labels() const noexcept { return labels_; }
  std::int32_t max_id() const noexcept;
  /// Pixel count per id, index 0 = background.
  std::vector<std::size_t> histogram() const;

  /// Float-encoded [1,H,W] map for the PTM container.
  Tensor to_tensor() const;
  static InstanceLabelMap from_tensor(const Tensor& t);

  friend bool operator==(const InstanceLabelMap&, const InstanceLabelMap&) = default;

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<std::int32_t> labels_;
};

/// True when a and b partition pixels identically up to a relabeling of the
/// nonzero ids (background must coincide).
bool same_partition(const InstanceLabelMap& a, const InstanceLabelMap& b);

}  // namespace panpp
