// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace panpp {

/// Dense row-major float32 array with dimensions fixed at construction.
/// Carries feature maps, probability maps, masks and embeddings.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims, float fill = 0.0f);
  Tensor(std::vector<int> dims, std::vector<float> data);

  static Tensor zeros(std::initializer_list<int> dims) { return Tensor(std::vector<int>(dims)); }

  const std::vector<int>& dims() const noexcept { return dims_; }
  int rank() const noexcept { return static_cast<int>(dims_.size()); }
  int dim(int i) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* raw() noexcept { return data_.data(); }
  const float* raw() const noexcept { return data_.data(); }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-3 [C,H,W] access.
  float& at(int c, int y, int x) noexcept {
    return data_[(static_cast<std::size_t>(c) * dims_[1] + y) * dims_[2] + x];
  }
  float at(int c, int y, int x) const noexcept {
    return data_[(static_cast<std::size_t>(c) * dims_[1] + y) * dims_[2] + x];
  }

  // Rank-2 [R,C] access.
  float& at(int r, int c) noexcept { return data_[static_cast<std::size_t>(r) * dims_[1] + c]; }
  float at(int r, int c) const noexcept { return data_[static_cast<std::size_t>(r) * dims_[1] + c]; }

  bool same_shape(const Tensor& other) const noexcept { return dims_ == other.dims_; }
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<int> dims_;
  std::vector<float> data_;
};

enum class ElementwiseOp { kAdd, kMul };

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseOp::kAdd); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseOp::kMul); }

/// Bilinear resize of a [C,H,W] map, align-corners-false: output pixel i samples
/// source coordinate (i + 0.5) * (in / out) - 0.5, clamped to [0, in - 1].
Tensor bilinear_resize(const Tensor& src, int out_h, int out_w);

/// Row-wise numerically stable softmax of a [R,C] matrix.
Tensor softmax_rows(const Tensor& x);

/// Concatenate [C_i,H,W] maps along the channel axis.
Tensor concat_channels(std::span<const Tensor> maps);

// PTM container: "PTM1", u32 rank, rank x u32 dims, f32 payload; all little-endian.
Tensor read_ptm(const std::filesystem::path& path);
Tensor decode_ptm(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_ptm(const Tensor& t);
/// Writes through a temporary file and renames it into place.
void write_ptm(const std::filesystem::path& path, const Tensor& t);

/// Atomic text/binary write helper shared by the file-producing modules.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace panpp
