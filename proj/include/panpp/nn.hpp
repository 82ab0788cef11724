// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "panpp/tensor.hpp"

namespace panpp {

struct ModelConfig {
  std::array<int, 4> backbone_channels{64, 128, 256, 512};
  int enhanced_channels = 128;
  int n_stk = 2;
  int emb_dim = 4;
  // Recognition branch.
  int rec_dim = 128;
  int rec_heads = 8;
  int rec_hidden = 128;
  int vocab_size = 39;

  int fused_channels() const noexcept { return 4 * enhanced_channels; }
  int det_out_channels() const noexcept { return 2 + emb_dim; }
  void validate() const;
};

struct ParamSpec {
  std::string name;
  std::vector<int> dims;
};

/// Every named parameter the architecture needs for `cfg`, in a fixed order.
std::vector<ParamSpec> architecture_manifest(const ModelConfig& cfg);

/// Named parameter tensors. Lookups validate dims against the architecture.
class WeightStore {
 public:
  void set(const std::string& name, Tensor t) { tensors_[name] = std::move(t); }
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  const Tensor& get(const std::string& name, std::span<const int> dims) const;
  const std::map<std::string, Tensor>& tensors() const noexcept { return tensors_; }

  /// Throws unless every manifest entry resolves to a tensor of the exact dims
  /// and every BN variance is non-negative.
  void validate(const ModelConfig& cfg) const;

  /// Seeded uniform [-0.1, 0.1] weights; BN mean 0 / var 1 / gamma 1 / beta 0;
  /// LSTM forget-gate bias +1.
  static WeightStore seeded(const ModelConfig& cfg, std::uint64_t seed);
  /// All weights zero; BN gamma = beta = mean = 0, var = 1.
  static WeightStore zeros(const ModelConfig& cfg);

  /// Directory layout: config.txt, manifest.txt ("name d0 d1 ..."), <name>.ptm.
  void save(const std::filesystem::path& dir, const ModelConfig& cfg) const;
  static WeightStore load(const std::filesystem::path& dir, ModelConfig* cfg_out);

 private:
  std::map<std::string, Tensor> tensors_;
};

std::string format_model_config(const ModelConfig& cfg);
ModelConfig parse_model_config(const std::string& text);

struct BatchNormParams {
  const Tensor& gamma;
  const Tensor& beta;
  const Tensor& mean;
  const Tensor& var;
};

/// Cross-correlation with zero padding. weight [Cout,Cin,kh,kw]; bias optional [Cout].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor* bias, int stride, int pad);
/// Per-channel 2-D convolution, weight [C,1,kh,kw].
Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, int stride, int pad);
Tensor batch_norm(const Tensor& x, const BatchNormParams& bn, float eps = 1e-5f);
Tensor relu(Tensor x);
/// 3x3 depthwise (pad 1, given stride) -> 1x1 projection -> BN -> ReLU.
Tensor separable_conv(const Tensor& x, const Tensor& dw_weight, const Tensor& pw_weight,
                      const BatchNormParams& bn, int stride);

using Pyramid = std::array<Tensor, 4>;  // strides 4, 8, 16, 32

/// One Feature Pyramid Enhancement Module; `prefix` names its weights, e.g. "fpem0".
Pyramid fpem(const Pyramid& pyramid, const WeightStore& w, const std::string& prefix);
/// Applies n_stk FPEMs, upsamples all levels to stride 4 and concatenates.
Tensor enhance_and_fuse(const Pyramid& pyramid, const WeightStore& w, int n_stk);

struct DetectionMaps {
  Tensor p_tex;  // [1,h,w] probabilities
  Tensor p_ker;  // [1,h,w] probabilities
  Tensor emb;    // [emb_dim,h,w]
};

DetectionMaps detection_head(const Tensor& fused, const WeightStore& w, const ModelConfig& cfg);
/// Stem + four stride-2 separable stages + 1x1 channel reduction.
Pyramid toy_backbone(const Tensor& image, const WeightStore& w, const ModelConfig& cfg);
/// 3x3 conv reducing the fused map to rec_dim channels for RoI extraction.
Tensor recognition_features(const Tensor& fused, const WeightStore& w, const ModelConfig& cfg);

}  // namespace panpp
