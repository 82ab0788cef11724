// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "panpp/label_map.hpp"
#include "panpp/labelgen.hpp"
#include "panpp/tensor.hpp"

namespace panpp {

struct LossConfig {
  double alpha = 0.5;
  double beta = 0.25;
  double delta_agg = 0.5;
  double delta_dis = 3.0;
  double ohem_ratio = 3.0;

  void validate() const;
};

struct LossValue {
  double value = 0.0;
  /// Gradients keyed by input name ("p", "emb", "p_tex", "logits", ...).
  std::map<std::string, Tensor> grads;
  /// Named sub-terms, e.g. "tex", "ker", "agg", "dis" for the detection loss.
  std::map<std::string, double> components;
  /// Hash of every piecewise branch taken (ReLU activity, zero norms, OHEM
  /// selection). Two inputs with equal signatures lie on the same smooth piece.
  std::uint64_t kink_signature = 0;
};

/// 1 - (2 sum p g + eps) / (sum p^2 + sum g^2 + eps) over valid pixels, eps = 1e-6.
LossValue dice_loss(const Tensor& p, const Tensor& g, const Tensor& valid);

/// All non-ignored positives plus the ratio*|positives| highest-scoring
/// non-ignored negatives (ties: lower flat index first). With no positives
/// every non-ignored negative is selected.
Tensor ohem_mask(const Tensor& p_tex, const Tensor& g_tex, const Tensor& ignore, double ratio);

/// Pulls text pixels of each instance toward the mean embedding of its kernel.
LossValue agg_loss(const Tensor& emb, const InstanceLabelMap& instances, const InstanceLabelMap& kernel_instances,
                   const LossConfig& cfg);

/// Pushes kernel means apart from each other and from background pixels
/// (g_tex = 0 and not ignored). `ignore` may be null.
LossValue dis_loss(const Tensor& emb, const InstanceLabelMap& instances, const InstanceLabelMap& kernel_instances,
                   const Tensor& g_tex, const LossConfig& cfg, const Tensor* ignore = nullptr);

/// L_tex (dice over the OHEM selection) + alpha L_ker (dice over non-ignored
/// text pixels) + beta (L_agg + L_dis).
LossValue det_loss(const Tensor& p_tex, const Tensor& p_ker, const Tensor& emb, const LabelSet& labels,
                   const LossConfig& cfg);

/// Mean cross-entropy of logits [T,V] rows against the EOS-terminated target.
LossValue rec_loss(const Tensor& logits, std::span<const int> target);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using LossFn = std::function<LossValue(std::span<const Tensor>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t kink_excluded = 0;
  std::map<std::string, double> per_input;
};

/// Central differences on up to `samples` random coordinates of every input;
/// relative error |fd - an| / max(|fd|, |an|, 1e-4). Coordinates whose +-2eps
/// neighbourhood changes the kink signature are excluded and counted.
GradCheckResult finite_diff_check(const LossFn& loss, const std::vector<NamedTensor>& inputs, double epsilon = 1e-3,
                                  std::size_t samples = 200, std::uint64_t seed = 42);

struct GradCheckRow {
  std::string name;
  GradCheckResult result;
  bool passed = false;
};

inline constexpr double kGradCheckTolerance = 1e-3;

/// Seeded fixtures for dice, agg, dis, det and rec losses.
std::vector<GradCheckRow> run_grad_check_suite(std::uint64_t seed = 42);

}  // namespace panpp
