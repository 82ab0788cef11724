// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "panpp/label_map.hpp"
#include "panpp/nn.hpp"
#include "panpp/tensor.hpp"

namespace panpp {

/// Symbol table. Ids 0..n-1 are symbols, followed by EOS, SOS and PAD.
class Charset {
 public:
  Charset(std::vector<std::string> symbols, bool case_fold);

  /// a-z and 0-9, case-folded input (V = 39).
  static Charset default_english();
  /// One UTF-8 symbol per line; case folding disabled.
  static Charset from_file(const std::filesystem::path& path);

  int size() const noexcept { return static_cast<int>(symbols_.size()) + 3; }
  int eos() const noexcept { return static_cast<int>(symbols_.size()); }
  int sos() const noexcept { return eos() + 1; }
  int pad() const noexcept { return eos() + 2; }
  bool is_special(int id) const noexcept { return id >= eos(); }

  /// Symbol ids followed by EOS. Unknown symbols throw.
  std::vector<int> encode(std::string_view text) const;
  /// Concatenates symbols up to the first EOS; special ids are skipped.
  std::string decode(std::span<const int> ids) const;

 private:
  std::vector<std::string> symbols_;
  bool case_fold_;
};

/// Splits UTF-8 text into code-point strings.
std::vector<std::string> utf8_symbols(std::string_view text);

inline constexpr int kRoiHeight = 8;
inline constexpr int kRoiWidth = 32;

struct RoiPatch {
  Tensor features;  // [C, 8, 32]
  int instance_id = 0;
};

/// Bounding rectangle of the mask, crop, multiply by the mask, then bilinear
/// resize to C x 8 x 32.
RoiPatch masked_roi(const Tensor& features, const Tensor& mask, int instance_id = 0);
RoiPatch masked_roi(const Tensor& features, const InstanceLabelMap& labels, int instance_id);

struct AttentionWeights {
  const Tensor& wq;  // [E, Q]
  const Tensor& bq;
  const Tensor& wk;  // [E, E]
  const Tensor& bk;
  const Tensor& wv;  // [E, E]
  const Tensor& bv;
  const Tensor& wo;  // [E, E]
  const Tensor& bo;
};

AttentionWeights attention_weights(const WeightStore& w, const std::string& prefix);

/// Key/value projections of a [L,E] memory, reusable across decode steps.
struct AttentionMemory {
  Tensor keys;    // [L,E]
  Tensor values;  // [L,E]
};

struct AttentionOutput {
  std::vector<float> output;   // [E]
  std::vector<float> weights;  // [L], averaged over heads
};

AttentionMemory project_memory(const Tensor& kv, const AttentionWeights& w);
AttentionOutput attend(std::span<const float> query, const AttentionMemory& memory, const AttentionWeights& w, int heads);
/// Scaled dot-product attention per head with Q/K/V/output projections.
AttentionOutput multi_head_attention(std::span<const float> query, const Tensor& kv, const AttentionWeights& w,
                                     int heads);

/// Flattens [C,8,32] into [256, C] positions.
Tensor flatten_roi(const RoiPatch& roi);

/// SOS feature: embed SOS, attend over the flattened patch.
std::vector<float> start(const RoiPatch& roi, const WeightStore& w, const ModelConfig& cfg, const Charset& charset);

enum class StopReason { kEos, kMaxSteps, kTeacher };

struct DecodedText {
  std::vector<int> symbols;                   // EOS-terminated unless truncated
  std::vector<std::vector<float>> attention;  // per step, over the 256 positions
  StopReason stop = StopReason::kMaxSteps;
};

struct DecodeResult {
  DecodedText text;
  Tensor logits;  // [T,V]
};

/// Greedy decoding with a two-layer LSTM and attention readout,
/// logits_t = FC([h_t ; A2(h_t, roi)]). With a teacher sequence the decoder
/// consumes SOS, teacher[0], ... and returns one logit row per teacher symbol.
DecodeResult decode(const RoiPatch& roi, const WeightStore& w, const ModelConfig& cfg, const Charset& charset,
                    int max_steps = 32, const std::vector<int>* teacher = nullptr);

}  // namespace panpp
