// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "panpp/geometry.hpp"
#include "panpp/nn.hpp"
#include "panpp/pa.hpp"
#include "panpp/recognition.hpp"

namespace panpp {

struct Model {
  ModelConfig config;
  WeightStore weights;
  Charset charset = Charset::default_english();
};

struct InferOptions {
  PAConfig pa;
  bool det_only = false;
  int max_steps = 32;
};

struct InferenceResult {
  DetectionMaps maps;
  PAResult pa;
  std::vector<DecodedText> decoded;        // empty with det_only
  std::vector<std::string> transcriptions;  // one per instance
};

/// Backbone, FPEMs, detection head, PA, then masked RoI + decoding per instance.
InferenceResult infer(const Model& model, const Tensor& image, const InferOptions& opts);

/// Image-resolution contours with transcriptions and confidences.
std::vector<TextAnnotation> to_annotations(const PAResult& pa, const std::vector<std::string>& transcriptions);

/// p_tex.ptm, p_ker.ptm, emb.ptm, instances.ptm and result.txt.
void write_inference(const std::filesystem::path& dir, const InferenceResult& r);

struct StageStats {
  std::string name;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
};

StageStats summarize_times(std::string name, std::vector<double> ms);

struct BenchReport {
  int repetitions = 0;
  int map_height = 0;
  int map_width = 0;
  std::vector<StageStats> stages;  // backbone, fpem, detection (head + PA), recognition
  StageStats pa;                   // PA alone, included in detection
};

BenchReport bench(const Model& model, const Tensor& image, const InferOptions& opts, int repetitions);
/// PA alone on precomputed maps.
BenchReport bench_postprocess(const DetectionMaps& maps, const PAConfig& cfg, int repetitions);
std::string format_bench_report(const BenchReport& r);

/// Binary PPM (P6, maxval < 256) to a [3,H,W] tensor scaled to [0,1].
Tensor read_ppm(const std::filesystem::path& path);

}  // namespace panpp
