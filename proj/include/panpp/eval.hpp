// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "panpp/geometry.hpp"
#include "panpp/pa.hpp"

namespace panpp {

struct MatchPair {
  int gt = 0;
  int pred = 0;
  double iou = 0.0;
  bool text_match = false;
};

struct ImageMatch {
  std::vector<MatchPair> pairs;    // one-to-one, IoU >= threshold
  std::vector<int> ignored_preds;  // mostly inside a DO-NOT-CARE region
  std::size_t gt_count = 0;        // non-ignored ground truths
  std::size_t pred_count = 0;      // predictions not ignored
  std::size_t tp = 0;
};

struct MatchReport {
  std::vector<ImageMatch> images;
  std::uint64_t tp = 0;
  std::uint64_t gt_count = 0;
  std::uint64_t pred_count = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
};

struct ImageAnnotations {
  std::vector<TextAnnotation> gts;
  std::vector<TextAnnotation> preds;
};

/// Greedy one-to-one matching in descending IoU order on a raster canvas
/// covering every polygon. With `require_text` a pair counts as a true
/// positive only when the normalized transcriptions agree.
ImageMatch match_image(std::span<const TextAnnotation> gts, std::span<const TextAnnotation> preds, double iou_thr,
                       bool require_text, bool case_sensitive);

/// Sums counts over images and derives P, R and F.
MatchReport summarize(std::vector<ImageMatch> images);

MatchReport match_detections(std::span<const TextAnnotation> gts, std::span<const TextAnnotation> preds,
                             double iou_thr = 0.5);
MatchReport match_detections(std::span<const TextAnnotation> gts, std::span<const TextInstance> preds,
                             double iou_thr = 0.5);
MatchReport e2e_f_measure(std::span<const TextAnnotation> gts, std::span<const TextAnnotation> preds,
                          double iou_thr = 0.5, bool case_sensitive = false);

MatchReport match_detections(std::span<const ImageAnnotations> images, double iou_thr = 0.5);
MatchReport e2e_f_measure(std::span<const ImageAnnotations> images, double iou_thr = 0.5, bool case_sensitive = false);

/// Trims surrounding whitespace and, unless case-sensitive, lowercases ASCII.
std::string normalize_transcription(std::string_view text, bool case_sensitive);

/// Levenshtein distance over UTF-8 code points.
std::size_t edit_distance(std::string_view a, std::string_view b);

/// Mean over images of the summed edit distances: matched pairs contribute
/// their distance, unmatched ground truths and predictions their length.
double aed(std::span<const ImageAnnotations> images, double iou_thr = 0.5, bool case_sensitive = false);

struct EvalOptions {
  double iou_threshold = 0.5;
  bool case_sensitive = false;
};

struct EvalSummary {
  std::vector<std::string> names;
  std::vector<ImageAnnotations> images;
  MatchReport detection;
  MatchReport end_to_end;
  double aed = 0.0;
};

/// Pairs every *.txt in `gt_dir` with the same-named file in `pred_dir`
/// (missing prediction file = no predictions).
EvalSummary evaluate_directories(const std::filesystem::path& gt_dir, const std::filesystem::path& pred_dir,
                                 const EvalOptions& opts);
std::string format_eval_report(const EvalSummary& s, const EvalOptions& opts);
std::string format_eval_csv(const EvalSummary& s);

}  // namespace panpp
