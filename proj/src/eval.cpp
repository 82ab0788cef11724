// SPDX-License-Identifier: Apache-2.0
#include "panpp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "panpp/error.hpp"
#include "panpp/recognition.hpp"

namespace panpp {

namespace {

struct Canvas {
  double ox = 0.0, oy = 0.0;
  int h = 1, w = 1;
};

Canvas canvas_for(std::span<const TextAnnotation> a, std::span<const TextAnnotation> b) {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool any = false;
  for (auto list : {a, b}) {
    for (const auto& ann : list) {
      for (const Point& p : ann.polygon.vertices()) {
        if (!any) {
          x0 = x1 = p.x;
          y0 = y1 = p.y;
          any = true;
        }
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
      }
    }
  }
  Canvas c;
  if (!any) return c;
  c.ox = std::floor(x0);
  c.oy = std::floor(y0);
  c.w = static_cast<int>(std::ceil(x1) - c.ox) + 1;
  c.h = static_cast<int>(std::ceil(y1) - c.oy) + 1;
  return c;
}

struct Mask {
  std::vector<std::uint8_t> bits;
  std::size_t count = 0;
};

Mask raster(const Polygon& p, const Canvas& c) {
  Mask m{rasterize_mask(p.translated(-c.ox, -c.oy), c.h, c.w), 0};
  m.count = static_cast<std::size_t>(std::count(m.bits.begin(), m.bits.end(), std::uint8_t{1}));
  return m;
}

std::size_t overlap(const Mask& a, const Mask& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) n += a.bits[i] & b.bits[i];
  return n;
}

std::vector<TextAnnotation> as_annotations(std::span<const TextInstance> preds) {
  std::vector<TextAnnotation> out;
  out.reserve(preds.size());
  for (const auto& p : preds) {
    TextAnnotation a{p.image_contour, "", false, p.confidence};
    out.push_back(std::move(a));
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; };
  std::size_t b = 0, e = s.size();
  while (b < e && ws(s[b])) ++b;
  while (e > b && ws(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::string normalize_transcription(std::string_view text, bool case_sensitive) {
  std::string out = trim(text);
  if (!case_sensitive) {
    for (char& ch : out) {
      if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
    }
  }
  return out;
}

ImageMatch match_image(std::span<const TextAnnotation> gts, std::span<const TextAnnotation> preds, double iou_thr,
                       bool require_text, bool case_sensitive) {
  const Canvas canvas = canvas_for(gts, preds);
  std::vector<Mask> gm, pm;
  gm.reserve(gts.size());
  pm.reserve(preds.size());
  for (const auto& g : gts) gm.push_back(raster(g.polygon, canvas));
  for (const auto& p : preds) pm.push_back(raster(p.polygon, canvas));

  ImageMatch out;
  std::vector<bool> pred_ignored(preds.size(), false);
  for (std::size_t j = 0; j < preds.size(); ++j) {
    if (pm[j].count == 0) continue;
    for (std::size_t i = 0; i < gts.size(); ++i) {
      if (gts[i].ignore && static_cast<double>(overlap(gm[i], pm[j])) / static_cast<double>(pm[j].count) > 0.5) {
        pred_ignored[j] = true;
        out.ignored_preds.push_back(static_cast<int>(j));
        break;
      }
    }
  }
  for (const auto& g : gts) out.gt_count += g.ignore ? 0 : 1;
  out.pred_count = preds.size() - out.ignored_preds.size();

  std::vector<MatchPair> candidates;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (gts[i].ignore) continue;
    for (std::size_t j = 0; j < preds.size(); ++j) {
      if (pred_ignored[j]) continue;
      const std::size_t inter = overlap(gm[i], pm[j]);
      const std::size_t uni = gm[i].count + pm[j].count - inter;
      const double iou = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
      if (iou >= iou_thr && iou > 0.0) candidates.push_back({static_cast<int>(i), static_cast<int>(j), iou, false});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const MatchPair& a, const MatchPair& b) { return a.iou > b.iou; });
  std::vector<bool> gt_used(gts.size(), false), pred_used(preds.size(), false);
  for (MatchPair c : candidates) {
    if (gt_used[c.gt] || pred_used[c.pred]) continue;
    gt_used[c.gt] = pred_used[c.pred] = true;
    c.text_match = normalize_transcription(gts[c.gt].transcription, case_sensitive) ==
                   normalize_transcription(preds[c.pred].transcription, case_sensitive);
    if (!require_text || c.text_match) ++out.tp;
    out.pairs.push_back(c);
  }
  return out;
}

MatchReport summarize(std::vector<ImageMatch> images) {
  MatchReport r;
  for (const auto& im : images) {
    r.tp += im.tp;
    r.gt_count += im.gt_count;
    r.pred_count += im.pred_count;
  }
  r.images = std::move(images);
  r.precision = r.pred_count ? static_cast<double>(r.tp) / static_cast<double>(r.pred_count) : 0.0;
  r.recall = r.gt_count ? static_cast<double>(r.tp) / static_cast<double>(r.gt_count) : 0.0;
  r.f_measure = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

MatchReport match_detections(std::span<const TextAnnotation> gts, std::span<const TextAnnotation> preds,
                             double iou_thr) {
  return summarize({match_image(gts, preds, iou_thr, false, false)});
}

MatchReport match_detections(std::span<const TextAnnotation> gts, std::span<const TextInstance> preds,
                             double iou_thr) {
  const auto anns = as_annotations(preds);
  return match_detections(gts, anns, iou_thr);
}

MatchReport e2e_f_measure(std::span<const TextAnnotation> gts, std::span<const TextAnnotation> preds, double iou_thr,
                          bool case_sensitive) {
  return summarize({match_image(gts, preds, iou_thr, true, case_sensitive)});
}

MatchReport match_detections(std::span<const ImageAnnotations> images, double iou_thr) {
  std::vector<ImageMatch> m;
  for (const auto& im : images) m.push_back(match_image(im.gts, im.preds, iou_thr, false, false));
  return summarize(std::move(m));
}

MatchReport e2e_f_measure(std::span<const ImageAnnotations> images, double iou_thr, bool case_sensitive) {
  std::vector<ImageMatch> m;
  for (const auto& im : images) m.push_back(match_image(im.gts, im.preds, iou_thr, true, case_sensitive));
  return summarize(std::move(m));
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  const auto sa = utf8_symbols(a), sb = utf8_symbols(b);
  std::vector<std::size_t> row(sb.size() + 1);
  for (std::size_t j = 0; j <= sb.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= sa.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= sb.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (sa[i - 1] == sb[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[sb.size()];
}

double aed(std::span<const ImageAnnotations> images, double iou_thr, bool case_sensitive) {
  if (images.empty()) return 0.0;
  double total = 0.0;
  for (const auto& im : images) {
    const ImageMatch m = match_image(im.gts, im.preds, iou_thr, false, case_sensitive);
    std::vector<bool> gt_used(im.gts.size(), false), pred_used(im.preds.size(), false);
    for (int j : m.ignored_preds) pred_used[j] = true;
    std::uint64_t sum = 0;
    for (const auto& p : m.pairs) {
      gt_used[p.gt] = pred_used[p.pred] = true;
      sum += edit_distance(normalize_transcription(im.gts[p.gt].transcription, case_sensitive),
                           normalize_transcription(im.preds[p.pred].transcription, case_sensitive));
    }
    for (std::size_t i = 0; i < im.gts.size(); ++i) {
      if (!gt_used[i] && !im.gts[i].ignore) {
        sum += utf8_symbols(normalize_transcription(im.gts[i].transcription, case_sensitive)).size();
      }
    }
    for (std::size_t j = 0; j < im.preds.size(); ++j) {
      if (!pred_used[j]) sum += utf8_symbols(normalize_transcription(im.preds[j].transcription, case_sensitive)).size();
    }
    total += static_cast<double>(sum);
  }
  return total / static_cast<double>(images.size());
}

EvalSummary evaluate_directories(const std::filesystem::path& gt_dir, const std::filesystem::path& pred_dir,
                                 const EvalOptions& opts) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(gt_dir)) throw_io("ground-truth directory " + gt_dir.string() + " does not exist");
  if (!fs::is_directory(pred_dir)) throw_io("prediction directory " + pred_dir.string() + " does not exist");
  EvalSummary s;
  for (const auto& entry : fs::directory_iterator(gt_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") s.names.push_back(entry.path().filename().string());
  }
  std::sort(s.names.begin(), s.names.end());
  for (const auto& name : s.names) {
    ImageAnnotations im;
    im.gts = read_annotations(gt_dir / name);
    if (fs::exists(pred_dir / name)) im.preds = read_annotations(pred_dir / name);
    s.images.push_back(std::move(im));
  }
  s.detection = match_detections(s.images, opts.iou_threshold);
  s.end_to_end = e2e_f_measure(s.images, opts.iou_threshold, opts.case_sensitive);
  s.aed = aed(s.images, opts.iou_threshold, opts.case_sensitive);
  return s;
}

std::string format_eval_report(const EvalSummary& s, const EvalOptions& opts) {
  std::ostringstream o;
  o.precision(6);
  o << std::fixed;
  o << "images=" << s.names.size() << '\n'
    << "iou_threshold=" << opts.iou_threshold << '\n'
    << "case_sensitive=" << (opts.case_sensitive ? 1 : 0) << '\n'
    << "gt=" << s.detection.gt_count << '\n'
    << "pred=" << s.detection.pred_count << '\n'
    << "det_tp=" << s.detection.tp << '\n'
    << "det_precision=" << s.detection.precision << '\n'
    << "det_recall=" << s.detection.recall << '\n'
    << "det_f=" << s.detection.f_measure << '\n'
    << "e2e_tp=" << s.end_to_end.tp << '\n'
    << "e2e_precision=" << s.end_to_end.precision << '\n'
    << "e2e_recall=" << s.end_to_end.recall << '\n'
    << "e2e_f=" << s.end_to_end.f_measure << '\n'
    << "aed=" << s.aed << '\n';
  return o.str();
}

std::string format_eval_csv(const EvalSummary& s) {
  std::ostringstream o;
  o << "image,gt,pred,det_tp,e2e_tp\n";
  for (std::size_t i = 0; i < s.names.size(); ++i) {
    const auto& d = s.detection.images[i];
    o << s.names[i] << ',' << d.gt_count << ',' << d.pred_count << ',' << d.tp << ','
      << s.end_to_end.images[i].tp << '\n';
  }
  return o.str();
}

}  // namespace panpp
