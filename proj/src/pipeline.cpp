// SPDX-License-Identifier: Apache-2.0
#include "panpp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "panpp/error.hpp"

namespace panpp {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double percentile(const std::vector<double>& sorted, double q) {
  // Nearest-rank.
  const auto n = sorted.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

void check_image(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw_data("image must be a [3,H,W] tensor, got " + image.shape_string());
  }
}

std::vector<std::string> decode_all(const Model& model, const Tensor& fused, const PAResult& pa, int max_steps,
                                    std::vector<DecodedText>* decoded) {
  const Tensor rec = recognition_features(fused, model.weights, model.config);
  std::vector<std::string> texts;
  for (const auto& inst : pa.instances) {
    const RoiPatch roi = masked_roi(rec, pa.labels, inst.id);
    DecodeResult d = decode(roi, model.weights, model.config, model.charset, max_steps);
    texts.push_back(model.charset.decode(d.text.symbols));
    decoded->push_back(std::move(d.text));
  }
  return texts;
}

}  // namespace

InferenceResult infer(const Model& model, const Tensor& image, const InferOptions& opts) {
  check_image(image);
  opts.pa.validate();
  const Pyramid pyr = toy_backbone(image, model.weights, model.config);
  const Tensor fused = enhance_and_fuse(pyr, model.weights, model.config.n_stk);
  InferenceResult r;
  r.maps = detection_head(fused, model.weights, model.config);
  r.pa = aggregate(r.maps.p_tex, r.maps.p_ker, r.maps.emb, opts.pa);
  if (opts.det_only) {
    r.transcriptions.assign(r.pa.instances.size(), "");
  } else {
    r.transcriptions = decode_all(model, fused, r.pa, opts.max_steps, &r.decoded);
  }
  return r;
}

std::vector<TextAnnotation> to_annotations(const PAResult& pa, const std::vector<std::string>& transcriptions) {
  std::vector<TextAnnotation> out;
  for (std::size_t i = 0; i < pa.instances.size(); ++i) {
    const auto& inst = pa.instances[i];
    TextAnnotation a{inst.image_contour, i < transcriptions.size() ? transcriptions[i] : "", false, inst.confidence};
    out.push_back(std::move(a));
  }
  return out;
}

void write_inference(const std::filesystem::path& dir, const InferenceResult& r) {
  std::filesystem::create_directories(dir);
  write_ptm(dir / "p_tex.ptm", r.maps.p_tex);
  write_ptm(dir / "p_ker.ptm", r.maps.p_ker);
  write_ptm(dir / "emb.ptm", r.maps.emb);
  write_ptm(dir / "instances.ptm", r.pa.labels.to_tensor());
  const auto anns = to_annotations(r.pa, r.transcriptions);
  write_annotations(dir / "result.txt", anns);
}

StageStats summarize_times(std::string name, std::vector<double> ms) {
  StageStats s{std::move(name)};
  if (ms.empty()) return s;
  double sum = 0.0;
  for (double v : ms) sum += v;
  std::sort(ms.begin(), ms.end());
  s.mean_ms = sum / static_cast<double>(ms.size());
  s.p50_ms = percentile(ms, 0.5);
  s.p99_ms = percentile(ms, 0.99);
  return s;
}

BenchReport bench(const Model& model, const Tensor& image, const InferOptions& opts, int repetitions) {
  if (repetitions < 1) throw_usage("bench needs at least one repetition");
  check_image(image);
  opts.pa.validate();
  std::vector<double> t_backbone, t_fpem, t_det, t_pa, t_rec;
  BenchReport rep;
  rep.repetitions = repetitions;
  for (int i = 0; i < repetitions; ++i) {
    auto t0 = Clock::now();
    const Pyramid pyr = toy_backbone(image, model.weights, model.config);
    t_backbone.push_back(ms_since(t0));

    t0 = Clock::now();
    const Tensor fused = enhance_and_fuse(pyr, model.weights, model.config.n_stk);
    t_fpem.push_back(ms_since(t0));

    t0 = Clock::now();
    const DetectionMaps maps = detection_head(fused, model.weights, model.config);
    const auto t_pa0 = Clock::now();
    const PAResult pa = aggregate(maps.p_tex, maps.p_ker, maps.emb, opts.pa);
    t_pa.push_back(ms_since(t_pa0));
    t_det.push_back(ms_since(t0));
    rep.map_height = maps.p_tex.dim(1);
    rep.map_width = maps.p_tex.dim(2);

    t0 = Clock::now();
    if (!opts.det_only) {
      std::vector<DecodedText> decoded;
      decode_all(model, fused, pa, opts.max_steps, &decoded);
    }
    t_rec.push_back(ms_since(t0));
  }
  rep.stages = {summarize_times("backbone", std::move(t_backbone)), summarize_times("fpem", std::move(t_fpem)),
                summarize_times("detection", std::move(t_det)), summarize_times("recognition", std::move(t_rec))};
  rep.pa = summarize_times("pa", std::move(t_pa));
  return rep;
}

BenchReport bench_postprocess(const DetectionMaps& maps, const PAConfig& cfg, int repetitions) {
  if (repetitions < 1) throw_usage("bench needs at least one repetition");
  std::vector<double> t;
  for (int i = 0; i < repetitions; ++i) {
    const auto t0 = Clock::now();
    const PAResult pa = aggregate(maps.p_tex, maps.p_ker, maps.emb, cfg);
    t.push_back(ms_since(t0));
  }
  BenchReport rep;
  rep.repetitions = repetitions;
  rep.map_height = maps.p_tex.dim(1);
  rep.map_width = maps.p_tex.dim(2);
  rep.pa = summarize_times("pa", std::move(t));
  return rep;
}

std::string format_bench_report(const BenchReport& r) {
  std::ostringstream o;
  o.precision(3);
  o << std::fixed;
  o << "repetitions=" << r.repetitions << '\n' << "map_size=" << r.map_height << 'x' << r.map_width << '\n';
  const auto line = [&](const StageStats& s) {
    o << "stage." << s.name << ".mean_ms=" << s.mean_ms << '\n'
      << "stage." << s.name << ".p50_ms=" << s.p50_ms << '\n'
      << "stage." << s.name << ".p99_ms=" << s.p99_ms << '\n';
  };
  for (const auto& s : r.stages) line(s);
  o << "pa.mean_ms=" << r.pa.mean_ms << '\n' << "pa.p50_ms=" << r.pa.p50_ms << '\n' << "pa.p99_ms=" << r.pa.p99_ms << '\n';
  return o.str();
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open " + path.string());
  const auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
      } else {
        t.push_back(c);
      }
    }
    return t;
  };
  if (token() != "P6") throw_data(path.string() + ": not a binary PPM (P6)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw_data(path.string() + ": malformed PPM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw_data(path.string() + ": unsupported PPM dims or maxval");
  std::vector<unsigned char> px(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (in.gcount() != static_cast<std::streamsize>(px.size())) throw_data(path.string() + ": truncated PPM payload");
  Tensor t({3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        t.at(c, y, x) = static_cast<float>(px[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / static_cast<float>(maxval);
      }
    }
  }
  return t;
}

}  // namespace panpp
