// SPDX-License-Identifier: Apache-2.0
#include "panpp/panpp.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>
#include <string>

#include "panpp/error.hpp"
#include "panpp/eval.hpp"
#include "panpp/fixture.hpp"
#include "panpp/labelgen.hpp"
#include "panpp/losses.hpp"
#include "panpp/pipeline.hpp"

struct panpp_tensor {
  panpp::Tensor t;
};

struct panpp_model {
  panpp::Model m;
};

struct panpp_result {
  panpp::InferenceResult r;
  bool has_maps = false;
  panpp_tensor labels;
};

namespace {

thread_local std::string g_last_error;

template <class F>
panpp_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return PANPP_OK;
  } catch (const panpp::Error& e) {
    g_last_error = e.what();
    switch (e.kind()) {
      case panpp::ErrorKind::kUsage: return PANPP_ERR_USAGE;
      case panpp::ErrorKind::kData: return PANPP_ERR_DATA;
      case panpp::ErrorKind::kIo: return PANPP_ERR_IO;
    }
    return PANPP_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return PANPP_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PANPP_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PANPP_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) panpp::throw_usage(std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

panpp::ModelConfig to_model_config(const panpp_model_config& c, int vocab) {
  panpp::ModelConfig m;
  for (int i = 0; i < 4; ++i) m.backbone_channels[i] = c.backbone_channels[i];
  m.enhanced_channels = c.enhanced_channels;
  m.n_stk = c.n_stk;
  m.emb_dim = c.emb_dim;
  m.rec_dim = c.rec_dim;
  m.rec_heads = c.rec_heads;
  m.rec_hidden = c.rec_hidden;
  m.vocab_size = vocab;
  m.validate();
  return m;
}

panpp::PAConfig to_pa_config(const panpp_pa_config* c) {
  panpp::PAConfig p;
  if (c) {
    p.tex_threshold = c->tex_threshold;
    p.ker_threshold = c->ker_threshold;
    p.dist_threshold = c->dist_threshold;
    p.min_kernel_area = c->min_kernel_area;
    p.min_instance_area = c->min_instance_area;
    p.min_confidence = c->min_confidence;
    p.scale = c->scale;
  }
  p.validate();
  return p;
}

panpp::InferOptions to_infer_options(const panpp_pa_config* pa, const panpp_infer_options* o) {
  panpp::InferOptions io;
  io.pa = to_pa_config(pa);
  if (o) {
    io.det_only = o->det_only != 0;
    io.max_steps = o->max_steps;
  }
  return io;
}

panpp::Charset charset_from(const char* path) {
  return path ? panpp::Charset::from_file(path) : panpp::Charset::default_english();
}

panpp_result* make_result(panpp::InferenceResult r, bool has_maps) {
  auto* out = new panpp_result{std::move(r), has_maps, {}};
  out->labels.t = out->r.pa.labels.to_tensor();
  return out;
}

}  // namespace

extern "C" {

const char* panpp_last_error(void) { return g_last_error.c_str(); }
const char* panpp_version(void) { return "0.1.0"; }
void panpp_string_free(char* s) { std::free(s); }

panpp_status panpp_tensor_create(int rank, const int* dims, const float* data, panpp_tensor** out) {
  return guarded([&] {
    require(out, "out");
    if (rank < 1) panpp::throw_usage("tensor rank must be >= 1");
    require(dims, "dims");
    std::vector<int> d(dims, dims + rank);
    for (int v : d) {
      if (v < 1) panpp::throw_usage("tensor dims must be positive");
    }
    panpp::Tensor t(d);
    if (data) std::memcpy(t.raw(), data, t.size() * sizeof(float));
    *out = new panpp_tensor{std::move(t)};
  });
}

panpp_status panpp_tensor_read(const char* path, panpp_tensor** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new panpp_tensor{panpp::read_ptm(path)};
  });
}

panpp_status panpp_tensor_write(const panpp_tensor* t, const char* path) {
  return guarded([&] {
    require(t, "tensor");
    require(path, "path");
    panpp::write_ptm(path, t->t);
  });
}

int panpp_tensor_rank(const panpp_tensor* t) { return t ? t->t.rank() : 0; }
int panpp_tensor_dim(const panpp_tensor* t, int axis) {
  return t && axis >= 0 && axis < t->t.rank() ? t->t.dims()[axis] : 0;
}
size_t panpp_tensor_size(const panpp_tensor* t) { return t ? t->t.size() : 0; }
const float* panpp_tensor_data(const panpp_tensor* t) { return t ? t->t.raw() : nullptr; }
void panpp_tensor_free(panpp_tensor* t) { delete t; }

void panpp_model_config_default(panpp_model_config* cfg) {
  if (!cfg) return;
  const panpp::ModelConfig m;
  for (int i = 0; i < 4; ++i) cfg->backbone_channels[i] = m.backbone_channels[i];
  cfg->enhanced_channels = m.enhanced_channels;
  cfg->n_stk = m.n_stk;
  cfg->emb_dim = m.emb_dim;
  cfg->rec_dim = m.rec_dim;
  cfg->rec_heads = m.rec_heads;
  cfg->rec_hidden = m.rec_hidden;
}

void panpp_pa_config_default(panpp_pa_config* cfg) {
  if (!cfg) return;
  const panpp::PAConfig p;
  *cfg = {p.tex_threshold,     p.ker_threshold,  p.dist_threshold, p.min_kernel_area,
          p.min_instance_area, p.min_confidence, p.scale};
}

void panpp_infer_options_default(panpp_infer_options* opts) {
  if (!opts) return;
  opts->det_only = 0;
  opts->max_steps = 32;
}

panpp_status panpp_model_seeded(const panpp_model_config* cfg, uint64_t seed, const char* charset_path,
                                panpp_model** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    panpp::Charset cs = charset_from(charset_path);
    const panpp::ModelConfig mc = to_model_config(*cfg, cs.size());
    *out = new panpp_model{{mc, panpp::WeightStore::seeded(mc, seed), std::move(cs)}};
  });
}

panpp_status panpp_model_zeros(const panpp_model_config* cfg, const char* charset_path, panpp_model** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    panpp::Charset cs = charset_from(charset_path);
    const panpp::ModelConfig mc = to_model_config(*cfg, cs.size());
    *out = new panpp_model{{mc, panpp::WeightStore::zeros(mc), std::move(cs)}};
  });
}

panpp_status panpp_model_load(const char* dir, const char* charset_path, panpp_model** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "out");
    panpp::ModelConfig mc;
    panpp::WeightStore w = panpp::WeightStore::load(dir, &mc);
    panpp::Charset cs = charset_from(charset_path);
    if (cs.size() != mc.vocab_size) {
      panpp::throw_usage("weights expect vocab_size " + std::to_string(mc.vocab_size) + " but the charset gives " +
                         std::to_string(cs.size()));
    }
    *out = new panpp_model{{mc, std::move(w), std::move(cs)}};
  });
}

panpp_status panpp_model_save(const panpp_model* m, const char* dir) {
  return guarded([&] {
    require(m, "model");
    require(dir, "dir");
    m->m.weights.save(dir, m->m.config);
  });
}

void panpp_model_free(panpp_model* m) { delete m; }

panpp_status panpp_infer(const panpp_model* m, const panpp_tensor* image, const panpp_pa_config* pa,
                         const panpp_infer_options* opts, panpp_result** out) {
  return guarded([&] {
    require(m, "model");
    require(image, "image");
    require(out, "out");
    *out = make_result(panpp::infer(m->m, image->t, to_infer_options(pa, opts)), true);
  });
}

panpp_status panpp_postprocess(const panpp_tensor* p_tex, const panpp_tensor* p_ker, const panpp_tensor* emb,
                               const panpp_pa_config* pa, panpp_result** out) {
  return guarded([&] {
    require(p_tex, "p_tex");
    require(p_ker, "p_ker");
    require(emb, "emb");
    require(out, "out");
    panpp::InferenceResult r;
    r.pa = panpp::aggregate(p_tex->t, p_ker->t, emb->t, to_pa_config(pa));
    r.transcriptions.assign(r.pa.instances.size(), "");
    *out = make_result(std::move(r), false);
  });
}

size_t panpp_result_count(const panpp_result* r) { return r ? r->r.pa.instances.size() : 0; }

const char* panpp_result_text(const panpp_result* r, size_t i) {
  return r && i < r->r.transcriptions.size() ? r->r.transcriptions[i].c_str() : nullptr;
}

float panpp_result_confidence(const panpp_result* r, size_t i) {
  return r && i < r->r.pa.instances.size() ? r->r.pa.instances[i].confidence : 0.0f;
}

size_t panpp_result_contour(const panpp_result* r, size_t i, double* xy, size_t capacity) {
  if (!r || i >= r->r.pa.instances.size()) return 0;
  const auto& v = r->r.pa.instances[i].image_contour.vertices();
  for (size_t k = 0; k < v.size() && k < capacity && xy; ++k) {
    xy[2 * k] = v[k].x;
    xy[2 * k + 1] = v[k].y;
  }
  return v.size();
}

const panpp_tensor* panpp_result_labels(const panpp_result* r) { return r ? &r->labels : nullptr; }

panpp_status panpp_result_write(const panpp_result* r, const char* dir) {
  return guarded([&] {
    require(r, "result");
    require(dir, "dir");
    if (r->has_maps) {
      panpp::write_inference(dir, r->r);
    } else {
      std::filesystem::create_directories(dir);
      const std::filesystem::path d(dir);
      panpp::write_ptm(d / "instances.ptm", r->labels.t);
      const auto anns = panpp::to_annotations(r->r.pa, r->r.transcriptions);
      panpp::write_annotations(d / "result.txt", anns);
    }
  });
}

void panpp_result_free(panpp_result* r) { delete r; }

panpp_status panpp_gen_labels(const char* annotation_path, int height, int width, double shrink_rate,
                              const char* out_dir) {
  return guarded([&] {
    require(annotation_path, "annotation_path");
    require(out_dir, "out_dir");
    if (height < 1 || width < 1) panpp::throw_usage("label dims must be positive");
    const auto anns = panpp::read_annotations(annotation_path);
    const panpp::LabelSet ls = panpp::generate_labels(anns, height, width, shrink_rate);
    const std::filesystem::path d(out_dir);
    std::filesystem::create_directories(d);
    panpp::write_ptm(d / "g_tex.ptm", ls.g_tex);
    panpp::write_ptm(d / "g_ker.ptm", ls.g_ker);
    panpp::write_ptm(d / "instances.ptm", ls.instances.to_tensor());
    panpp::write_ptm(d / "kernel_instances.ptm", ls.kernel_instances.to_tensor());
    panpp::write_ptm(d / "ignore_mask.ptm", ls.ignore_mask);
  });
}

panpp_status panpp_grad_check(uint64_t seed, char** report, int* all_passed) {
  return guarded([&] {
    require(report, "report");
    const auto rows = panpp::run_grad_check_suite(seed);
    std::ostringstream o;
    bool ok = true;
    for (const auto& row : rows) {
      o << row.name << ".max_rel_error=" << row.result.max_rel_error << '\n'
        << row.name << ".checked=" << row.result.checked << '\n'
        << row.name << ".kink_excluded=" << row.result.kink_excluded << '\n'
        << row.name << ".pass=" << (row.passed ? 1 : 0) << '\n';
      ok = ok && row.passed;
    }
    o << "tolerance=" << panpp::kGradCheckTolerance << '\n' << "all_passed=" << (ok ? 1 : 0) << '\n';
    *report = dup_string(o.str());
    if (all_passed) *all_passed = ok ? 1 : 0;
  });
}

panpp_status panpp_eval_dirs(const char* gt_dir, const char* pred_dir, double iou_threshold, int case_sensitive,
                             const char* csv_path, char** report) {
  return guarded([&] {
    require(gt_dir, "gt_dir");
    require(pred_dir, "pred_dir");
    require(report, "report");
    if (!(iou_threshold > 0 && iou_threshold <= 1)) panpp::throw_usage("IoU threshold must lie in (0,1]");
    const panpp::EvalOptions opts{iou_threshold, case_sensitive != 0};
    const panpp::EvalSummary s = panpp::evaluate_directories(gt_dir, pred_dir, opts);
    if (csv_path) panpp::write_file_atomic(csv_path, panpp::format_eval_csv(s));
    *report = dup_string(panpp::format_eval_report(s, opts));
  });
}

panpp_status panpp_bench(const panpp_model* m, const panpp_tensor* image, const panpp_pa_config* pa,
                         const panpp_infer_options* opts, int repetitions, char** report) {
  return guarded([&] {
    require(m, "model");
    require(image, "image");
    require(report, "report");
    const auto rep = panpp::bench(m->m, image->t, to_infer_options(pa, opts), repetitions);
    *report = dup_string(panpp::format_bench_report(rep));
  });
}

panpp_status panpp_postprocess_bench(const panpp_tensor* p_tex, const panpp_tensor* p_ker, const panpp_tensor* emb,
                                     const panpp_pa_config* pa, int repetitions, char** report) {
  return guarded([&] {
    require(p_tex, "p_tex");
    require(p_ker, "p_ker");
    require(emb, "emb");
    require(report, "report");
    const panpp::DetectionMaps maps{p_tex->t, p_ker->t, emb->t};
    *report = dup_string(panpp::format_bench_report(panpp::bench_postprocess(maps, to_pa_config(pa), repetitions)));
  });
}

panpp_status panpp_fixture(const char* kind, uint64_t seed, int height, int width, int emb_dim, const char* out_dir) {
  return guarded([&] {
    require(kind, "kind");
    require(out_dir, "out_dir");
    const std::string k(kind);
    if (k == "scene") {
      panpp::FixtureOptions o;
      o.seed = seed;
      o.height = height;
      o.width = width;
      o.emb_dim = emb_dim;
      panpp::write_fixture(out_dir, panpp::make_scene(o));
    } else if (k == "adjacent") {
      panpp::write_fixture(out_dir, panpp::make_adjacent_boxes(emb_dim));
    } else {
      panpp::throw_usage("unknown fixture kind \"" + k + "\" (expected scene or adjacent)");
    }
  });
}

panpp_status panpp_ppm_to_ptm(const char* ppm_path, const char* ptm_path) {
  return guarded([&] {
    require(ppm_path, "ppm_path");
    require(ptm_path, "ptm_path");
    panpp::write_ptm(ptm_path, panpp::read_ppm(ppm_path));
  });
}

}  // extern "C"
