// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Talks to the library only through the C API.
#include <CLI11.hpp>

#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "panpp/panpp.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat "[section]" + "key = value" text; keys are stored as "section.key".
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::map<std::string, std::string> out;
  std::string line, section;
  int lineno = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError(path + ":" + std::to_string(lineno) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    out[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
  }
  return out;
}

class Settings {
 public:
  void load(const std::string& path) { values_ = read_config(path); }

  template <class T>
  void apply(const std::string& key, T& target) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return;
    std::istringstream is(it->second);
    T v{};
    if (!(is >> v) || !(is >> std::ws).eof()) throw UsageError("config key " + key + " has invalid value " + it->second);
    target = v;
  }

  void apply(const std::string& key, std::string& target) const {
    const auto it = values_.find(key);
    if (it != values_.end()) target = it->second;
  }

 private:
  std::map<std::string, std::string> values_;
};

// Options that may come from the config file or a flag; the flag wins.
template <class T>
struct Setting {
  std::string key;
  T value;
  CLI::Option* flag = nullptr;

  void add(CLI::App* app, const std::string& name, const std::string& help) { flag = app->add_option(name, value, help); }
  T resolve(const Settings& s) {
    if (flag && flag->count() > 0) return value;
    T out = value;
    s.apply(key, out);
    return out;
  }
};

int report_status(panpp_status st) {
  if (st == PANPP_OK) return 0;
  std::cerr << "error: " << panpp_last_error() << '\n';
  return st == PANPP_ERR_USAGE ? kExitUsage : kExitData;
}

struct TensorPtr {
  panpp_tensor* p = nullptr;
  ~TensorPtr() { panpp_tensor_free(p); }
};
struct ModelPtr {
  panpp_model* p = nullptr;
  ~ModelPtr() { panpp_model_free(p); }
};
struct ResultPtr {
  panpp_result* p = nullptr;
  ~ResultPtr() { panpp_result_free(p); }
};
struct StringPtr {
  char* p = nullptr;
  ~StringPtr() { panpp_string_free(p); }
};

std::array<int, 4> parse_channels(const std::string& text) {
  std::array<int, 4> out{};
  std::istringstream is(text);
  std::string part;
  int n = 0;
  while (std::getline(is, part, ',')) {
    if (n >= 4) throw UsageError("backbone_channels needs exactly four values");
    try {
      out[n++] = std::stoi(part);
    } catch (const std::exception&) {
      throw UsageError("backbone_channels value \"" + part + "\" is not an integer");
    }
  }
  if (n != 4) throw UsageError("backbone_channels needs exactly four values");
  return out;
}

struct ModelFlags {
  Setting<std::string> channels{"model.backbone_channels", ""};
  Setting<int> enhanced{"model.enhanced_channels", 0};
  Setting<int> n_stk{"model.n_stk", 0};
  Setting<int> emb_dim{"model.emb_dim", 0};
  Setting<int> rec_dim{"model.rec_dim", 0};
  Setting<int> rec_heads{"model.rec_heads", 0};
  Setting<int> rec_hidden{"model.rec_hidden", 0};
  Setting<std::string> weights{"run.weights", ""};
  Setting<std::string> charset{"run.charset", ""};
  Setting<std::uint64_t> seed{"run.seed", 42};
  bool zero_weights = false;

  void add(CLI::App* app) {
    panpp_model_config d;
    panpp_model_config_default(&d);
    enhanced.value = d.enhanced_channels;
    n_stk.value = d.n_stk;
    emb_dim.value = d.emb_dim;
    rec_dim.value = d.rec_dim;
    rec_heads.value = d.rec_heads;
    rec_hidden.value = d.rec_hidden;
    channels.add(app, "--backbone-channels", "Four comma-separated backbone widths");
    enhanced.add(app, "--enhanced-channels", "Pyramid width after reduction");
    n_stk.add(app, "--n-stk", "Number of stacked FPEMs");
    emb_dim.add(app, "--emb-dim", "Instance vector dimension");
    rec_dim.add(app, "--rec-dim", "Recognition feature width");
    rec_heads.add(app, "--rec-heads", "Attention heads");
    rec_hidden.add(app, "--rec-hidden", "LSTM hidden size");
    weights.add(app, "--weights", "Weight directory (default: seeded weights)");
    charset.add(app, "--charset", "Charset file, one symbol per line");
    seed.add(app, "--seed", "Seed for synthetic weights");
    app->add_flag("--zero-weights", zero_weights, "Use all-zero weights");
  }

  panpp_status build(const Settings& s, ModelPtr& out) {
    const std::string w = weights.resolve(s);
    const std::string cs = charset.resolve(s);
    const char* cs_path = cs.empty() ? nullptr : cs.c_str();
    if (!w.empty()) return panpp_model_load(w.c_str(), cs_path, &out.p);
    panpp_model_config cfg;
    panpp_model_config_default(&cfg);
    const std::string ch = channels.resolve(s);
    if (!ch.empty()) {
      const auto c = parse_channels(ch);
      for (int i = 0; i < 4; ++i) cfg.backbone_channels[i] = c[i];
    }
    cfg.enhanced_channels = enhanced.resolve(s);
    cfg.n_stk = n_stk.resolve(s);
    cfg.emb_dim = emb_dim.resolve(s);
    cfg.rec_dim = rec_dim.resolve(s);
    cfg.rec_heads = rec_heads.resolve(s);
    cfg.rec_hidden = rec_hidden.resolve(s);
    if (zero_weights) return panpp_model_zeros(&cfg, cs_path, &out.p);
    return panpp_model_seeded(&cfg, seed.resolve(s), cs_path, &out.p);
  }
};

struct PaFlags {
  Setting<float> tex{"pa.tex_threshold", 0};
  Setting<float> ker{"pa.ker_threshold", 0};
  Setting<float> dist{"pa.dist_threshold", 0};
  Setting<int> min_kernel{"pa.min_kernel_area", 0};
  Setting<int> min_instance{"pa.min_instance_area", 0};
  Setting<float> min_conf{"pa.min_confidence", 0};
  Setting<double> scale{"pa.scale", 0};

  void add(CLI::App* app) {
    panpp_pa_config d;
    panpp_pa_config_default(&d);
    tex.value = d.tex_threshold;
    ker.value = d.ker_threshold;
    dist.value = d.dist_threshold;
    min_kernel.value = d.min_kernel_area;
    min_instance.value = d.min_instance_area;
    min_conf.value = d.min_confidence;
    scale.value = d.scale;
    tex.add(app, "--tex-threshold", "Text region threshold");
    ker.add(app, "--ker-threshold", "Kernel threshold");
    dist.add(app, "--dist-threshold", "Embedding distance gate");
    min_kernel.add(app, "--min-kernel-area", "Smallest kernel kept (map pixels)");
    min_instance.add(app, "--min-instance-area", "Smallest instance kept (map pixels)");
    min_conf.add(app, "--min-confidence", "Smallest mean text score kept");
    scale.add(app, "--scale", "Map-to-image scale for contours");
  }

  panpp_pa_config build(const Settings& s) {
    return {tex.resolve(s),          ker.resolve(s),      dist.resolve(s), min_kernel.resolve(s),
            min_instance.resolve(s), min_conf.resolve(s), scale.resolve(s)};
  }
};

int print_report(panpp_status st, StringPtr& report) {
  if (st != PANPP_OK) return report_status(st);
  std::cout << report.p;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PAN++ text spotting toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Key=value config file with [model], [pa] and [run] sections");
  Settings settings;

  // gen-labels
  auto* gen = app.add_subcommand("gen-labels", "Rasterize annotations into label maps");
  std::string gen_ann, gen_out;
  int gen_h = 0, gen_w = 0;
  Setting<double> gen_r{"labels.shrink_rate", 0.7};
  gen->add_option("--annotations", gen_ann, "Annotation file")->required();
  gen->add_option("--height", gen_h, "Map height")->required();
  gen->add_option("--width", gen_w, "Map width")->required();
  gen_r.add(gen, "--shrink-rate", "Kernel shrink rate r");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // infer
  auto* inf = app.add_subcommand("infer", "Run detection, PA and recognition on an image tensor");
  std::string inf_image, inf_out;
  bool inf_det_only = false;
  Setting<int> inf_steps{"run.max_steps", 32};
  ModelFlags inf_model;
  PaFlags inf_pa;
  inf->add_option("--image", inf_image, "Image PTM [3,H,W]")->required();
  inf->add_option("--out", inf_out, "Output directory")->required();
  inf->add_flag("--det-only", inf_det_only, "Skip recognition");
  inf_steps.add(inf, "--max-steps", "Decoder step limit");
  inf_model.add(inf);
  inf_pa.add(inf);

  // postprocess
  auto* post = app.add_subcommand("postprocess", "Pixel aggregation on precomputed maps");
  std::string post_tex, post_ker, post_emb, post_out;
  int post_bench = 0;
  PaFlags post_pa;
  post->add_option("--p-tex", post_tex, "Text probability PTM [1,H,W]")->required();
  post->add_option("--p-ker", post_ker, "Kernel probability PTM [1,H,W]")->required();
  post->add_option("--emb", post_emb, "Instance vector PTM [D,H,W]")->required();
  post->add_option("--out", post_out, "Output directory");
  post->add_option("--bench", post_bench, "Time N repetitions and print a report");
  post_pa.add(post);

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of every loss gradient");
  Setting<std::uint64_t> gc_seed{"run.seed", 42};
  gc_seed.add(gc, "--seed", "Fixture seed");

  // eval
  auto* ev = app.add_subcommand("eval", "Detection and end-to-end metrics over annotation directories");
  std::string ev_gt, ev_pred, ev_csv;
  Setting<double> ev_iou{"eval.iou_threshold", 0.5};
  bool ev_case = false;
  ev->add_option("--gt", ev_gt, "Ground-truth directory")->required();
  ev->add_option("--pred", ev_pred, "Prediction directory")->required();
  ev_iou.add(ev, "--iou", "IoU threshold");
  ev->add_flag("--case-sensitive", ev_case, "Compare transcriptions case-sensitively");
  ev->add_option("--csv", ev_csv, "Per-image CSV output");

  // bench
  auto* be = app.add_subcommand("bench", "Per-stage timing of the full pipeline");
  std::string be_image;
  Setting<int> be_reps{"run.reps", 10};
  Setting<int> be_size{"run.bench_size", 640};
  bool be_det_only = false;
  ModelFlags be_model;
  PaFlags be_pa;
  be->add_option("--image", be_image, "Image PTM (default: a synthetic scene)");
  be_reps.add(be, "--reps", "Repetitions");
  be_size.add(be, "--size", "Side of the synthetic scene when no image is given");
  be->add_flag("--det-only", be_det_only, "Skip recognition");
  be_model.add(be);
  be_pa.add(be);

  // fixture
  auto* fx = app.add_subcommand("fixture", "Write a synthetic scene with idealized prediction maps");
  std::string fx_kind = "scene", fx_out;
  Setting<std::uint64_t> fx_seed{"run.seed", 42};
  int fx_h = 640, fx_w = 640, fx_emb = 4;
  fx->add_option("--kind", fx_kind, "scene or adjacent")->check(CLI::IsMember({"scene", "adjacent"}));
  fx->add_option("--out", fx_out, "Output directory")->required();
  fx_seed.add(fx, "--seed", "Scene seed");
  fx->add_option("--height", fx_h, "Image height");
  fx->add_option("--width", fx_w, "Image width");
  fx->add_option("--emb-dim", fx_emb, "Instance vector dimension");

  // ppm2ptm
  auto* pp = app.add_subcommand("ppm2ptm", "Convert a binary PPM to an image PTM");
  std::string pp_in, pp_out;
  pp->add_option("input", pp_in, "PPM file")->required();
  pp->add_option("output", pp_out, "PTM file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (!config_path.empty()) settings.load(config_path);

    if (*gen) {
      return report_status(panpp_gen_labels(gen_ann.c_str(), gen_h, gen_w, gen_r.resolve(settings), gen_out.c_str()));
    }
    if (*inf) {
      ModelPtr model;
      if (auto st = inf_model.build(settings, model); st != PANPP_OK) return report_status(st);
      TensorPtr image;
      if (auto st = panpp_tensor_read(inf_image.c_str(), &image.p); st != PANPP_OK) return report_status(st);
      const panpp_pa_config pa = inf_pa.build(settings);
      const panpp_infer_options opts{inf_det_only ? 1 : 0, inf_steps.resolve(settings)};
      ResultPtr result;
      if (auto st = panpp_infer(model.p, image.p, &pa, &opts, &result.p); st != PANPP_OK) return report_status(st);
      if (auto st = panpp_result_write(result.p, inf_out.c_str()); st != PANPP_OK) return report_status(st);
      std::cout << "instances=" << panpp_result_count(result.p) << '\n';
      return 0;
    }
    if (*post) {
      TensorPtr tex, ker, emb;
      for (auto [path, t] : {std::pair{&post_tex, &tex}, {&post_ker, &ker}, {&post_emb, &emb}}) {
        if (auto st = panpp_tensor_read(path->c_str(), &t->p); st != PANPP_OK) return report_status(st);
      }
      const panpp_pa_config pa = post_pa.build(settings);
      if (post_bench > 0) {
        StringPtr report;
        const int rc = print_report(panpp_postprocess_bench(tex.p, ker.p, emb.p, &pa, post_bench, &report.p), report);
        if (rc != 0 || post_out.empty()) return rc;
      } else if (post_out.empty()) {
        throw UsageError("postprocess needs --out unless --bench is given");
      }
      ResultPtr result;
      if (auto st = panpp_postprocess(tex.p, ker.p, emb.p, &pa, &result.p); st != PANPP_OK) return report_status(st);
      if (auto st = panpp_result_write(result.p, post_out.c_str()); st != PANPP_OK) return report_status(st);
      std::cout << "instances=" << panpp_result_count(result.p) << '\n';
      return 0;
    }
    if (*gc) {
      StringPtr report;
      int passed = 0;
      if (auto st = panpp_grad_check(gc_seed.resolve(settings), &report.p, &passed); st != PANPP_OK) {
        return report_status(st);
      }
      std::cout << report.p;
      return passed ? 0 : kExitData;
    }
    if (*ev) {
      StringPtr report;
      return print_report(panpp_eval_dirs(ev_gt.c_str(), ev_pred.c_str(), ev_iou.resolve(settings), ev_case ? 1 : 0,
                                          ev_csv.empty() ? nullptr : ev_csv.c_str(), &report.p),
                          report);
    }
    if (*be) {
      ModelPtr model;
      if (auto st = be_model.build(settings, model); st != PANPP_OK) return report_status(st);
      TensorPtr image;
      if (be_image.empty()) {
        const auto dir = std::filesystem::temp_directory_path() / ("panpp-bench-" + std::to_string(::getpid()));
        const int side = be_size.resolve(settings);
        const panpp_status st = panpp_fixture("scene", 42, side, side, 4, dir.c_str());
        if (st != PANPP_OK) return report_status(st);
        const panpp_status rd = panpp_tensor_read((dir / "image.ptm").c_str(), &image.p);
        std::filesystem::remove_all(dir);
        if (rd != PANPP_OK) return report_status(rd);
      } else if (auto st = panpp_tensor_read(be_image.c_str(), &image.p); st != PANPP_OK) {
        return report_status(st);
      }
      const panpp_pa_config pa = be_pa.build(settings);
      const panpp_infer_options opts{be_det_only ? 1 : 0, 32};
      StringPtr report;
      return print_report(panpp_bench(model.p, image.p, &pa, &opts, be_reps.resolve(settings), &report.p), report);
    }
    if (*fx) {
      return report_status(
          panpp_fixture(fx_kind.c_str(), fx_seed.resolve(settings), fx_h, fx_w, fx_emb, fx_out.c_str()));
    }
    if (*pp) return report_status(panpp_ppm_to_ptm(pp_in.c_str(), pp_out.c_str()));
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
