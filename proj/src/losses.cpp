// SPDX-License-Identifier: Apache-2.0
#include "panpp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "panpp/error.hpp"
#include "panpp/geometry.hpp"

namespace panpp {

namespace {

constexpr double kDiceEps = 1e-6;

struct Signature {
  std::uint64_t h = 0xcbf29ce484222325ull;
  void mix(std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
};

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) throw_usage(std::string(what) + ": dim mismatch " + a.shape_string() + " vs " + b.shape_string());
}

void require_emb(const Tensor& emb, const InstanceLabelMap& a, const InstanceLabelMap& b) {
  if (emb.rank() != 3) throw_usage("embedding must be [D,H,W]");
  for (const auto* m : {&a, &b}) {
    if (m->height() != emb.dim(1) || m->width() != emb.dim(2)) throw_usage("instance map does not match embedding dims");
  }
}

// Mean embedding of each kernel id; ids with empty kernels get count 0.
struct KernelMeans {
  std::vector<std::vector<double>> mean;  // [id][d]
  std::vector<std::size_t> count;         // [id]
  std::vector<std::vector<std::size_t>> pixels;
};

KernelMeans kernel_means(const Tensor& emb, const InstanceLabelMap& kernels, std::int32_t max_id) {
  const int d = emb.dim(0);
  const std::size_t plane = kernels.size();
  KernelMeans km;
  km.mean.assign(max_id + 1, std::vector<double>(d, 0.0));
  km.count.assign(max_id + 1, 0);
  km.pixels.resize(max_id + 1);
  for (std::size_t p = 0; p < plane; ++p) {
    const auto id = kernels[p];
    if (id <= 0) continue;
    km.pixels[id].push_back(p);
    ++km.count[id];
    for (int k = 0; k < d; ++k) km.mean[id][k] += emb[k * plane + p];
  }
  for (std::int32_t id = 1; id <= max_id; ++id) {
    if (km.count[id] == 0) continue;
    for (auto& v : km.mean[id]) v /= static_cast<double>(km.count[id]);
  }
  return km;
}

double distance(const Tensor& emb, std::size_t plane, std::size_t p, const std::vector<double>& g, std::vector<double>& diff) {
  double s = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    diff[k] = emb[k * plane + p] - g[k];
    s += diff[k] * diff[k];
  }
  return std::sqrt(s);
}

Tensor narrow(const std::vector<double>& v, const std::vector<int>& dims) {
  Tensor t(dims);
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
  return t;
}

// Spreads the gradient w.r.t. each kernel mean uniformly over the kernel pixels.
void scatter_mean_grads(const KernelMeans& km, const std::vector<std::vector<double>>& g_mean, std::size_t plane,
                        std::vector<double>& grad) {
  for (std::size_t id = 1; id < km.count.size(); ++id) {
    if (km.count[id] == 0) continue;
    const double inv = 1.0 / static_cast<double>(km.count[id]);
    for (std::size_t p : km.pixels[id]) {
      for (std::size_t k = 0; k < g_mean[id].size(); ++k) grad[k * plane + p] += g_mean[id][k] * inv;
    }
  }
}

}  // namespace

void LossConfig::validate() const {
  // The two mixing weights may be zero to switch a term off.
  if (!(alpha >= 0 && beta >= 0)) throw_usage("loss weights alpha and beta must be non-negative");
  if (!(delta_agg > 0 && delta_dis > 0 && ohem_ratio > 0)) {
    throw_usage("loss margins and OHEM ratio must be strictly positive");
  }
}

LossValue dice_loss(const Tensor& p, const Tensor& g, const Tensor& valid) {
  require_same(p, g, "dice_loss");
  require_same(p, valid, "dice_loss");
  double inter = 0.0, denom = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (valid[i] <= 0.5f) continue;
    inter += static_cast<double>(p[i]) * g[i];
    denom += static_cast<double>(p[i]) * p[i] + static_cast<double>(g[i]) * g[i];
  }
  LossValue out;
  const double num = 2.0 * inter + kDiceEps;
  const double den = denom + kDiceEps;
  out.value = 1.0 - num / den;
  Tensor grad(p.dims());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (valid[i] <= 0.5f) continue;
    grad[i] = static_cast<float>(-(2.0 * g[i] * den - num * 2.0 * p[i]) / (den * den));
  }
  out.grads.emplace("p", std::move(grad));
  return out;
}

Tensor ohem_mask(const Tensor& p_tex, const Tensor& g_tex, const Tensor& ignore, double ratio) {
  require_same(p_tex, g_tex, "ohem_mask");
  require_same(p_tex, ignore, "ohem_mask");
  if (!(ratio > 0)) throw_usage("ohem ratio must be positive");
  Tensor mask(p_tex.dims());
  std::vector<std::size_t> negatives;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < p_tex.size(); ++i) {
    if (ignore[i] > 0.5f) continue;
    if (g_tex[i] > 0.5f) {
      mask[i] = 1.0f;
      ++positives;
    } else {
      negatives.push_back(i);
    }
  }
  std::size_t quota = negatives.size();
  if (positives > 0) quota = std::min(quota, static_cast<std::size_t>(ratio * static_cast<double>(positives)));
  std::stable_sort(negatives.begin(), negatives.end(),
                   [&](std::size_t a, std::size_t b) { return p_tex[a] > p_tex[b]; });
  for (std::size_t k = 0; k < quota; ++k) mask[negatives[k]] = 1.0f;
  return mask;
}

LossValue agg_loss(const Tensor& emb, const InstanceLabelMap& instances, const InstanceLabelMap& kernel_instances,
                   const LossConfig& cfg) {
  require_emb(emb, instances, kernel_instances);
  const int d = emb.dim(0);
  const std::size_t plane = instances.size();
  const std::int32_t max_id = std::max(instances.max_id(), kernel_instances.max_id());
  const KernelMeans km = kernel_means(emb, kernel_instances, max_id);

  std::vector<std::size_t> region_count(max_id + 1, 0);
  for (std::size_t p = 0; p < plane; ++p) ++region_count[instances[p]];
  std::size_t n = 0;
  for (std::int32_t id = 1; id <= max_id; ++id) n += (km.count[id] > 0 && region_count[id] > 0) ? 1 : 0;

  LossValue out;
  std::vector<double> grad(emb.size(), 0.0);
  Signature sig;
  if (n > 0) {
    std::vector<double> sum(max_id + 1, 0.0);
    std::vector<std::vector<double>> g_mean(max_id + 1, std::vector<double>(d, 0.0));
    std::vector<double> diff(d);
    for (std::size_t p = 0; p < plane; ++p) {
      const auto id = instances[p];
      if (id <= 0 || km.count[id] == 0) continue;
      const double dist = distance(emb, plane, p, km.mean[id], diff);
      const double u = dist - cfg.delta_agg;
      sig.mix(u > 0 ? 1 : 0);
      if (u <= 0) continue;
      sum[id] += std::log(u * u + 1.0);
      const double c = 1.0 / (static_cast<double>(n) * static_cast<double>(region_count[id]));
      const double dterm = c * 2.0 * u / (u * u + 1.0) / dist;
      for (int k = 0; k < d; ++k) {
        grad[k * plane + p] += dterm * diff[k];
        g_mean[id][k] -= dterm * diff[k];
      }
    }
    double total = 0.0;
    for (std::int32_t id = 1; id <= max_id; ++id) {
      if (km.count[id] > 0 && region_count[id] > 0) total += sum[id] / static_cast<double>(region_count[id]);
    }
    out.value = total / static_cast<double>(n);
    scatter_mean_grads(km, g_mean, plane, grad);
  }
  out.grads.emplace("emb", narrow(grad, emb.dims()));
  out.kink_signature = sig.h;
  return out;
}

LossValue dis_loss(const Tensor& emb, const InstanceLabelMap& instances, const InstanceLabelMap& kernel_instances,
                   const Tensor& g_tex, const LossConfig& cfg, const Tensor* ignore) {
  require_emb(emb, instances, kernel_instances);
  if (g_tex.size() != instances.size()) throw_usage("dis_loss: g_tex does not match embedding dims");
  if (ignore && ignore->size() != instances.size()) throw_usage("dis_loss: ignore mask does not match");
  const int d = emb.dim(0);
  const std::size_t plane = instances.size();
  const std::int32_t max_id = std::max(instances.max_id(), kernel_instances.max_id());
  const KernelMeans km = kernel_means(emb, kernel_instances, max_id);

  std::vector<std::int32_t> ids;
  for (std::int32_t id = 1; id <= max_id; ++id) {
    if (km.count[id] > 0) ids.push_back(id);
  }
  std::vector<std::size_t> background;
  for (std::size_t p = 0; p < plane; ++p) {
    if (g_tex[p] <= 0.5f && !(ignore && (*ignore)[p] > 0.5f)) background.push_back(p);
  }

  LossValue out;
  std::vector<double> grad(emb.size(), 0.0);
  Signature sig;
  const double n = static_cast<double>(ids.size());
  if (!ids.empty()) {
    std::vector<std::vector<double>> g_mean(max_id + 1, std::vector<double>(d, 0.0));
    std::vector<double> diff(d);
    double total = 0.0;
    const double c_pair = 1.0 / (n * n);
    for (std::int32_t i : ids) {
      if (!background.empty()) {
        const double c_bg = c_pair / static_cast<double>(background.size());
        double db = 0.0;
        for (std::size_t p : background) {
          const double dist = distance(emb, plane, p, km.mean[i], diff);
          const double v = cfg.delta_dis - dist;
          sig.mix(v > 0 ? (dist > 0 ? 1 : 2) : 0);
          if (v <= 0) continue;
          db += std::log(v * v + 1.0);
          if (dist <= 0) continue;
          const double dterm = c_bg * (-2.0 * v / (v * v + 1.0)) / dist;
          for (int k = 0; k < d; ++k) {
            grad[k * plane + p] += dterm * diff[k];
            g_mean[i][k] -= dterm * diff[k];
          }
        }
        total += db / static_cast<double>(background.size());
      }
      for (std::int32_t j : ids) {
        if (j == i) continue;
        double s = 0.0;
        for (int k = 0; k < d; ++k) {
          diff[k] = km.mean[i][k] - km.mean[j][k];
          s += diff[k] * diff[k];
        }
        const double dist = std::sqrt(s);
        const double v = cfg.delta_dis - dist;
        sig.mix(v > 0 ? (dist > 0 ? 1 : 2) : 0);
        if (v <= 0) continue;
        total += std::log(v * v + 1.0);
        if (dist <= 0) continue;
        const double dterm = c_pair * (-2.0 * v / (v * v + 1.0)) / dist;
        for (int k = 0; k < d; ++k) {
          g_mean[i][k] += dterm * diff[k];
          g_mean[j][k] -= dterm * diff[k];
        }
      }
    }
    out.value = total * c_pair;
    scatter_mean_grads(km, g_mean, plane, grad);
  }
  out.grads.emplace("emb", narrow(grad, emb.dims()));
  out.kink_signature = sig.h;
  return out;
}

LossValue det_loss(const Tensor& p_tex, const Tensor& p_ker, const Tensor& emb, const LabelSet& labels,
                   const LossConfig& cfg) {
  cfg.validate();
  require_same(p_tex, labels.g_tex, "det_loss");
  require_same(p_ker, labels.g_ker, "det_loss");
  const Tensor mask = ohem_mask(p_tex, labels.g_tex, labels.ignore_mask, cfg.ohem_ratio);
  Tensor text_valid(p_tex.dims());
  for (std::size_t i = 0; i < text_valid.size(); ++i) {
    text_valid[i] = (labels.g_tex[i] > 0.5f && labels.ignore_mask[i] <= 0.5f) ? 1.0f : 0.0f;
  }
  LossValue tex = dice_loss(p_tex, labels.g_tex, mask);
  LossValue ker = dice_loss(p_ker, labels.g_ker, text_valid);
  LossValue agg = agg_loss(emb, labels.instances, labels.kernel_instances, cfg);
  LossValue dis = dis_loss(emb, labels.instances, labels.kernel_instances, labels.g_tex, cfg, &labels.ignore_mask);

  LossValue out;
  out.value = tex.value + cfg.alpha * ker.value + cfg.beta * (agg.value + dis.value);
  out.components = {{"tex", tex.value}, {"ker", ker.value}, {"agg", agg.value}, {"dis", dis.value}};

  Tensor g_ker = std::move(ker.grads.at("p"));
  for (float& v : g_ker.data()) v = static_cast<float>(cfg.alpha * v);
  Tensor g_emb(emb.dims());
  const Tensor& ga = agg.grads.at("emb");
  const Tensor& gd = dis.grads.at("emb");
  for (std::size_t i = 0; i < g_emb.size(); ++i) {
    g_emb[i] = static_cast<float>(cfg.beta * (static_cast<double>(ga[i]) + gd[i]));
  }
  out.grads.emplace("p_tex", std::move(tex.grads.at("p")));
  out.grads.emplace("p_ker", std::move(g_ker));
  out.grads.emplace("emb", std::move(g_emb));

  Signature sig;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 0.5f) sig.mix(i);
  }
  sig.mix(agg.kink_signature);
  sig.mix(dis.kink_signature);
  out.kink_signature = sig.h;
  return out;
}

LossValue rec_loss(const Tensor& logits, std::span<const int> target) {
  if (logits.rank() != 2) throw_usage("rec_loss logits must be [T,V]");
  const int t_len = logits.dim(0), vocab = logits.dim(1);
  if (target.empty()) throw_usage("rec_loss target must contain at least EOS");
  if (static_cast<int>(target.size()) > t_len) throw_usage("rec_loss: fewer logit rows than target symbols");
  for (int s : target) {
    if (s < 0 || s >= vocab) throw_usage("rec_loss: target symbol id " + std::to_string(s) + " outside vocabulary");
  }
  LossValue out;
  Tensor grad(logits.dims());
  const double inv_n = 1.0 / static_cast<double>(target.size());
  std::vector<double> e(vocab);
  double total = 0.0;
  for (std::size_t t = 0; t < target.size(); ++t) {
    const int row = static_cast<int>(t);
    double m = logits.at(row, 0);
    for (int v = 1; v < vocab; ++v) m = std::max(m, static_cast<double>(logits.at(row, v)));
    double sum = 0.0;
    for (int v = 0; v < vocab; ++v) {
      e[v] = std::exp(logits.at(row, v) - m);
      sum += e[v];
    }
    total += -(logits.at(row, target[t]) - m - std::log(sum));
    for (int v = 0; v < vocab; ++v) {
      const double soft = e[v] / sum - (v == target[t] ? 1.0 : 0.0);
      grad.at(row, v) = static_cast<float>(soft * inv_n);
    }
  }
  out.value = total * inv_n;
  out.grads.emplace("logits", std::move(grad));
  return out;
}

GradCheckResult finite_diff_check(const LossFn& loss, const std::vector<NamedTensor>& inputs, double epsilon,
                                  std::size_t samples, std::uint64_t seed) {
  if (!(epsilon > 0)) throw_usage("finite difference epsilon must be positive");
  std::vector<Tensor> x;
  for (const auto& in : inputs) x.push_back(in.tensor);
  const LossValue base = loss(x);
  std::mt19937_64 rng(seed);
  GradCheckResult res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto it = base.grads.find(inputs[k].name);
    if (it == base.grads.end()) throw_usage("loss exposes no gradient for input '" + inputs[k].name + "'");
    const Tensor& analytic = it->second;
    std::vector<std::size_t> coords(x[k].size());
    std::iota(coords.begin(), coords.end(), 0);
    std::shuffle(coords.begin(), coords.end(), rng);
    if (coords.size() > samples) coords.resize(samples);
    double worst = 0.0;
    for (std::size_t c : coords) {
      const float orig = x[k][c];
      auto eval_at = [&](double delta, float* used) {
        x[k][c] = static_cast<float>(orig + delta);
        if (used) *used = x[k][c];
        LossValue v = loss(x);
        x[k][c] = orig;
        return v;
      };
      const LossValue far_hi = eval_at(2 * epsilon, nullptr);
      const LossValue far_lo = eval_at(-2 * epsilon, nullptr);
      if (far_hi.kink_signature != base.kink_signature || far_lo.kink_signature != base.kink_signature) {
        ++res.kink_excluded;
        continue;
      }
      float hi_x = 0, lo_x = 0;
      const double hi = eval_at(epsilon, &hi_x).value;
      const double lo = eval_at(-epsilon, &lo_x).value;
      const double fd = (hi - lo) / (static_cast<double>(hi_x) - lo_x);
      const double an = analytic[c];
      const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4});
      worst = std::max(worst, err);
      ++res.checked;
    }
    res.per_input[inputs[k].name] = worst;
    res.max_rel_error = std::max(res.max_rel_error, worst);
  }
  return res;
}

namespace {

Tensor random_tensor(std::vector<int> dims, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(std::move(dims));
  std::uniform_real_distribution<double> u(lo, hi);
  for (float& v : t.data()) v = static_cast<float>(u(rng));
  return t;
}

LabelSet two_box_labels(int h, int w) {
  std::vector<TextAnnotation> anns{make_annotation(Polygon::rect(1, 1, 7, 15), "ab"),
                                   make_annotation(Polygon::rect(9, 2, 15, 14), "cd")};
  return generate_labels(anns, h, w, 0.5);
}

}  // namespace

std::vector<GradCheckRow> run_grad_check_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const LossConfig cfg;
  std::vector<GradCheckRow> rows;
  auto record = [&](std::string name, const LossFn& fn, std::vector<NamedTensor> inputs) {
    GradCheckRow row{std::move(name), finite_diff_check(fn, inputs, 1e-3, 200, rng()), false};
    row.passed = row.result.max_rel_error < kGradCheckTolerance && row.result.checked > 0;
    rows.push_back(std::move(row));
  };

  {
    Tensor g({1, 16, 16});
    for (float& v : g.data()) v = (rng() & 3) == 0 ? 1.0f : 0.0f;
    Tensor valid({1, 16, 16}, 1.0f);
    for (std::size_t i = 0; i < valid.size(); i += 7) valid[i] = 0.0f;
    record("dice", [g, valid](std::span<const Tensor> x) { return dice_loss(x[0], g, valid); },
           {{"p", random_tensor({1, 16, 16}, rng, 0.05, 0.95)}});
  }

  const LabelSet labels = two_box_labels(16, 16);
  {
    record("agg",
           [&labels, cfg](std::span<const Tensor> x) {
             return agg_loss(x[0], labels.instances, labels.kernel_instances, cfg);
           },
           {{"emb", random_tensor({4, 16, 16}, rng, -1.5, 1.5)}});
  }
  {
    record("dis",
           [&labels, cfg](std::span<const Tensor> x) {
             return dis_loss(x[0], labels.instances, labels.kernel_instances, labels.g_tex, cfg);
           },
           {{"emb", random_tensor({4, 16, 16}, rng, -0.6, 0.6)}});
  }
  {
    record("det",
           [&labels, cfg](std::span<const Tensor> x) { return det_loss(x[0], x[1], x[2], labels, cfg); },
           {{"p_tex", random_tensor({1, 16, 16}, rng, 0.05, 0.95)},
            {"p_ker", random_tensor({1, 16, 16}, rng, 0.05, 0.95)},
            {"emb", random_tensor({4, 16, 16}, rng, -0.8, 0.8)}});
  }
  {
    std::vector<int> target{3, 17, 0, 25, 36};
    record("rec", [target](std::span<const Tensor> x) { return rec_loss(x[0], target); },
           {{"logits", random_tensor({8, 39}, rng, -3.0, 3.0)}});
  }
  return rows;
}

}  // namespace panpp
