// SPDX-License-Identifier: Apache-2.0
// Reference implementations used only by tests. Each one is written from the
// definition of the operation and shares no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "panpp/geometry.hpp"
#include "panpp/label_map.hpp"
#include "panpp/pa.hpp"
#include "panpp/tensor.hpp"

namespace oracle {

using panpp::Point;

// Even-odd test of one pixel center with exact sign arithmetic. An edge counts
// when it straddles the row (lower endpoint inclusive) and crosses strictly to
// the right of the center.
inline bool pixel_inside(const std::vector<Point>& v, double cx, double cy) {
  bool in = false;
  for (std::size_t i = 0, n = v.size(); i < n; ++i) {
    const Point a = v[i], b = v[(i + 1) % n];
    if ((a.y <= cy) == (b.y <= cy)) continue;
    const double dy = b.y - a.y;
    const double s = (a.x - cx) * dy + (cy - a.y) * (b.x - a.x);
    if ((dy > 0 && s > 0) || (dy < 0 && s < 0)) in = !in;
  }
  return in;
}

inline std::vector<std::uint8_t> raster(const panpp::Polygon& p, int h, int w) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(h) * w, 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) m[static_cast<std::size_t>(r) * w + c] = pixel_inside(p.vertices(), c + 0.5, r + 0.5);
  }
  return m;
}

// Bilinear sample of channel c at output (i, j), align-corners-false.
inline float bilinear_pixel(const panpp::Tensor& src, int c, int i, int j, int oh, int ow) {
  const int h = src.dim(1), w = src.dim(2);
  auto coord = [](int o, int in, int out) {
    double s = (o + 0.5) * static_cast<double>(in) / out - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  const double sy = coord(i, h, oh), sx = coord(j, w, ow);
  const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - y0, fx = sx - x0;
  const double v = (1 - fy) * ((1 - fx) * src.at(c, y0, x0) + fx * src.at(c, y0, x1)) +
                   fy * ((1 - fx) * src.at(c, y1, x0) + fx * src.at(c, y1, x1));
  return static_cast<float>(v);
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// 4-connected (or 8-connected) components by union-find; components under
// min_area dropped. Ids follow the smallest raster index of each component.
inline panpp::InstanceLabelMap components(const std::vector<std::uint8_t>& mask, int h, int w, int min_area = 0,
                                          bool eight = false) {
  UnionFind uf(h * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      if (!mask[p]) continue;
      if (x + 1 < w && mask[p + 1]) uf.unite(p, p + 1);
      if (y + 1 < h && mask[p + w]) uf.unite(p, p + w);
      if (eight && y + 1 < h && x + 1 < w && mask[p + w + 1]) uf.unite(p, p + w + 1);
      if (eight && y + 1 < h && x > 0 && mask[p + w - 1]) uf.unite(p, p + w - 1);
    }
  }
  std::vector<int> size(h * w, 0);
  for (int p = 0; p < h * w; ++p) {
    if (mask[p]) ++size[uf.find(p)];
  }
  std::vector<int> id(h * w, 0);
  int next = 0;
  panpp::InstanceLabelMap out(h, w);
  for (int p = 0; p < h * w; ++p) {
    if (!mask[p]) continue;
    const int root = uf.find(p);
    if (size[root] < min_area) continue;
    if (id[root] == 0) id[root] = ++next;
    out[p] = id[root];
  }
  return out;
}

// Pixel aggregation by repeated synchronous passes until nothing changes.
// In each pass every unassigned region pixel looks at its neighbours assigned
// before the pass; among those whose kernel mean is within d, the one that
// entered the assignment earliest wins. Newly assigned pixels are ordered by
// (winner's order, direction up/down/left/right), which is the order a FIFO
// would have visited them in.
inline panpp::InstanceLabelMap pa_fixpoint(const panpp::Tensor& p_tex, const panpp::Tensor& p_ker,
                                           const panpp::Tensor& emb, const panpp::PAConfig& cfg) {
  const int h = p_tex.dim(1), w = p_tex.dim(2), dim = emb.dim(0), n = h * w;
  std::vector<std::uint8_t> region(n), kernel(n);
  for (int p = 0; p < n; ++p) {
    region[p] = p_tex[p] >= cfg.tex_threshold;
    kernel[p] = region[p] && p_ker[p] >= cfg.ker_threshold;
  }
  panpp::InstanceLabelMap lab = components(kernel, h, w, cfg.min_kernel_area);
  const int k = lab.max_id();
  std::vector<std::vector<double>> mean(k + 1, std::vector<double>(dim, 0.0));
  std::vector<int> cnt(k + 1, 0);
  for (int p = 0; p < n; ++p) {
    if (!lab[p]) continue;
    ++cnt[lab[p]];
    for (int c = 0; c < dim; ++c) mean[lab[p]][c] += emb[static_cast<std::size_t>(c) * n + p];
  }
  for (int i = 1; i <= k; ++i) {
    for (auto& v : mean[i]) v /= cnt[i];
  }
  const auto close = [&](int q, int id) {
    double s = 0;
    for (int c = 0; c < dim; ++c) {
      const double d = emb[static_cast<std::size_t>(c) * n + q] - mean[id][c];
      s += d * d;
    }
    return std::sqrt(s) < cfg.dist_threshold;
  };

  // Order of entry into the assignment; kernels first by (id, raster).
  std::vector<long> order(n, -1);
  long next = 0;
  for (int id = 1; id <= k; ++id) {
    for (int p = 0; p < n; ++p) {
      if (lab[p] == id) order[p] = next++;
    }
  }
  const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
  for (bool changed = true; changed;) {
    changed = false;
    struct Claim {
      int q;
      long by;
      int dir;
      int id;
    };
    std::vector<Claim> claims;
    for (int q = 0; q < n; ++q) {
      if (!region[q] || lab[q] != 0) continue;
      const int y = q / w, x = q % w;
      Claim best{q, -1, 0, 0};
      for (int d = 0; d < 4; ++d) {
        // The neighbour that reaches q moves in the opposite direction.
        const int ny = y - dy[d], nx = x - dx[d];
        if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
        const int nb = ny * w + nx;
        if (lab[nb] == 0 || !close(q, lab[nb])) continue;
        if (best.by < 0 || order[nb] < best.by) best = {q, order[nb], d, lab[nb]};
      }
      if (best.by >= 0) claims.push_back(best);
    }
    std::sort(claims.begin(), claims.end(), [](const Claim& a, const Claim& b) {
      return a.by != b.by ? a.by < b.by : a.dir < b.dir;
    });
    for (const Claim& c : claims) {
      lab[c.q] = c.id;
      order[c.q] = next++;
      changed = true;
    }
  }

  std::vector<long> size(k + 1, 0);
  std::vector<double> score(k + 1, 0.0);
  for (int p = 0; p < n; ++p) {
    ++size[lab[p]];
    score[lab[p]] += p_tex[p];
  }
  std::vector<int> keep(k + 1, 0);
  int kept = 0;
  for (int id = 1; id <= k; ++id) {
    if (size[id] >= cfg.min_instance_area && score[id] / size[id] >= cfg.min_confidence) keep[id] = ++kept;
  }
  for (int p = 0; p < n; ++p) lab[p] = keep[lab[p]];
  return lab;
}

struct PaTrial {
  panpp::Tensor p_tex, p_ker, emb;
};

// Random 32x32 scene: 2-4 rectangular kernels inside blob regions that may
// touch, noisy D-dim embeddings clustered around per-kernel centres.
inline PaTrial random_pa_trial(std::mt19937_64& rng, int size = 32, int dim = 4) {
  auto uni = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<unsigned>(hi - lo + 1)); };
  std::normal_distribution<double> noise(0.0, 1.0);
  PaTrial t{panpp::Tensor({1, size, size}), panpp::Tensor({1, size, size}), panpp::Tensor({dim, size, size})};
  const int n = size * size;
  for (int p = 0; p < n; ++p) t.p_tex[p] = 0.05f + 0.4f * static_cast<float>(rng() % 1000) / 1000.0f;
  const int kernels = uni(2, 4);
  std::vector<std::vector<double>> centre(kernels, std::vector<double>(dim));
  std::vector<int> cy(kernels), cx(kernels);
  for (int i = 0; i < kernels; ++i) {
    for (auto& v : centre[i]) v = 4.0 * noise(rng);
    const int kh = uni(2, 5), kw = uni(3, 7);
    const int y0 = uni(1, size - kh - 1), x0 = uni(1, size - kw - 1);
    cy[i] = y0 + kh / 2;
    cx[i] = x0 + kw / 2;
    const int gh = kh + uni(2, 8), gw = kw + uni(2, 10);
    for (int y = std::max(0, y0 - gh / 2); y < std::min(size, y0 + kh + gh / 2); ++y) {
      for (int x = std::max(0, x0 - gw / 2); x < std::min(size, x0 + kw + gw / 2); ++x) {
        if (rng() % 10 != 0) t.p_tex.at(0, y, x) = 0.55f + 0.4f * static_cast<float>(rng() % 1000) / 1000.0f;
      }
    }
    for (int y = y0; y < y0 + kh; ++y) {
      for (int x = x0; x < x0 + kw; ++x) {
        t.p_ker.at(0, y, x) = 0.9f;
        t.p_tex.at(0, y, x) = 0.9f;
      }
    }
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int best = 0;
      long bd = -1;
      for (int i = 0; i < kernels; ++i) {
        const long d = static_cast<long>(y - cy[i]) * (y - cy[i]) + static_cast<long>(x - cx[i]) * (x - cx[i]);
        if (bd < 0 || d < bd) {
          bd = d;
          best = i;
        }
      }
      // Occasionally borrow another centre so gates fail or conflicts arise.
      if (rng() % 8 == 0) best = static_cast<int>(rng() % kernels);
      for (int c = 0; c < dim; ++c) {
        t.emb.at(c, y, x) = static_cast<float>(centre[best][c] + 0.9 * noise(rng));
      }
    }
  }
  return t;
}

}  // namespace oracle
