// SPDX-License-Identifier: Apache-2.0
#include "panpp/pa.hpp"

#include <cmath>
#include <deque>

#include "panpp/error.hpp"

namespace panpp {

namespace {

struct Step {
  int dx, dy;
};
constexpr Step kEast{1, 0}, kSouth{0, 1}, kWest{-1, 0}, kNorth{0, -1};

Step turn_right(Step d) { return {-d.dy, d.dx}; }  // y points down
Step turn_left(Step d) { return {d.dy, -d.dx}; }

}  // namespace

void PAConfig::validate() const {
  if (!(tex_threshold > 0 && tex_threshold < 1 && ker_threshold > 0 && ker_threshold < 1)) {
    throw_usage("PA thresholds must lie in (0,1)");
  }
  if (!(dist_threshold > 0)) throw_usage("PA distance threshold must be positive");
  if (min_kernel_area < 0 || min_instance_area < 0) throw_usage("PA area filters must be >= 0");
  if (!(scale > 0)) throw_usage("PA scale must be positive");
}

InstanceLabelMap connected_components(const Tensor& mask, int min_area) {
  if (mask.rank() != 3 || mask.dim(0) != 1) throw_usage("connected_components expects [1,H,W]");
  const int h = mask.dim(1), w = mask.dim(2);
  InstanceLabelMap labels(h, w);
  std::vector<std::size_t> sizes{0};
  std::vector<std::size_t> stack;
  std::int32_t next = 1;
  for (std::size_t start = 0; start < labels.size(); ++start) {
    if (mask[start] <= 0.5f || labels[start] != 0) continue;
    const std::int32_t id = next++;
    std::size_t count = 0;
    labels[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++count;
      const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
      const std::size_t nbr[4] = {p - w, p + w, p - 1, p + 1};
      const bool ok[4] = {y > 0, y + 1 < h, x > 0, x + 1 < w};
      for (int k = 0; k < 4; ++k) {
        if (ok[k] && mask[nbr[k]] > 0.5f && labels[nbr[k]] == 0) {
          labels[nbr[k]] = id;
          stack.push_back(nbr[k]);
        }
      }
    }
    sizes.push_back(count);
  }
  if (min_area > 0) {
    std::vector<std::int32_t> remap(sizes.size(), 0);
    std::int32_t kept = 0;
    for (std::size_t id = 1; id < sizes.size(); ++id) {
      if (sizes[id] >= static_cast<std::size_t>(min_area)) remap[id] = ++kept;
    }
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = remap[labels[i]];
  }
  return labels;
}

Polygon extract_contour(const InstanceLabelMap& labels, int id, double scale) {
  const int h = labels.height(), w = labels.width();
  std::size_t first = labels.size();
  std::size_t area = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == id) {
      if (first == labels.size()) first = i;
      ++area;
    }
  }
  if (area == 0) throw_usage("extract_contour: region " + std::to_string(id) + " is empty");
  auto inside = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && labels.at(y, x) == id; };

  // Walk pixel edges with the region on the right, starting at the top-left
  // corner of the first pixel in raster order (visited exactly once).
  const int x0 = static_cast<int>(first % w), y0 = static_cast<int>(first / w);
  int px = x0, py = y0;
  Step d = kEast;
  std::vector<Point> pts{{static_cast<double>(px), static_cast<double>(py)}};
  const std::size_t limit = 4 * area + 4;
  for (std::size_t steps = 0; steps < limit; ++steps) {
    px += d.dx;
    py += d.dy;
    if (px == x0 && py == y0) break;
    const Step r = turn_right(d);
    // Cells adjacent to the lattice point (px, py) ahead of the heading.
    const int arx = static_cast<int>(std::floor(px + 0.5 * (d.dx + r.dx)));
    const int ary = static_cast<int>(std::floor(py + 0.5 * (d.dy + r.dy)));
    const int alx = static_cast<int>(std::floor(px + 0.5 * (d.dx - r.dx)));
    const int aly = static_cast<int>(std::floor(py + 0.5 * (d.dy - r.dy)));
    Step next = d;
    if (!inside(arx, ary)) {
      next = r;
    } else if (inside(alx, aly)) {
      next = turn_left(d);
    }
    if (next.dx != d.dx || next.dy != d.dy) pts.push_back({static_cast<double>(px), static_cast<double>(py)});
    d = next;
  }
  for (auto& p : pts) {
    p.x *= scale;
    p.y *= scale;
  }
  return Polygon(std::move(pts));
}

PAResult aggregate(const Tensor& p_tex, const Tensor& p_ker, const Tensor& emb, const PAConfig& cfg) {
  cfg.validate();
  if (p_tex.rank() != 3 || p_tex.dim(0) != 1 || !p_tex.same_shape(p_ker)) {
    throw_usage("aggregate expects p_tex and p_ker of identical [1,H,W] dims");
  }
  if (emb.rank() != 3 || emb.dim(1) != p_tex.dim(1) || emb.dim(2) != p_tex.dim(2)) {
    throw_usage("aggregate: embedding dims " + emb.shape_string() + " do not match " + p_tex.shape_string());
  }
  const int h = p_tex.dim(1), w = p_tex.dim(2), dim = emb.dim(0);
  const std::size_t plane = p_tex.size();

  std::vector<std::uint8_t> region(plane);
  Tensor kernel_mask({1, h, w});
  for (std::size_t i = 0; i < plane; ++i) {
    region[i] = p_tex[i] >= cfg.tex_threshold;
    kernel_mask[i] = (region[i] && p_ker[i] >= cfg.ker_threshold) ? 1.0f : 0.0f;
  }
  InstanceLabelMap labels = connected_components(kernel_mask, cfg.min_kernel_area);
  const std::int32_t kernels = labels.max_id();

  std::vector<std::vector<double>> mean(kernels + 1, std::vector<double>(dim, 0.0));
  std::vector<std::vector<std::size_t>> seeds(kernels + 1);
  for (std::size_t p = 0; p < plane; ++p) {
    const auto id = labels[p];
    if (id == 0) continue;
    seeds[id].push_back(p);
    for (int k = 0; k < dim; ++k) mean[id][k] += emb[k * plane + p];
  }
  for (std::int32_t id = 1; id <= kernels; ++id) {
    for (auto& v : mean[id]) v /= static_cast<double>(seeds[id].size());
  }

  std::deque<std::size_t> queue;
  for (std::int32_t id = 1; id <= kernels; ++id) queue.insert(queue.end(), seeds[id].begin(), seeds[id].end());
  const double d_thr = cfg.dist_threshold;
  while (!queue.empty()) {
    const std::size_t p = queue.front();
    queue.pop_front();
    const auto id = labels[p];
    const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
    const std::size_t nbr[4] = {p - w, p + w, p - 1, p + 1};
    const bool ok[4] = {y > 0, y + 1 < h, x > 0, x + 1 < w};
    for (int k = 0; k < 4; ++k) {
      if (!ok[k]) continue;
      const std::size_t q = nbr[k];
      if (!region[q] || labels[q] != 0) continue;
      double s = 0.0;
      for (int c = 0; c < dim; ++c) {
        const double diff = emb[c * plane + q] - mean[id][c];
        s += diff * diff;
      }
      if (std::sqrt(s) < d_thr) {
        labels[q] = id;
        queue.push_back(q);
      }
    }
  }

  std::vector<std::size_t> count(kernels + 1, 0);
  std::vector<double> score(kernels + 1, 0.0);
  for (std::size_t p = 0; p < plane; ++p) {
    ++count[labels[p]];
    score[labels[p]] += p_tex[p];
  }
  std::vector<std::int32_t> remap(kernels + 1, 0);
  std::int32_t kept = 0;
  for (std::int32_t id = 1; id <= kernels; ++id) {
    const double conf = score[id] / static_cast<double>(count[id]);
    if (count[id] >= static_cast<std::size_t>(cfg.min_instance_area) && conf >= cfg.min_confidence) remap[id] = ++kept;
  }
  for (std::size_t p = 0; p < plane; ++p) labels[p] = remap[labels[p]];

  PAResult out{std::move(labels), {}};
  for (std::int32_t id = 1; id <= kernels; ++id) {
    if (remap[id] == 0) continue;
    Polygon contour = extract_contour(out.labels, remap[id], 1.0);
    Polygon image_contour = contour.scaled(cfg.scale);
    out.instances.push_back(TextInstance{remap[id], count[id], static_cast<float>(score[id] / count[id]),
                                         std::move(contour), std::move(image_contour)});
  }
  return out;
}

}  // namespace panpp
