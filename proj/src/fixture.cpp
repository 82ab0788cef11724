// SPDX-License-Identifier: Apache-2.0
#include "panpp/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "panpp/error.hpp"
#include "panpp/pa.hpp"

namespace panpp {

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }
int uniform_int(std::mt19937_64& rng, int lo, int hi) { return lo + static_cast<int>(rng() % (hi - lo + 1)); }

std::string random_word(std::mt19937_64& rng) {
  static constexpr char kAlphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::string s;
  const int n = uniform_int(rng, 3, 8);
  for (int i = 0; i < n; ++i) s.push_back(kAlphabet[rng() % 36]);
  return s;
}

std::vector<Point> make_rect(std::mt19937_64& rng) {
  const double w = uniform(rng, 100, 220), h = uniform(rng, 28, 48);
  return {{0, 0}, {w, 0}, {w, h}, {0, h}};
}

std::vector<Point> make_quad(std::mt19937_64& rng) {
  const double w = uniform(rng, 100, 200), h = uniform(rng, 30, 48);
  const double a = uniform(rng, -std::numbers::pi / 6, std::numbers::pi / 6);
  const double c = std::cos(a), s = std::sin(a);
  std::vector<Point> out;
  for (Point p : {Point{-w / 2, -h / 2}, Point{w / 2, -h / 2}, Point{w / 2, h / 2}, Point{-w / 2, h / 2}}) {
    p.x += uniform(rng, -3, 3);
    p.y += uniform(rng, -3, 3);
    out.push_back({c * p.x - s * p.y, s * p.x + c * p.y});
  }
  return out;
}

std::vector<Point> make_strip(std::mt19937_64& rng) {
  const double len = uniform(rng, 140, 240), hh = uniform(rng, 16, 24), radius = uniform(rng, 160, 300);
  const double span = len / radius, sign = (rng() & 1) ? 1.0 : -1.0;
  constexpr int kSegments = 8;
  std::vector<Point> outer, inner;
  for (int i = 0; i <= kSegments; ++i) {
    const double t = -span / 2 + span * i / kSegments;
    const double ux = std::sin(t), uy = -std::cos(t) * sign;
    outer.push_back({(radius + hh) * ux, (radius + hh) * uy});
    inner.push_back({(radius - hh) * ux, (radius - hh) * uy});
  }
  outer.insert(outer.end(), inner.rbegin(), inner.rend());
  return outer;
}

struct Box {
  double x0, y0, x1, y1;
};

Box bounds(const std::vector<Point>& pts) {
  Box b{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
  for (const Point& p : pts) {
    b.x0 = std::min(b.x0, p.x);
    b.y0 = std::min(b.y0, p.y);
    b.x1 = std::max(b.x1, p.x);
    b.y1 = std::max(b.y1, p.y);
  }
  return b;
}

bool single_component(const InstanceLabelMap& labels, int id, int min_area) {
  Tensor mask({1, labels.height(), labels.width()});
  for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = labels[i] == id ? 1.0f : 0.0f;
  const InstanceLabelMap cc = connected_components(mask);
  if (cc.max_id() != 1) return false;
  return cc.histogram()[1] >= static_cast<std::size_t>(min_area);
}

LabelSet map_labels(const std::vector<TextAnnotation>& anns, int h, int w, int stride) {
  std::vector<TextAnnotation> scaled;
  for (const auto& a : anns) scaled.push_back({a.polygon.scaled(1.0 / stride), a.transcription, a.ignore, {}});
  return generate_labels(scaled, h / stride, w / stride);
}

Tensor render_image(const std::vector<TextAnnotation>& anns, int h, int w, std::uint64_t seed) {
  Tensor img({3, h, w});
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < h * w; ++i) img[static_cast<std::size_t>(c) * h * w + i] = 0.1f + 0.05f * c;
  }
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  for (const auto& a : anns) {
    const auto mask = rasterize_mask(a.polygon, h, w);
    float color[3];
    for (float& v : color) v = static_cast<float>(uniform(rng, 0.6, 1.0));
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      for (int c = 0; c < 3; ++c) img[static_cast<std::size_t>(c) * h * w + i] = color[c];
    }
  }
  return img;
}

void check_opts(const FixtureOptions& o) {
  if (o.stride <= 0 || o.height <= 0 || o.width <= 0 || o.height % o.stride || o.width % o.stride) {
    throw_usage("fixture dims must be positive multiples of the stride");
  }
  if (o.min_instances < 1 || o.max_instances < o.min_instances) throw_usage("fixture instance range is invalid");
  if (o.emb_dim < 1) throw_usage("fixture emb_dim must be positive");
}

}  // namespace

DetectionMaps idealized_maps(const LabelSet& labels, int emb_dim, std::uint64_t seed) {
  const int h = labels.g_tex.dim(1), w = labels.g_tex.dim(2);
  DetectionMaps m{Tensor({1, h, w}), labels.g_ker, Tensor({emb_dim, h, w})};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = std::clamp(y + dy, 0, h - 1), xx = std::clamp(x + dx, 0, w - 1);
          s += labels.g_tex.at(0, yy, xx);
        }
      }
      const double blur = s / 9.0;
      m.p_tex.at(0, y, x) = static_cast<float>(labels.g_tex.at(0, y, x) > 0.5f ? 0.7 + 0.25 * blur : 0.3 * blur);
    }
  }

  // Nonzero points of {-1,0,1}^D scaled by 4: pairwise and origin distances >= 4.
  std::vector<std::vector<float>> lattice;
  int total = 1;
  for (int i = 0; i < emb_dim; ++i) {
    if (total > 1 << 20) break;
    total *= 3;
  }
  for (int code = 1; code < total; ++code) {
    std::vector<float> v(emb_dim, 0.0f);
    int c = code;
    for (int k = 0; k < emb_dim && c > 0; ++k, c /= 3) v[k] = 4.0f * static_cast<float>(c % 3 - 1);
    if (std::any_of(v.begin(), v.end(), [](float f) { return f != 0.0f; })) lattice.push_back(std::move(v));
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = lattice.size(); i > 1; --i) std::swap(lattice[i - 1], lattice[rng() % i]);
  const std::int32_t n = std::max(labels.instances.max_id(), labels.kernel_instances.max_id());
  if (static_cast<std::size_t>(n) > lattice.size()) throw_usage("too many instances for the embedding lattice");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < plane; ++p) {
    const auto id = labels.instances[p];
    if (id == 0) continue;
    for (int k = 0; k < emb_dim; ++k) m.emb[k * plane + p] = lattice[id - 1][k];
  }
  return m;
}

Fixture make_scene(const FixtureOptions& opts) {
  check_opts(opts);
  std::mt19937_64 rng(opts.seed);
  const int target = uniform_int(rng, opts.min_instances, opts.max_instances);
  const double gap = 4.0 * opts.stride;
  std::vector<TextAnnotation> anns;
  std::vector<Box> placed;
  for (int attempt = 0; attempt < 400 && static_cast<int>(anns.size()) < target; ++attempt) {
    const int kind = static_cast<int>(rng() % 3);
    std::vector<Point> pts = kind == 0 ? make_rect(rng) : kind == 1 ? make_quad(rng) : make_strip(rng);
    const Box b = bounds(pts);
    const double bw = b.x1 - b.x0, bh = b.y1 - b.y0;
    if (bw + 2 * gap >= opts.width || bh + 2 * gap >= opts.height) continue;
    const double ox = uniform(rng, gap, opts.width - gap - bw) - b.x0;
    const double oy = uniform(rng, gap, opts.height - gap - bh) - b.y0;
    for (Point& p : pts) {
      p = {std::round((p.x + ox) * 4.0) / 4.0, std::round((p.y + oy) * 4.0) / 4.0};
    }
    const Box nb{b.x0 + ox, b.y0 + oy, b.x1 + ox, b.y1 + oy};
    const bool clash = std::any_of(placed.begin(), placed.end(), [&](const Box& o) {
      return nb.x0 < o.x1 + gap && o.x0 < nb.x1 + gap && nb.y0 < o.y1 + gap && o.y0 < nb.y1 + gap;
    });
    if (clash) continue;
    auto poly = Polygon::make_clean(std::move(pts));
    if (!poly) continue;
    std::vector<TextAnnotation> trial = anns;
    trial.push_back(make_annotation(*poly, random_word(rng)));
    const LabelSet ls = map_labels(trial, opts.height, opts.width, opts.stride);
    const int id = static_cast<int>(trial.size());
    if (!single_component(ls.kernel_instances, id, 5) || !single_component(ls.instances, id, 10)) continue;
    anns = std::move(trial);
    placed.push_back(nb);
  }
  Fixture f;
  f.annotations = std::move(anns);
  f.image = render_image(f.annotations, opts.height, opts.width, opts.seed);
  f.labels = map_labels(f.annotations, opts.height, opts.width, opts.stride);
  f.maps = idealized_maps(f.labels, opts.emb_dim, opts.seed);
  return f;
}

Fixture make_adjacent_boxes(int emb_dim) {
  constexpr int kH = 64, kW = 192, kStride = 4;
  Fixture f;
  f.annotations.push_back(make_annotation(Polygon::rect(16, 16, 80, 48), "left"));
  f.annotations.push_back(make_annotation(Polygon::rect(82, 16, 146, 48), "right"));
  f.image = render_image(f.annotations, kH, kW, 7);
  f.labels = map_labels(f.annotations, kH, kW, kStride);
  f.maps = idealized_maps(f.labels, emb_dim, 7);
  return f;
}

void write_fixture(const std::filesystem::path& dir, const Fixture& f) {
  std::filesystem::create_directories(dir);
  write_ptm(dir / "image.ptm", f.image);
  write_annotations(dir / "annotations.txt", f.annotations);
  write_ptm(dir / "p_tex.ptm", f.maps.p_tex);
  write_ptm(dir / "p_ker.ptm", f.maps.p_ker);
  write_ptm(dir / "emb.ptm", f.maps.emb);
  write_ptm(dir / "g_tex.ptm", f.labels.g_tex);
  write_ptm(dir / "g_ker.ptm", f.labels.g_ker);
  write_ptm(dir / "instances.ptm", f.labels.instances.to_tensor());
}

}  // namespace panpp
