// SPDX-License-Identifier: Apache-2.0
#include "panpp/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "panpp/error.hpp"

namespace panpp {

namespace {

constexpr double kAreaEps = 1e-12;

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

double shoelace(std::span<const Point> v) {
  double s = 0.0;
  for (std::size_t i = 0, n = v.size(); i < n; ++i) {
    const Point& a = v[i];
    const Point& b = v[(i + 1) % n];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

std::vector<Point> dedupe(std::vector<Point> v, double tol = 0.0) {
  std::vector<Point> out;
  out.reserve(v.size());
  for (const Point& p : v) {
    if (!out.empty() && std::abs(out.back().x - p.x) <= tol && std::abs(out.back().y - p.y) <= tol) continue;
    out.push_back(p);
  }
  while (out.size() > 1 && std::abs(out.front().x - out.back().x) <= tol &&
         std::abs(out.front().y - out.back().y) <= tol) {
    out.pop_back();
  }
  return out;
}

std::vector<Point> drop_collinear(std::vector<Point> v) {
  bool changed = true;
  while (changed && v.size() > 3) {
    changed = false;
    for (std::size_t i = 0; i < v.size() && v.size() > 3; ++i) {
      const Point& a = v[(i + v.size() - 1) % v.size()];
      const Point& b = v[i];
      const Point& c = v[(i + 1) % v.size()];
      const double scale = std::max({1.0, std::abs(a.x - c.x), std::abs(a.y - c.y)});
      if (std::abs(cross(a, b, c)) <= 1e-9 * scale * scale) {
        v.erase(v.begin() + static_cast<std::ptrdiff_t>(i));
        changed = true;
      }
    }
  }
  return v;
}

double point_segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

double boundary_distance(const std::vector<Point>& poly, Point p) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    d = std::min(d, point_segment_distance(p, poly[i], poly[(i + 1) % n]));
  }
  return d;
}

// Intersection of lines a + t*da and b + u*db; nullopt when parallel.
std::optional<Point> line_intersection(Point a, Point da, Point b, Point db) {
  const double den = da.x * db.y - da.y * db.x;
  if (std::abs(den) < 1e-14) return std::nullopt;
  const double t = ((b.x - a.x) * db.y - (b.y - a.y) * db.x) / den;
  return Point{a.x + t * da.x, a.y + t * da.y};
}

bool on_segment(Point q, Point a, Point b) {
  return point_segment_distance(q, a, b) < 1e-9 * std::max(1.0, std::hypot(b.x - a.x, b.y - a.y));
}

// Crossing or contact point of two non-adjacent segments. Contacts
// (collinear overlap, a vertex touching an edge) report a shared endpoint.
std::optional<Point> segment_intersection(Point p0, Point p1, Point q0, Point q1) {
  const double rx = p1.x - p0.x, ry = p1.y - p0.y;
  const double sx = q1.x - q0.x, sy = q1.y - q0.y;
  const double den = rx * sy - ry * sx;
  if (on_segment(q0, p0, p1)) return q0;
  if (on_segment(q1, p0, p1)) return q1;
  if (on_segment(p0, q0, q1)) return p0;
  if (on_segment(p1, q0, q1)) return p1;
  if (std::abs(den) < 1e-14) return std::nullopt;
  const double qpx = q0.x - p0.x, qpy = q0.y - p0.y;
  const double t = (qpx * sy - qpy * sx) / den;
  const double u = (qpx * ry - qpy * rx) / den;
  constexpr double e = 1e-12;
  if (t < e || t > 1 - e || u < e || u > 1 - e) return std::nullopt;
  return Point{p0.x + t * rx, p0.y + t * ry};
}

std::vector<std::vector<Point>> split_self_intersections(std::vector<Point> loop) {
  std::vector<std::vector<Point>> pending{std::move(loop)};
  std::vector<std::vector<Point>> simple;
  while (!pending.empty()) {
    std::vector<Point> v = dedupe(std::move(pending.back()), 1e-12);
    pending.pop_back();
    const std::size_t n = v.size();
    if (n < 3) continue;
    bool split = false;
    for (std::size_t i = 0; i < n && !split; ++i) {
      for (std::size_t j = i + 2; j < n && !split; ++j) {
        if (i == 0 && j == n - 1) continue;
        auto x = segment_intersection(v[i], v[i + 1], v[j], v[(j + 1) % n]);
        if (!x) continue;
        std::vector<Point> a{*x};
        for (std::size_t k = i + 1; k <= j; ++k) a.push_back(v[k]);
        std::vector<Point> b{*x};
        for (std::size_t k = j + 1; k < n; ++k) b.push_back(v[k]);
        for (std::size_t k = 0; k <= i; ++k) b.push_back(v[k]);
        pending.push_back(std::move(a));
        pending.push_back(std::move(b));
        split = true;
      }
    }
    if (!split) simple.push_back(std::move(v));
  }
  return simple;
}

// Scanline crossings of y with the polygon edges, shared by contains() and
// rasterize() so both apply the identical half-open rule.
void row_crossings(std::span<const Point> v, double y, std::vector<double>& xs) {
  xs.clear();
  for (std::size_t i = 0, n = v.size(); i < n; ++i) {
    const Point& a = v[i];
    const Point& b = v[(i + 1) % n];
    if ((a.y <= y) != (b.y <= y)) xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
  }
}

}  // namespace

Polygon::Polygon(std::vector<Point> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 3) throw_data("polygon needs at least 3 vertices");
  for (std::size_t i = 0, n = vertices_.size(); i < n; ++i) {
    const Point& p = vertices_[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw_data("polygon vertex is not finite");
    if (p == vertices_[(i + 1) % n]) throw_data("polygon has repeated consecutive vertex");
  }
  if (std::abs(shoelace(vertices_)) <= kAreaEps) throw_data("polygon is degenerate (zero area)");
}

std::optional<Polygon> Polygon::make_clean(std::vector<Point> vertices) {
  for (const Point& p : vertices) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return std::nullopt;
  }
  auto v = dedupe(std::move(vertices));
  if (v.size() < 3 || std::abs(shoelace(v)) <= kAreaEps) return std::nullopt;
  return Polygon(std::move(v));
}

Polygon Polygon::rect(double x0, double y0, double x1, double y1) {
  return Polygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

double Polygon::signed_area() const noexcept { return shoelace(vertices_); }

Polygon Polygon::scaled(double factor) const {
  auto v = vertices_;
  for (auto& p : v) {
    p.x *= factor;
    p.y *= factor;
  }
  return Polygon(std::move(v));
}

Polygon Polygon::translated(double dx, double dy) const {
  auto v = vertices_;
  for (auto& p : v) {
    p.x += dx;
    p.y += dy;
  }
  return Polygon(std::move(v));
}

TextAnnotation make_annotation(Polygon polygon, std::string transcription) {
  const bool ignore = transcription == kDoNotCare;
  return TextAnnotation{std::move(polygon), std::move(transcription), ignore, std::nullopt};
}

double area(const Polygon& p) { return std::abs(p.signed_area()); }

double perimeter(const Polygon& p) {
  const auto& v = p.vertices();
  double s = 0.0;
  for (std::size_t i = 0, n = v.size(); i < n; ++i) {
    s += std::hypot(v[(i + 1) % n].x - v[i].x, v[(i + 1) % n].y - v[i].y);
  }
  return s;
}

std::optional<Polygon> shrink(const Polygon& p, double margin) {
  if (!(margin >= 0.0)) throw_usage("shrink margin must be non-negative");
  if (margin == 0.0) return p;

  std::vector<Point> v = p.vertices();
  const bool reversed = p.signed_area() < 0;
  if (reversed) std::reverse(v.begin(), v.end());
  const std::size_t n = v.size();

  // Counter-clockwise: the interior lies to the left of every edge.
  std::vector<Point> dir(n), normal(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point d{v[(i + 1) % n].x - v[i].x, v[(i + 1) % n].y - v[i].y};
    const double len = std::hypot(d.x, d.y);
    dir[i] = {d.x / len, d.y / len};
    normal[i] = {-dir[i].y, dir[i].x};
  }

  std::vector<Point> raw;
  raw.reserve(2 * n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = (j + n - 1) % n;
    const Point& vj = v[j];
    const Point a{vj.x + margin * normal[i].x, vj.y + margin * normal[i].y};
    const Point b{vj.x + margin * normal[j].x, vj.y + margin * normal[j].y};
    const double turn = dir[i].x * dir[j].y - dir[i].y * dir[j].x;
    const double along = dir[i].x * dir[j].x + dir[i].y * dir[j].y;
    if (std::abs(turn) < 1e-12) {
      if (along > 0) {
        raw.push_back(b);
      } else {
        raw.push_back(a);
        raw.push_back(b);
      }
      continue;
    }
    const auto x = line_intersection(a, dir[i], b, dir[j]);
    if (!x) {
      raw.push_back(b);
      continue;
    }
    if (turn < 0 && std::hypot(x->x - vj.x, x->y - vj.y) > 2.0 * margin) {
      raw.push_back(a);
      raw.push_back(b);
    } else {
      raw.push_back(*x);
    }
  }

  const double tol = 1e-7 * std::max(1.0, margin);
  std::optional<std::vector<Point>> best;
  double best_area = 0.0;
  for (auto& loop : split_self_intersections(std::move(raw))) {
    const double a = shoelace(loop);
    if (a <= kAreaEps) continue;
    bool valid = true;
    for (const Point& q : loop) {
      if (boundary_distance(v, q) < margin - tol || !contains(p, q)) {
        valid = false;
        break;
      }
    }
    if (valid && a > best_area) {
      best_area = a;
      best = std::move(loop);
    }
  }
  if (!best) return std::nullopt;
  auto cleaned = drop_collinear(dedupe(std::move(*best), 1e-9));
  if (cleaned.size() < 3 || std::abs(shoelace(cleaned)) <= kAreaEps) return std::nullopt;
  if (reversed) std::reverse(cleaned.begin(), cleaned.end());
  return Polygon(std::move(cleaned));
}

bool contains(const Polygon& p, Point q) {
  std::vector<double> xs;
  row_crossings(p.vertices(), q.y, xs);
  std::size_t right = 0;
  for (double x : xs) right += x > q.x ? 1 : 0;
  return right % 2 == 1;
}

std::vector<std::uint8_t> rasterize_mask(const Polygon& p, int h, int w) {
  if (h < 1 || w < 1) throw_usage("rasterize canvas must be at least 1x1");
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(h) * w, 0);
  double ymin = p.vertices()[0].y, ymax = ymin;
  for (const auto& q : p.vertices()) {
    ymin = std::min(ymin, q.y);
    ymax = std::max(ymax, q.y);
  }
  const int r0 = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
  const int r1 = std::min(h - 1, static_cast<int>(std::ceil(ymax)));
  std::vector<double> xs;
  for (int r = r0; r <= r1; ++r) {
    row_crossings(p.vertices(), r + 0.5, xs);
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const double xl = xs[k], xr = xs[k + 1];
      int c = std::max(0, static_cast<int>(std::floor(xl - 0.5)) - 1);
      for (; c < w && c + 0.5 < xr; ++c) {
        if (c + 0.5 >= xl) mask[static_cast<std::size_t>(r) * w + c] = 1;
      }
    }
  }
  return mask;
}

Tensor rasterize(const Polygon& p, int h, int w) {
  const auto mask = rasterize_mask(p, h, w);
  Tensor out({1, h, w});
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 1.0f : 0.0f;
  return out;
}

double polygon_iou(const Polygon& a, const Polygon& b, int h, int w) {
  const auto ma = rasterize_mask(a, h, w);
  const auto mb = rasterize_mask(b, h, w);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    inter += (ma[i] & mb[i]);
    uni += (ma[i] | mb[i]);
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<TextAnnotation> parse_annotations(std::string_view text) {
  std::vector<TextAnnotation> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    const auto fail = [&](const std::string& why) -> void {
      throw_data("annotation line " + std::to_string(line_no) + ": " + why);
    };
    const std::size_t tab = line.find('\t');
    std::string_view coords = line.substr(0, tab);
    std::string_view rest = tab == std::string_view::npos ? std::string_view{} : line.substr(tab + 1);
    std::string_view transcription = rest;
    std::optional<float> confidence;
    if (const std::size_t tab2 = rest.find('\t'); tab2 != std::string_view::npos) {
      transcription = rest.substr(0, tab2);
      std::string_view conf = rest.substr(tab2 + 1);
      float c = 0.0f;
      auto [ptr, ec] = std::from_chars(conf.data(), conf.data() + conf.size(), c);
      if (ec != std::errc() || ptr != conf.data() + conf.size()) fail("bad confidence field");
      confidence = c;
    }

    std::vector<double> values;
    while (!coords.empty()) {
      const std::size_t comma = coords.find(',');
      std::string_view tok = coords.substr(0, comma);
      while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
      while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
      double val = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), val);
      if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size()) {
        fail("bad coordinate '" + std::string(tok) + "'");
      }
      values.push_back(val);
      coords = comma == std::string_view::npos ? std::string_view{} : coords.substr(comma + 1);
    }
    if (values.size() < 6 || values.size() % 2 != 0) fail("need an even number (>= 6) of coordinates");
    std::vector<Point> pts;
    for (std::size_t i = 0; i < values.size(); i += 2) pts.push_back({values[i], values[i + 1]});
    auto poly = Polygon::make_clean(std::move(pts));
    if (!poly) fail("degenerate polygon");
    auto ann = make_annotation(std::move(*poly), std::string(transcription));
    ann.confidence = confidence;
    out.push_back(std::move(ann));
  }
  return out;
}

std::vector<TextAnnotation> read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_annotations(ss.str());
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string format_annotations(std::span<const TextAnnotation> annotations) {
  std::string out;
  char buf[64];
  for (const auto& a : annotations) {
    bool first = true;
    for (const Point& p : a.polygon.vertices()) {
      for (double v : {p.x, p.y}) {
        if (!first) out.push_back(',');
        first = false;
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        out.append(buf, ptr);
      }
    }
    out.push_back('\t');
    out += a.transcription;
    if (a.confidence) {
      out.push_back('\t');
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, *a.confidence);
      out.append(buf, ptr);
    }
    out.push_back('\n');
  }
  return out;
}

void write_annotations(const std::filesystem::path& path, std::span<const TextAnnotation> annotations) {
  write_file_atomic(path, format_annotations(annotations));
}

}  // namespace panpp
