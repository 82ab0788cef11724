// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "panpp/tensor.hpp"

namespace panpp {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Simple closed polygon in pixel units. At least three vertices, no repeated
/// consecutive vertex and nonzero signed area; orientation is unconstrained.
class Polygon {
 public:
  explicit Polygon(std::vector<Point> vertices);

  /// Drops repeated consecutive vertices and returns nullopt for polygons that
  /// are still degenerate afterwards.
  static std::optional<Polygon> make_clean(std::vector<Point> vertices);
  static Polygon rect(double x0, double y0, double x1, double y1);

  const std::vector<Point>& vertices() const noexcept { return vertices_; }
  std::size_t size() const noexcept { return vertices_.size(); }
  /// Shoelace sum / 2, positive for counter-clockwise in y-up coordinates.
  double signed_area() const noexcept;
  Polygon scaled(double factor) const;
  Polygon translated(double dx, double dy) const;

  friend bool operator==(const Polygon&, const Polygon&) = default;

 private:
  std::vector<Point> vertices_;
};

inline constexpr std::string_view kDoNotCare = "###";

struct TextAnnotation {
  Polygon polygon;
  std::string transcription;
  bool ignore = false;
  std::optional<float> confidence;  // set on predictions only
};

TextAnnotation make_annotation(Polygon polygon, std::string transcription);

double area(const Polygon& p);
double perimeter(const Polygon& p);

/// Inward offset by `margin` pixels. Edges are translated along their inward
/// normals and re-joined (miter joins at reflex vertices, limit 2x margin,
/// bevel beyond). Self-intersections are split and the largest valid loop is
/// kept. Returns nullopt when the offset annihilates the polygon.
std::optional<Polygon> shrink(const Polygon& p, double margin);

/// Even-odd test with the half-open convention used by rasterization: a point
/// on a left/top boundary is inside, on a right/bottom boundary outside.
bool contains(const Polygon& p, Point q);

/// Binary mask, pixel (r,c) set iff its center (c+0.5, r+0.5) is inside.
Tensor rasterize(const Polygon& p, int h, int w);
std::vector<std::uint8_t> rasterize_mask(const Polygon& p, int h, int w);

/// Mask IoU on an h x w canvas; 0 when both rasters are empty.
double polygon_iou(const Polygon& a, const Polygon& b, int h, int w);

// Annotation text: "x1,y1,...,xn,yn<TAB>transcription[<TAB>confidence]" per line.
std::vector<TextAnnotation> parse_annotations(std::string_view text);
std::vector<TextAnnotation> read_annotations(const std::filesystem::path& path);
std::string format_annotations(std::span<const TextAnnotation> annotations);
void write_annotations(const std::filesystem::path& path, std::span<const TextAnnotation> annotations);

}  // namespace panpp
