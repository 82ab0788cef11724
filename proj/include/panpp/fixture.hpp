// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "panpp/geometry.hpp"
#include "panpp/labelgen.hpp"
#include "panpp/nn.hpp"

namespace panpp {

struct FixtureOptions {
  int height = 640;
  int width = 640;
  int stride = 4;
  int min_instances = 3;
  int max_instances = 6;
  int emb_dim = 4;
  std::uint64_t seed = 42;
};

/// A synthetic scene: image-resolution annotations and image, plus labels and
/// idealized prediction maps at map resolution (image / stride).
struct Fixture {
  std::vector<TextAnnotation> annotations;
  Tensor image;          // [3,H,W]
  LabelSet labels;       // map resolution
  DetectionMaps maps;    // map resolution
};

/// Rectangles, rotated quadrilaterals and curved strips with random words.
/// Every instance has one 4-connected kernel of at least 5 map pixels and a
/// 4-connected region, and instances never touch.
Fixture make_scene(const FixtureOptions& opts);

/// Two 64x32 boxes whose map-resolution regions share an edge.
Fixture make_adjacent_boxes(int emb_dim = 4);

/// p_tex = 0.7 + 0.25 blur on text, 0.3 blur elsewhere (3x3 box blur of
/// g_tex); p_ker = g_ker; emb constant per instance on a lattice of spacing 4,
/// background at the origin.
DetectionMaps idealized_maps(const LabelSet& labels, int emb_dim, std::uint64_t seed);

/// image.ptm, annotations.txt, p_tex.ptm, p_ker.ptm, emb.ptm, g_tex.ptm,
/// g_ker.ptm, instances.ptm.
void write_fixture(const std::filesystem::path& dir, const Fixture& f);

}  // namespace panpp
