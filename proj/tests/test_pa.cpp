// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <deque>
#include <random>
#include <set>

#include "panpp/error.hpp"
#include "panpp/geometry.hpp"
#include "panpp/pa.hpp"
#include "support/oracles.hpp"

using panpp::InstanceLabelMap;
using panpp::Tensor;

namespace {

Tensor mask_tensor(const std::vector<std::uint8_t>& m, int h, int w) {
  Tensor t({1, h, w});
  for (std::size_t i = 0; i < m.size(); ++i) t[i] = m[i];
  return t;
}

std::vector<std::uint8_t> region_of(const InstanceLabelMap& l, int id) {
  std::vector<std::uint8_t> m(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) m[i] = l[i] == id;
  return m;
}

// Multi-source flood fill from kernel components over the region mask.
InstanceLabelMap flood_fill(const std::vector<std::uint8_t>& region, const InstanceLabelMap& seeds, int h, int w) {
  InstanceLabelMap out = seeds;
  std::deque<int> q;
  for (int id = 1; id <= seeds.max_id(); ++id) {
    for (int p = 0; p < h * w; ++p) {
      if (seeds[p] == id) q.push_back(p);
    }
  }
  while (!q.empty()) {
    const int p = q.front();
    q.pop_front();
    const int y = p / w, x = p % w;
    const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
    for (const auto& n : nb) {
      if (n[0] < 0 || n[1] < 0 || n[0] >= h || n[1] >= w) continue;
      const int r = n[0] * w + n[1];
      if (region[r] && out[r] == 0) {
        out[r] = out[p];
        q.push_back(r);
      }
    }
  }
  return out;
}

panpp::PAConfig no_filters() {
  panpp::PAConfig cfg;
  cfg.min_kernel_area = 0;
  cfg.min_instance_area = 0;
  cfg.min_confidence = 0.0f;
  return cfg;
}

}  // namespace

TEST_CASE("connected components examples") {
  const auto none = panpp::connected_components(Tensor({1, 8, 8}));
  CHECK(none.max_id() == 0);

  Tensor two({1, 8, 8});
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      two.at(0, y, x) = 1.0f;
      two.at(0, y + 5, x + 4) = 1.0f;
    }
  }
  const auto l = panpp::connected_components(two);
  CHECK(l.max_id() == 2);
  CHECK(l.histogram() == std::vector<std::size_t>{64 - 18, 9, 9});
  CHECK(l.at(0, 0) == 1);
  CHECK(l.at(7, 6) == 2);

  // Diagonal contact does not connect.
  Tensor diag({1, 2, 2});
  diag[0] = diag[3] = 1.0f;
  CHECK(panpp::connected_components(diag).max_id() == 2);

  // The area filter drops small pieces and re-compacts ids.
  two.at(0, 0, 7) = 1.0f;
  const auto f = panpp::connected_components(two, 5);
  CHECK(f.max_id() == 2);
  CHECK(f.at(0, 7) == 0);
  CHECK(f.at(7, 6) == 2);
}

TEST_CASE("connected components equal the union-find oracle") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 8 + static_cast<int>(rng() % 25), w = 8 + static_cast<int>(rng() % 25);
    const int density = 2 + static_cast<int>(rng() % 5);
    std::vector<std::uint8_t> m(h * w);
    for (auto& v : m) v = rng() % density != 0;
    const int min_area = static_cast<int>(rng() % 4);
    const auto got = panpp::connected_components(mask_tensor(m, h, w), min_area);
    const auto want = oracle::components(m, h, w, min_area);
    CHECK(got == want);
    CHECK(panpp::same_partition(got, want));
  }
}

TEST_CASE("PA examples") {
  // Kernel mask equal to the region mask leaves nothing to grow.
  Tensor tex({1, 10, 12}, 0.1f), ker({1, 10, 12});
  for (int y = 1; y < 4; ++y) {
    for (int x = 1; x < 6; ++x) tex.at(0, y, x) = ker.at(0, y, x) = 0.9f;
  }
  for (int y = 6; y < 9; ++y) {
    for (int x = 4; x < 11; ++x) tex.at(0, y, x) = ker.at(0, y, x) = 0.8f;
  }
  const Tensor emb({4, 10, 12});
  const auto same = panpp::aggregate(tex, ker, emb, no_filters());
  CHECK(same.labels == panpp::connected_components(ker));
  REQUIRE(same.instances.size() == 2);
  CHECK(same.instances[0].area == 15);
  CHECK(same.instances[0].confidence == doctest::Approx(0.9));

  // One kernel inside a connected region with uniform embeddings takes the region.
  Tensor k1({1, 10, 12});
  k1.at(0, 2, 2) = 0.9f;
  for (int y = 3; y < 6; ++y) tex.at(0, y, 4) = 0.7f;  // bridge to the lower block
  const auto grown = panpp::aggregate(tex, k1, emb, no_filters());
  REQUIRE(grown.instances.size() == 1);
  std::vector<std::uint8_t> region(120);
  for (int i = 0; i < 120; ++i) region[i] = tex[i] >= 0.5f;
  const auto comps = oracle::components(region, 10, 12);
  CHECK(comps.max_id() == 1);
  CHECK(panpp::same_partition(grown.labels, comps));

  // No kernels.
  const auto empty = panpp::aggregate(tex, Tensor({1, 10, 12}), emb, panpp::PAConfig{});
  CHECK(empty.instances.empty());
  CHECK(empty.labels.max_id() == 0);

  CHECK_THROWS_AS(panpp::aggregate(tex, Tensor({1, 10, 11}), emb, panpp::PAConfig{}), panpp::Error);
  panpp::PAConfig bad;
  bad.dist_threshold = 0.0f;
  CHECK_THROWS_AS(panpp::aggregate(tex, ker, emb, bad), panpp::Error);
}

TEST_CASE("PA equals the fixpoint oracle on random scenes") {
  std::mt19937_64 rng(2);
  int contested = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto t = oracle::random_pa_trial(rng);
    panpp::PAConfig cfg = trial % 2 ? panpp::PAConfig{} : no_filters();
    cfg.dist_threshold = 1.5f + static_cast<float>(rng() % 5);
    const auto got = panpp::aggregate(t.p_tex, t.p_ker, t.emb, cfg);
    const auto want = oracle::pa_fixpoint(t.p_tex, t.p_ker, t.emb, cfg);
    CHECK(panpp::same_partition(got.labels, want));
    CHECK(got.labels.max_id() == static_cast<int>(got.instances.size()));

    // Claimed pixels are region pixels; kernel pixels keep their kernel.
    const auto kernels = panpp::connected_components(
        [&] {
          Tensor k({1, 32, 32});
          for (int i = 0; i < 1024; ++i) k[i] = t.p_tex[i] >= cfg.tex_threshold && t.p_ker[i] >= cfg.ker_threshold;
          return k;
        }(),
        cfg.min_kernel_area);
    std::set<std::pair<int, int>> kernel_to_label;
    for (int i = 0; i < 1024; ++i) {
      if (got.labels[i]) CHECK(t.p_tex[i] >= cfg.tex_threshold);
      if (kernels[i] && got.labels[i]) kernel_to_label.insert({kernels[i], got.labels[i]});
    }
    std::set<int> seen;
    for (auto [k, l] : kernel_to_label) {
      CHECK(seen.insert(k).second);
    }
    for (const auto& inst : got.instances) {
      std::vector<std::uint8_t> m = region_of(got.labels, inst.id);
      CHECK(oracle::components(m, 32, 32).max_id() == 1);
    }
    contested += kernels.max_id() > 1;
  }
  CHECK(contested > 100);
}

TEST_CASE("PA with uniform embeddings and a huge threshold is a flood fill") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto t = oracle::random_pa_trial(rng);
    for (auto& v : t.emb.data()) v = 0.0f;
    panpp::PAConfig cfg = no_filters();
    cfg.dist_threshold = 1e30f;
    std::vector<std::uint8_t> region(1024), kernel(1024);
    for (int i = 0; i < 1024; ++i) {
      region[i] = t.p_tex[i] >= 0.5f;
      kernel[i] = region[i] && t.p_ker[i] >= 0.5f;
    }
    const auto want = flood_fill(region, oracle::components(kernel, 32, 32), 32, 32);
    CHECK(panpp::same_partition(panpp::aggregate(t.p_tex, t.p_ker, t.emb, cfg).labels, want));
  }
}

TEST_CASE("contour extraction") {
  InstanceLabelMap block(6, 6);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) block.at(y, x) = 1;
  }
  const auto sq = panpp::extract_contour(block, 1);
  CHECK(sq.size() == 4);
  CHECK(panpp::area(sq) == 9.0);
  CHECK(panpp::rasterize_mask(sq, 6, 6) == region_of(block, 1));
  CHECK(panpp::area(panpp::extract_contour(block, 1, 4.0)) == 144.0);

  InstanceLabelMap one(4, 4);
  one.at(2, 1) = 3;
  const auto unit = panpp::extract_contour(one, 3);
  CHECK(unit.size() == 4);
  CHECK(panpp::area(unit) == 1.0);
  CHECK(panpp::rasterize_mask(unit, 4, 4) == region_of(one, 3));

  InstanceLabelMap ell(6, 6);
  for (int y = 0; y < 5; ++y) ell.at(y, 1) = 1;
  for (int x = 1; x < 5; ++x) ell.at(4, x) = 1;
  const auto l = panpp::extract_contour(ell, 1);
  CHECK(l.size() == 6);
  CHECK(panpp::rasterize_mask(l, 6, 6) == region_of(ell, 1));

  CHECK_THROWS_AS(panpp::extract_contour(ell, 2), panpp::Error);
}

TEST_CASE("contours reproduce random connected regions with holes filled") {
  std::mt19937_64 rng(4);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::uint8_t> m(20 * 20);
    for (auto& v : m) v = rng() % 3 != 0;
    const auto comps = oracle::components(m, 20, 20);
    if (comps.max_id() == 0) continue;
    const auto hist = comps.histogram();
    const int id = static_cast<int>(std::max_element(hist.begin() + 1, hist.end()) - hist.begin());
    const auto poly = panpp::extract_contour(comps, id);
    const auto r = panpp::rasterize_mask(poly, 20, 20);
    // Raster covers the region, and anything extra is background enclosed
    // even under diagonal adjacency.
    std::vector<std::uint8_t> outside(400);
    for (int i = 0; i < 400; ++i) outside[i] = comps[i] != id;
    const auto bg = oracle::components(outside, 20, 20, 0, true);
    std::set<int> touching;
    for (int i = 0; i < 400; ++i) {
      const int y = i / 20, x = i % 20;
      if (bg[i] && (y == 0 || x == 0 || y == 19 || x == 19)) touching.insert(bg[i]);
    }
    for (int i = 0; i < 400; ++i) {
      if (comps[i] == id) CHECK(r[i] == 1);
      else CHECK(r[i] == (touching.count(bg[i]) ? 0 : 1));
    }
    ++checked;
  }
  CHECK(checked > 250);
}

TEST_CASE("instance contours are scaled to image resolution") {
  Tensor tex({1, 8, 8}, 0.0f), ker({1, 8, 8});
  for (int y = 2; y < 6; ++y) {
    for (int x = 1; x < 7; ++x) tex.at(0, y, x) = ker.at(0, y, x) = 0.75f;
  }
  panpp::PAConfig cfg;
  cfg.scale = 4.0;
  const auto r = panpp::aggregate(tex, ker, Tensor({4, 8, 8}), cfg);
  REQUIRE(r.instances.size() == 1);
  CHECK(panpp::area(r.instances[0].contour) == 24.0);
  CHECK(panpp::area(r.instances[0].image_contour) == 24.0 * 16);
  CHECK(r.instances[0].confidence == doctest::Approx(0.75));
}
