// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <random>

#include "panpp/error.hpp"
#include "panpp/nn.hpp"
#include "support/golden.hpp"

using panpp::Tensor;

namespace {

Tensor random_tensor(std::vector<int> dims, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(dims));
  std::uniform_real_distribution<float> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

panpp::ModelConfig small_config() {
  panpp::ModelConfig cfg;
  cfg.backbone_channels = {8, 12, 16, 20};
  cfg.enhanced_channels = 8;
  cfg.n_stk = 2;
  cfg.rec_dim = 16;
  cfg.rec_heads = 2;
  cfg.rec_hidden = 16;
  return cfg;
}

panpp::Pyramid random_pyramid(std::mt19937_64& rng, int c, int h, int w) {
  panpp::Pyramid p;
  for (int i = 0; i < 4; ++i) p[i] = random_tensor({c, h >> i, w >> i}, rng);
  return p;
}

// Element (o, c, u, v) of a [O,C,K,K] kernel.
float& w4(Tensor& t, int o, int c, int u, int v) {
  return t[((static_cast<std::size_t>(o) * t.dim(1) + c) * t.dim(2) + u) * t.dim(3) + v];
}
float w4(const Tensor& t, int o, int c, int u, int v) {
  return t[((static_cast<std::size_t>(o) * t.dim(1) + c) * t.dim(2) + u) * t.dim(3) + v];
}

struct Bn {
  Tensor gamma, beta, mean, var;
  panpp::BatchNormParams params() const { return {gamma, beta, mean, var}; }
};

Bn bn_const(int c, float g, float b, float m, float v) {
  return {Tensor({c}, g), Tensor({c}, b), Tensor({c}, m), Tensor({c}, v)};
}

}  // namespace

TEST_CASE("conv2d examples") {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({3, 6, 7}, rng);
  Tensor id({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w4(id, c, c, 0, 0) = 1.0f;
  CHECK(panpp::conv2d(x, id, nullptr, 1, 0) == x);

  const Tensor ones({1, 5, 5}, 1.0f);
  const Tensor k({1, 1, 3, 3}, 1.0f);
  const Tensor y = panpp::conv2d(ones, k, nullptr, 1, 1);
  REQUIRE(y.dims() == std::vector<int>{1, 5, 5});
  CHECK(y.at(0, 2, 2) == 9.0f);
  CHECK(y.at(0, 0, 2) == 6.0f);
  CHECK(y.at(0, 2, 4) == 6.0f);
  CHECK(y.at(0, 0, 0) == 4.0f);
  CHECK(y.at(0, 4, 4) == 4.0f);

  const Tensor zero({2, 3, 3, 3});
  const Tensor bias({2}, std::vector<float>{0.5f, -2.0f});
  const Tensor b = panpp::conv2d(x, zero, &bias, 2, 1);
  CHECK(b.dims() == std::vector<int>{2, 3, 4});
  for (int i = 0; i < 12; ++i) {
    CHECK(b[i] == 0.5f);
    CHECK(b[12 + i] == -2.0f);
  }

  // Strided and padded output against a direct sum.
  const Tensor w = random_tensor({2, 3, 3, 3}, rng);
  const Tensor s = panpp::conv2d(x, w, nullptr, 2, 1);
  for (int o = 0; o < 2; ++o) {
    for (int i = 0; i < s.dim(1); ++i) {
      for (int j = 0; j < s.dim(2); ++j) {
        double acc = 0;
        for (int c = 0; c < 3; ++c) {
          for (int u = 0; u < 3; ++u) {
            for (int v = 0; v < 3; ++v) {
              const int yy = 2 * i - 1 + u, xx = 2 * j - 1 + v;
              if (yy >= 0 && yy < 6 && xx >= 0 && xx < 7) acc += double(w4(w, o, c, u, v)) * x.at(c, yy, xx);
            }
          }
        }
        CHECK(s.at(o, i, j) == doctest::Approx(acc).epsilon(1e-5));
      }
    }
  }

  CHECK_THROWS_AS(panpp::conv2d(x, Tensor({1, 2, 3, 3}), nullptr, 1, 1), panpp::Error);
  CHECK_THROWS_AS(panpp::conv2d(x, w, nullptr, 0, 1), panpp::Error);
  CHECK_THROWS_AS(panpp::conv2d(Tensor({3, 2, 2}), Tensor({1, 3, 5, 5}), nullptr, 1, 0), panpp::Error);
}

TEST_CASE("batch norm examples") {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({2, 4, 4}, rng);
  const float eps = 1e-5f;
  const Bn id = bn_const(2, 1, 0, 0, 1 - eps);
  const Tensor y = panpp::batch_norm(x, id.params(), eps);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-6));

  const Bn z = bn_const(2, 0, 0, 0.3f, 2);
  const Tensor zy = panpp::batch_norm(x, z.params());
  for (float v : zy.data()) CHECK(v == 0.0f);

  const Bn h = bn_const(1, 2, 1, 3, 4 - eps);
  const Tensor five({1, 1, 1}, 5.0f);
  CHECK(panpp::batch_norm(five, h.params(), eps)[0] == doctest::Approx(3.0).epsilon(1e-6));

  const Bn wrong = bn_const(3, 1, 0, 0, 1);
  CHECK_THROWS_AS(panpp::batch_norm(x, wrong.params()), panpp::Error);
}

TEST_CASE("separable conv examples") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({4, 6, 5}, rng);
  const Bn zero_bn = bn_const(4, 0, 0, 0, 1);
  const Tensor zs = panpp::separable_conv(x, Tensor({4, 1, 3, 3}), Tensor({4, 4, 1, 1}), zero_bn.params(), 1);
  for (float v : zs.data()) {
    CHECK(v == 0.0f);
  }

  Tensor dw({4, 1, 3, 3});
  Tensor pw({4, 4, 1, 1});
  for (int c = 0; c < 4; ++c) {
    w4(dw, c, 0, 1, 1) = 1.0f;
    w4(pw, c, c, 0, 0) = 1.0f;
  }
  const Bn id = bn_const(4, 1, 0, 0, 1 - 1e-5f);
  const Tensor y = panpp::separable_conv(x, dw, pw, id.params(), 1);
  REQUIRE(y.dims() == x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(std::max(0.0f, x[i])).epsilon(1e-6));

  CHECK(panpp::separable_conv(x, dw, pw, id.params(), 2).dims() == std::vector<int>{4, 3, 3});
  CHECK_THROWS_AS(panpp::separable_conv(x, Tensor({3, 1, 3, 3}), pw, id.params(), 1), panpp::Error);
  CHECK_THROWS_AS(panpp::separable_conv(x, dw, Tensor({4, 3, 1, 1}), id.params(), 1), panpp::Error);
}

TEST_CASE("FPEM with zero branches is the identity") {
  panpp::ModelConfig cfg = small_config();
  cfg.n_stk = 4;
  const auto w = panpp::WeightStore::zeros(cfg);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 8 * (1 + static_cast<int>(rng() % 4)), wd = 8 * (1 + static_cast<int>(rng() % 4));
    const auto p = random_pyramid(rng, cfg.enhanced_channels, h, wd);
    const auto out = panpp::fpem(p, w, "fpem" + std::to_string(trial % 4));
    for (int i = 0; i < 4; ++i) CHECK(out[i] == p[i]);
  }
  const auto p = random_pyramid(rng, cfg.enhanced_channels, 16, 16);
  const auto twice = panpp::fpem(panpp::fpem(p, w, "fpem0"), w, "fpem1");
  for (int i = 0; i < 4; ++i) CHECK(twice[i] == p[i]);
}

TEST_CASE("FPEM shapes and pyramid validation") {
  for (int n : {1, 2, 4}) {
    panpp::ModelConfig cfg;
    cfg.n_stk = n;
    const auto w = panpp::WeightStore::seeded(cfg, 9);
    std::mt19937_64 rng(n);
    const auto p = random_pyramid(rng, 128, 64, 64);
    const auto out = panpp::fpem(p, w, "fpem" + std::to_string(n - 1));
    for (int i = 0; i < 4; ++i) CHECK(out[i].dims() == p[i].dims());
    if (n == 1) {
      const Tensor f = panpp::enhance_and_fuse(p, w, 1);
      CHECK(f.dims() == std::vector<int>{512, 64, 64});
    }
  }
  const auto w = panpp::WeightStore::zeros(small_config());
  std::mt19937_64 rng(5);
  auto p = random_pyramid(rng, 8, 16, 16);
  p[2] = Tensor({8, 3, 3});
  CHECK_THROWS_AS(panpp::fpem(p, w, "fpem0"), panpp::Error);
  auto q = random_pyramid(rng, 8, 16, 16);
  q[1] = Tensor({6, 8, 8});
  CHECK_THROWS_AS(panpp::fpem(q, w, "fpem0"), panpp::Error);
}

TEST_CASE("enhance and fuse") {
  const auto cfg = small_config();
  const auto w = panpp::WeightStore::zeros(cfg);
  panpp::Pyramid p;
  for (int i = 0; i < 4; ++i) p[i] = Tensor({8, 16 >> i, 16 >> i}, static_cast<float>(i + 1));
  for (int n : {0, 2}) {
    const Tensor f = panpp::enhance_and_fuse(p, w, n);
    REQUIRE(f.dims() == std::vector<int>{32, 16, 16});
    for (int c = 0; c < 32; ++c) {
      for (int k = 0; k < 256; ++k) CHECK(f[c * 256 + k] == static_cast<float>(c / 8 + 1));
    }
  }
  // Zero stacking is plain fusion of the raw pyramid.
  std::mt19937_64 rng(6);
  const auto r = random_pyramid(rng, 8, 16, 16);
  const Tensor f0 = panpp::enhance_and_fuse(r, panpp::WeightStore::seeded(cfg, 1), 0);
  for (int c = 0; c < 8; ++c) {
    for (int k = 0; k < 256; ++k) CHECK(f0[c * 256 + k] == r[0][c * 256 + k]);
  }
  CHECK_THROWS_AS(panpp::enhance_and_fuse(r, w, -1), panpp::Error);
}

TEST_CASE("detection head") {
  const auto cfg = small_config();
  auto w = panpp::WeightStore::seeded(cfg, 3);
  w.set("head.conv2.weight", Tensor({cfg.det_out_channels(), 128, 1, 1}));
  w.set("head.conv2.bias", Tensor({cfg.det_out_channels()}));
  std::mt19937_64 rng(7);
  const Tensor f = random_tensor({cfg.fused_channels(), 12, 10}, rng);
  const auto d = panpp::detection_head(f, w, cfg);
  CHECK(d.p_tex.dims() == std::vector<int>{1, 12, 10});
  CHECK(d.p_ker.dims() == std::vector<int>{1, 12, 10});
  CHECK(d.emb.dims() == std::vector<int>{4, 12, 10});
  for (float v : d.p_tex.data()) CHECK(v == 0.5f);
  for (float v : d.p_ker.data()) CHECK(v == 0.5f);
  for (float v : d.emb.data()) CHECK(v == 0.0f);

  // Saturating logits still give probabilities strictly inside (0, 1).
  auto big = panpp::WeightStore::seeded(cfg, 3);
  big.set("head.conv2.bias", Tensor({cfg.det_out_channels()}, std::vector<float>{200, -200, 0, 0, 0, 0}));
  const auto s = panpp::detection_head(f, big, cfg);
  for (std::size_t i = 0; i < s.p_tex.size(); ++i) {
    CHECK(s.p_tex[i] > 0.0f);
    CHECK(s.p_tex[i] < 1.0f);
    CHECK(s.p_ker[i] > 0.0f);
    CHECK(s.p_ker[i] < 1.0f);
  }
  CHECK_THROWS_AS(panpp::detection_head(Tensor({5, 4, 4}), w, cfg), panpp::Error);
}

TEST_CASE("toy backbone shapes, zeros and divisibility") {
  panpp::ModelConfig cfg;
  const auto w = panpp::WeightStore::seeded(cfg, 1);
  std::mt19937_64 rng(8);
  const Tensor img = random_tensor({3, 64, 64}, rng, 0.0f, 1.0f);
  const auto p = panpp::toy_backbone(img, w, cfg);
  CHECK(p[0].dims() == std::vector<int>{128, 16, 16});
  CHECK(p[1].dims() == std::vector<int>{128, 8, 8});
  CHECK(p[2].dims() == std::vector<int>{128, 4, 4});
  CHECK(p[3].dims() == std::vector<int>{128, 2, 2});

  const auto small = small_config();
  for (const auto& level : panpp::toy_backbone(img, panpp::WeightStore::zeros(small), small)) {
    for (float v : level.data()) CHECK(v == 0.0f);
  }
  try {
    panpp::toy_backbone(Tensor({3, 48, 64}), w, cfg);
    FAIL("expected an error");
  } catch (const panpp::Error& e) {
    CHECK(e.kind() == panpp::ErrorKind::kUsage);
    CHECK(std::string(e.what()).find("64x64") != std::string::npos);
  }
}

TEST_CASE("shape algebra for inputs divisible by 32") {
  const auto cfg = small_config();
  const auto w = panpp::WeightStore::seeded(cfg, 2);
  std::mt19937_64 rng(10);
  for (auto [h, wd] : {std::pair{32, 32}, {64, 96}, {96, 32}, {160, 128}}) {
    const Tensor img = random_tensor({3, h, wd}, rng, 0.0f, 1.0f);
    const auto p = panpp::toy_backbone(img, w, cfg);
    for (int i = 0; i < 4; ++i) CHECK(p[i].dims() == std::vector<int>{8, h >> (i + 2), wd >> (i + 2)});
    const Tensor f = panpp::enhance_and_fuse(p, w, cfg.n_stk);
    CHECK(f.dims() == std::vector<int>{32, h / 4, wd / 4});
    const auto d = panpp::detection_head(f, w, cfg);
    CHECK(d.emb.dims() == std::vector<int>{4, h / 4, wd / 4});
    CHECK(panpp::recognition_features(f, w, cfg).dims() == std::vector<int>{16, h / 4, wd / 4});
  }
}

TEST_CASE("forward pass is deterministic and matches the stored golden") {
  const auto cfg = small_config();
  const auto w = panpp::WeightStore::seeded(cfg, 2024);
  std::mt19937_64 rng(2024);
  const Tensor img = random_tensor({3, 64, 64}, rng, 0.0f, 1.0f);
  auto run = [&] {
    const auto p = panpp::toy_backbone(img, w, cfg);
    return panpp::detection_head(panpp::enhance_and_fuse(p, w, cfg.n_stk), w, cfg);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.p_tex == b.p_tex);
  CHECK(a.p_ker == b.p_ker);
  CHECK(a.emb == b.emb);
  for (float v : a.p_tex.data()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  golden::check("nn_backbone_level0", panpp::toy_backbone(img, w, cfg)[0]);
  golden::check("nn_head_p_tex", a.p_tex);
  golden::check("nn_head_p_ker", a.p_ker);
  golden::check("nn_head_emb", a.emb);
}

TEST_CASE("weight store validation and persistence") {
  const auto cfg = small_config();
  auto w = panpp::WeightStore::seeded(cfg, 11);
  CHECK_NOTHROW(w.validate(cfg));
  const auto manifest = panpp::architecture_manifest(cfg);
  CHECK(manifest.size() == w.tensors().size());
  for (const auto& spec : manifest) {
    REQUIRE(w.contains(spec.name));
    CHECK(w.get(spec.name).dims() == spec.dims);
  }
  CHECK(panpp::WeightStore::seeded(cfg, 11).tensors() == w.tensors());
  CHECK_FALSE(panpp::WeightStore::seeded(cfg, 12).tensors() == w.tensors());
  for (const auto& [name, t] : w.tensors()) {
    for (float v : t.data()) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
  }

  const auto dir = std::filesystem::temp_directory_path() / "panpp_nn_weights";
  std::filesystem::remove_all(dir);
  w.save(dir, cfg);
  panpp::ModelConfig back;
  const auto loaded = panpp::WeightStore::load(dir, &back);
  CHECK(loaded.tensors() == w.tensors());
  CHECK(panpp::format_model_config(back) == panpp::format_model_config(cfg));
  std::filesystem::remove_all(dir);

  auto bad = w;
  const auto& first = manifest.front();
  bad.set(first.name, Tensor({1}));
  CHECK_THROWS_AS(bad.validate(cfg), panpp::Error);
  auto neg = w;
  for (const auto& spec : manifest) {
    if (spec.name.ends_with(".var")) {
      neg.set(spec.name, Tensor(spec.dims, -1.0f));
      break;
    }
  }
  CHECK_THROWS_AS(neg.validate(cfg), panpp::Error);
  CHECK_THROWS_AS(w.get("no.such.layer"), panpp::Error);

  panpp::ModelConfig broken = cfg;
  broken.n_stk = -1;
  CHECK_THROWS_AS(broken.validate(), panpp::Error);
  CHECK(panpp::parse_model_config(panpp::format_model_config(cfg)).rec_heads == cfg.rec_heads);
}
