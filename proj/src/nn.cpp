// SPDX-License-Identifier: Apache-2.0
#include "panpp/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "panpp/error.hpp"

namespace panpp {

namespace {

void push_bn(std::vector<ParamSpec>& m, const std::string& prefix, int c) {
  for (const char* s : {".gamma", ".beta", ".mean", ".var"}) m.push_back({prefix + s, {c}});
}

void push_sep(std::vector<ParamSpec>& m, const std::string& prefix, int cin, int cout) {
  m.push_back({prefix + ".dw.weight", {cin, 1, 3, 3}});
  m.push_back({prefix + ".pw.weight", {cout, cin, 1, 1}});
  push_bn(m, prefix + ".bn", cout);
}

void push_attention(std::vector<ParamSpec>& m, const std::string& prefix, int e, int qdim) {
  m.push_back({prefix + ".wq", {e, qdim}});
  m.push_back({prefix + ".bq", {e}});
  for (const char* s : {".wk", ".wv", ".wo"}) {
    m.push_back({prefix + s, {e, e}});
    m.push_back({prefix + ".b" + std::string(s + 2), {e}});
  }
}

void push_lstm(std::vector<ParamSpec>& m, const std::string& prefix, int in, int hidden) {
  m.push_back({prefix + ".w_ih", {4 * hidden, in}});
  m.push_back({prefix + ".w_hh", {4 * hidden, hidden}});
  m.push_back({prefix + ".bias", {4 * hidden}});
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

BatchNormParams bn_of(const WeightStore& w, const std::string& prefix, int c) {
  const int d[1] = {c};
  return {w.get(prefix + ".gamma", d), w.get(prefix + ".beta", d), w.get(prefix + ".mean", d),
          w.get(prefix + ".var", d)};
}

Tensor sep_named(const Tensor& x, const WeightStore& w, const std::string& prefix, int cout, int stride) {
  const int cin = x.dim(0);
  const int dw[4] = {cin, 1, 3, 3};
  const int pw[4] = {cout, cin, 1, 1};
  return separable_conv(x, w.get(prefix + ".dw.weight", dw), w.get(prefix + ".pw.weight", pw),
                        bn_of(w, prefix + ".bn", cout), stride);
}

Tensor conv_bn_relu(const Tensor& x, const WeightStore& w, const std::string& prefix, int cout, int k,
                    int stride) {
  const int d[4] = {cout, x.dim(0), k, k};
  Tensor y = conv2d(x, w.get(prefix + ".weight", d), nullptr, stride, k / 2);
  return relu(batch_norm(y, bn_of(w, prefix + ".bn", cout)));
}

int out_size(int in, int k, int stride, int pad) {
  const int span = in + 2 * pad - k;
  if (span < 0) {
    throw_usage("conv kernel larger than padded input: in=" + std::to_string(in) + " k=" + std::to_string(k) +
                " pad=" + std::to_string(pad));
  }
  return span / stride + 1;  // floor, as in standard convolution
}

int out_size_floor(int in, int k, int stride, int pad) {
  const int span = in + 2 * pad - k;
  if (span < 0) throw_usage("conv input smaller than kernel");
  return span / stride + 1;
}

}  // namespace

void ModelConfig::validate() const {
  for (int c : backbone_channels) {
    if (c < 1) throw_usage("backbone channels must be positive");
  }
  if (enhanced_channels < 1) throw_usage("enhanced_channels must be positive");
  if (n_stk < 0) throw_usage("n_stk must be >= 0");
  if (emb_dim < 1) throw_usage("emb_dim must be positive");
  if (rec_dim < 1 || rec_hidden < 1 || rec_heads < 1) throw_usage("recognition sizes must be positive");
  if (rec_dim % rec_heads != 0) throw_usage("rec_dim must be divisible by rec_heads");
  if (vocab_size < 4) throw_usage("vocab_size must be at least 4");
}

std::vector<ParamSpec> architecture_manifest(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> m;
  const auto& bc = cfg.backbone_channels;
  const int e = cfg.enhanced_channels;
  m.push_back({"backbone.stem.weight", {bc[0], 3, 3, 3}});
  push_bn(m, "backbone.stem.bn", bc[0]);
  for (int s = 0; s < 4; ++s) {
    push_sep(m, "backbone.stage" + std::to_string(s + 1), s == 0 ? bc[0] : bc[s - 1], bc[s]);
  }
  for (int s = 0; s < 4; ++s) {
    const std::string p = "reduce" + std::to_string(s + 1);
    m.push_back({p + ".weight", {e, bc[s], 1, 1}});
    push_bn(m, p + ".bn", e);
  }
  for (int k = 0; k < cfg.n_stk; ++k) {
    const std::string p = "fpem" + std::to_string(k);
    for (int lvl : {3, 2, 1}) push_sep(m, p + ".up" + std::to_string(lvl), e, e);
    for (int lvl : {2, 3, 4}) {
      push_sep(m, p + ".down" + std::to_string(lvl) + ".s2", e, e);
      push_sep(m, p + ".down" + std::to_string(lvl) + ".smooth", e, e);
    }
  }
  const int f = cfg.fused_channels();
  m.push_back({"head.conv1.weight", {128, f, 3, 3}});
  push_bn(m, "head.conv1.bn", 128);
  m.push_back({"head.conv2.weight", {cfg.det_out_channels(), 128, 1, 1}});
  m.push_back({"head.conv2.bias", {cfg.det_out_channels()}});

  const int d = cfg.rec_dim, h = cfg.rec_hidden, v = cfg.vocab_size;
  m.push_back({"rec.reduce.weight", {d, f, 3, 3}});
  push_bn(m, "rec.reduce.bn", d);
  m.push_back({"rec.sos_embed.weight", {v, d}});
  push_attention(m, "rec.attn1", d, d);
  push_lstm(m, "rec.lstm1", d, h);
  push_lstm(m, "rec.lstm2", h, h);
  m.push_back({"rec.embed.weight", {v, d}});
  push_attention(m, "rec.attn2", d, h);
  m.push_back({"rec.fc.weight", {v, h + d}});
  m.push_back({"rec.fc.bias", {v}});
  return m;
}

const Tensor& WeightStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw_data("weight '" + name + "' missing");
  return it->second;
}

const Tensor& WeightStore::get(const std::string& name, std::span<const int> dims) const {
  const Tensor& t = get(name);
  if (!std::equal(t.dims().begin(), t.dims().end(), dims.begin(), dims.end())) {
    std::string want = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) want += (i ? "," : "") + std::to_string(dims[i]);
    throw_data("weight '" + name + "' has dims " + t.shape_string() + ", expected " + want + "]");
  }
  return t;
}

void WeightStore::validate(const ModelConfig& cfg) const {
  for (const auto& spec : architecture_manifest(cfg)) {
    const Tensor& t = get(spec.name, spec.dims);
    if (ends_with(spec.name, ".var")) {
      for (float v : t.data()) {
        if (!(v >= 0.0f)) throw_data("weight '" + spec.name + "' has negative variance");
      }
    }
  }
}

WeightStore WeightStore::seeded(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Explicit mapping so the stream does not depend on the standard library's distributions.
  auto uniform = [&rng] { return -0.1f + 0.2f * static_cast<float>(rng() >> 40) * 0x1.0p-24f; };
  WeightStore ws;
  for (const auto& spec : architecture_manifest(cfg)) {
    Tensor t(spec.dims);
    if (ends_with(spec.name, ".gamma") || ends_with(spec.name, ".var")) {
      std::fill(t.data().begin(), t.data().end(), 1.0f);
    } else if (ends_with(spec.name, ".beta") || ends_with(spec.name, ".mean")) {
      // zero
    } else {
      for (float& v : t.data()) v = uniform();
      if (spec.name.rfind("rec.lstm", 0) == 0 && ends_with(spec.name, ".bias")) {
        const int hidden = spec.dims[0] / 4;
        std::fill(t.raw() + hidden, t.raw() + 2 * hidden, 1.0f);
      }
    }
    ws.set(spec.name, std::move(t));
  }
  return ws;
}

WeightStore WeightStore::zeros(const ModelConfig& cfg) {
  WeightStore ws;
  for (const auto& spec : architecture_manifest(cfg)) {
    ws.set(spec.name, Tensor(spec.dims, ends_with(spec.name, ".var") ? 1.0f : 0.0f));
  }
  return ws;
}

std::string format_model_config(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "backbone_channels=" << cfg.backbone_channels[0] << ',' << cfg.backbone_channels[1] << ','
     << cfg.backbone_channels[2] << ',' << cfg.backbone_channels[3] << '\n'
     << "enhanced_channels=" << cfg.enhanced_channels << '\n'
     << "n_stk=" << cfg.n_stk << '\n'
     << "emb_dim=" << cfg.emb_dim << '\n'
     << "rec_dim=" << cfg.rec_dim << '\n'
     << "rec_heads=" << cfg.rec_heads << '\n'
     << "rec_hidden=" << cfg.rec_hidden << '\n'
     << "vocab_size=" << cfg.vocab_size << '\n';
  return os.str();
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw_data("model config line without '=': " + line);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    try {
      if (key == "backbone_channels") {
        std::istringstream vs(value);
        std::string tok;
        for (int i = 0; i < 4; ++i) {
          if (!std::getline(vs, tok, ',')) throw_data("backbone_channels needs 4 values");
          cfg.backbone_channels[i] = std::stoi(tok);
        }
      } else if (key == "enhanced_channels") {
        cfg.enhanced_channels = std::stoi(value);
      } else if (key == "n_stk") {
        cfg.n_stk = std::stoi(value);
      } else if (key == "emb_dim") {
        cfg.emb_dim = std::stoi(value);
      } else if (key == "rec_dim") {
        cfg.rec_dim = std::stoi(value);
      } else if (key == "rec_heads") {
        cfg.rec_heads = std::stoi(value);
      } else if (key == "rec_hidden") {
        cfg.rec_hidden = std::stoi(value);
      } else if (key == "vocab_size") {
        cfg.vocab_size = std::stoi(value);
      } else {
        throw_data("unknown model config key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw_data("bad value for model config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

void WeightStore::save(const std::filesystem::path& dir, const ModelConfig& cfg) const {
  validate(cfg);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw_io("cannot create " + dir.string() + ": " + ec.message());
  std::ostringstream manifest;
  for (const auto& spec : architecture_manifest(cfg)) {
    manifest << spec.name;
    for (int d : spec.dims) manifest << ' ' << d;
    manifest << '\n';
    write_ptm(dir / (spec.name + ".ptm"), get(spec.name));
  }
  write_file_atomic(dir / "manifest.txt", manifest.str());
  write_file_atomic(dir / "config.txt", format_model_config(cfg));
}

WeightStore WeightStore::load(const std::filesystem::path& dir, ModelConfig* cfg_out) {
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw_io("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const ModelConfig cfg = parse_model_config(slurp(dir / "config.txt"));
  std::istringstream manifest(slurp(dir / "manifest.txt"));
  WeightStore ws;
  std::string line;
  while (std::getline(manifest, line)) {
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name)) continue;
    std::vector<int> dims;
    for (int d; ls >> d;) dims.push_back(d);
    Tensor t = read_ptm(dir / (name + ".ptm"));
    if (t.dims() != dims) throw_data("weight '" + name + "' does not match manifest dims");
    ws.set(name, std::move(t));
  }
  ws.validate(cfg);
  if (cfg_out) *cfg_out = cfg;
  return ws;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor* bias, int stride, int pad) {
  if (x.rank() != 3 || weight.rank() != 4) throw_usage("conv2d expects x [C,H,W] and weight [Cout,Cin,kh,kw]");
  if (stride < 1 || pad < 0) throw_usage("conv2d stride must be >= 1 and pad >= 0");
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin) {
    throw_usage("conv2d channel mismatch: x " + x.shape_string() + ", weight " + weight.shape_string());
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != cout)) throw_usage("conv2d bias must be [Cout]");
  const int oh = out_size(h, kh, stride, pad);
  const int ow = out_size(w, kw, stride, pad);
  Tensor out({cout, oh, ow});
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;

  // Each output accumulates in (ci, ky, kx) order regardless of the blocking below.
  constexpr int kBlock = 4;
  for (int co0 = 0; co0 < cout; co0 += kBlock) {
    const int nb = std::min(kBlock, cout - co0);
    float* o[kBlock];
    for (int b = 0; b < nb; ++b) {
      o[b] = out.raw() + static_cast<std::size_t>(co0 + b) * plane;
      std::fill(o[b], o[b] + plane, bias ? (*bias)[co0 + b] : 0.0f);
    }
    for (int ci = 0; ci < cin; ++ci) {
      const float* src = x.raw() + ci * in_plane;
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          float wv[kBlock] = {0, 0, 0, 0};
          for (int b = 0; b < nb; ++b) {
            wv[b] = weight[((static_cast<std::size_t>(co0 + b) * cin + ci) * kh + ky) * kw + kx];
          }
          // Valid output columns: 0 <= ox*stride + kx - pad < w.
          const int ox0 = std::max(0, (pad - kx + stride - 1) / stride);
          const int last = w - 1 + pad - kx;
          const int ox1 = last < 0 ? 0 : std::min(ow, last / stride + 1);
          if (ox0 >= ox1) continue;
          const int off = kx - pad;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            const float* __restrict row = src + static_cast<std::size_t>(iy) * w;
            const std::size_t base = static_cast<std::size_t>(oy) * ow;
            if (stride == 1) {
              if (nb == kBlock) {
                float* __restrict o0 = o[0] + base;
                float* __restrict o1 = o[1] + base;
                float* __restrict o2 = o[2] + base;
                float* __restrict o3 = o[3] + base;
                for (int ox = ox0; ox < ox1; ++ox) {
                  const float v = row[ox + off];
                  o0[ox] += wv[0] * v;
                  o1[ox] += wv[1] * v;
                  o2[ox] += wv[2] * v;
                  o3[ox] += wv[3] * v;
                }
              } else {
                for (int b = 0; b < nb; ++b) {
                  float* ob = o[b] + base;
                  for (int ox = ox0; ox < ox1; ++ox) ob[ox] += wv[b] * row[ox + off];
                }
              }
            } else {
              for (int b = 0; b < nb; ++b) {
                float* ob = o[b] + base;
                for (int ox = ox0; ox < ox1; ++ox) ob[ox] += wv[b] * row[ox * stride + off];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, int stride, int pad) {
  if (x.rank() != 3 || weight.rank() != 4 || weight.dim(1) != 1) {
    throw_usage("depthwise_conv2d expects x [C,H,W] and weight [C,1,kh,kw]");
  }
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (weight.dim(0) != c) {
    throw_usage("depthwise channel mismatch: x " + x.shape_string() + ", weight " + weight.shape_string());
  }
  if (stride < 1 || pad < 0) throw_usage("depthwise stride must be >= 1 and pad >= 0");
  const int kh = weight.dim(2), kw = weight.dim(3);
  const int oh = out_size_floor(h, kh, stride, pad);
  const int ow = out_size_floor(w, kw, stride, pad);
  Tensor out({c, oh, ow});
  for (int ch = 0; ch < c; ++ch) {
    const float* src = x.raw() + static_cast<std::size_t>(ch) * h * w;
    float* dst = out.raw() + static_cast<std::size_t>(ch) * oh * ow;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const float wv = weight[(static_cast<std::size_t>(ch) * kh + ky) * kw + kx];
        const int ox0 = std::max(0, (pad - kx + stride - 1) / stride);
        const int last = w - 1 + pad - kx;
        const int ox1 = last < 0 ? 0 : std::min(ow, last / stride + 1);
        const int off = kx - pad;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const float* __restrict row = src + static_cast<std::size_t>(iy) * w;
          float* orow = dst + static_cast<std::size_t>(oy) * ow;
          if (stride == 1) {
            for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * row[ox + off];
          } else {
            for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * row[ox * stride + off];
          }
        }
      }
    }
  }
  return out;
}

Tensor batch_norm(const Tensor& x, const BatchNormParams& bn, float eps) {
  if (x.rank() != 3) throw_usage("batch_norm expects [C,H,W]");
  const int c = x.dim(0);
  for (const Tensor* t : {&bn.gamma, &bn.beta, &bn.mean, &bn.var}) {
    if (t->size() != static_cast<std::size_t>(c)) throw_usage("batch_norm parameter length != C");
  }
  Tensor out(x.dims());
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  for (int ch = 0; ch < c; ++ch) {
    const float scale = bn.gamma[ch] / std::sqrt(bn.var[ch] + eps);
    const float mean = bn.mean[ch], beta = bn.beta[ch];
    const float* src = x.raw() + ch * plane;
    float* dst = out.raw() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = scale * (src[i] - mean) + beta;
  }
  return out;
}

Tensor relu(Tensor x) {
  for (float& v : x.data()) v = v > 0.0f ? v : 0.0f;
  return x;
}

Tensor separable_conv(const Tensor& x, const Tensor& dw_weight, const Tensor& pw_weight,
                      const BatchNormParams& bn, int stride) {
  if (dw_weight.rank() != 4 || dw_weight.dim(0) != x.dim(0) || dw_weight.dim(2) != 3 || dw_weight.dim(3) != 3) {
    throw_usage("separable_conv depthwise weight must be [C,1,3,3] with C = input channels");
  }
  if (pw_weight.rank() != 4 || pw_weight.dim(1) != x.dim(0) || pw_weight.dim(2) != 1 || pw_weight.dim(3) != 1) {
    throw_usage("separable_conv pointwise weight must be [Cout,Cin,1,1]");
  }
  Tensor y = depthwise_conv2d(x, dw_weight, stride, 1);
  y = conv2d(y, pw_weight, nullptr, 1, 0);
  return relu(batch_norm(y, bn));
}

Pyramid fpem(const Pyramid& in, const WeightStore& w, const std::string& prefix) {
  for (int i = 0; i < 4; ++i) {
    if (in[i].rank() != 3) throw_usage("fpem level must be [C,H,W]");
    if (in[i].dim(0) != in[0].dim(0)) throw_usage("fpem levels must share a channel count");
  }
  for (int i = 0; i < 3; ++i) {
    if (in[i].dim(1) != 2 * in[i + 1].dim(1) || in[i].dim(2) != 2 * in[i + 1].dim(2)) {
      throw_usage("fpem pyramid levels are not in an exact 2x relation: " + in[i].shape_string() + " vs " +
                  in[i + 1].shape_string());
    }
  }
  const int c = in[0].dim(0);
  // Up-scale phase, coarse to fine.
  Pyramid up;
  up[3] = in[3];
  for (int i = 2; i >= 0; --i) {
    const Tensor joined = add(in[i], bilinear_resize(up[i + 1], in[i].dim(1), in[i].dim(2)));
    up[i] = sep_named(joined, w, prefix + ".up" + std::to_string(i + 1), c, 1);
  }
  // Down-scale phase, fine to coarse.
  Pyramid down;
  down[0] = up[0];
  for (int i = 1; i < 4; ++i) {
    const std::string p = prefix + ".down" + std::to_string(i + 1);
    const Tensor reduced = sep_named(down[i - 1], w, p + ".s2", c, 2);
    down[i] = sep_named(add(up[i], reduced), w, p + ".smooth", c, 1);
  }
  Pyramid out;
  for (int i = 0; i < 4; ++i) out[i] = add(in[i], down[i]);
  return out;
}

Tensor enhance_and_fuse(const Pyramid& pyramid, const WeightStore& w, int n_stk) {
  if (n_stk < 0) throw_usage("n_stk must be >= 0");
  Pyramid p = pyramid;
  for (int k = 0; k < n_stk; ++k) p = fpem(p, w, "fpem" + std::to_string(k));
  const int h = p[0].dim(1), wd = p[0].dim(2);
  std::array<Tensor, 4> levels{p[0], bilinear_resize(p[1], h, wd), bilinear_resize(p[2], h, wd),
                               bilinear_resize(p[3], h, wd)};
  return concat_channels(levels);
}

DetectionMaps detection_head(const Tensor& fused, const WeightStore& w, const ModelConfig& cfg) {
  if (fused.rank() != 3 || fused.dim(0) != cfg.fused_channels()) {
    throw_usage("detection head expects " + std::to_string(cfg.fused_channels()) + " channels, got " +
                fused.shape_string());
  }
  const Tensor hidden = conv_bn_relu(fused, w, "head.conv1", 128, 3, 1);
  const int d[4] = {cfg.det_out_channels(), 128, 1, 1};
  const int b[1] = {cfg.det_out_channels()};
  const Tensor logits = conv2d(hidden, w.get("head.conv2.weight", d), &w.get("head.conv2.bias", b), 1, 0);

  const int h = logits.dim(1), wd = logits.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * wd;
  DetectionMaps out{Tensor({1, h, wd}), Tensor({1, h, wd}), Tensor({cfg.emb_dim, h, wd})};
  constexpr float lo = std::numeric_limits<float>::min();
  const float hi = std::nextafter(1.0f, 0.0f);
  auto sigmoid = [&](float v) {
    return std::clamp(static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v)))), lo, hi);
  };
  for (std::size_t i = 0; i < plane; ++i) {
    out.p_tex[i] = sigmoid(logits[i]);
    out.p_ker[i] = sigmoid(logits[plane + i]);
  }
  std::copy(logits.raw() + 2 * plane, logits.raw() + logits.size(), out.emb.raw());
  return out;
}

Pyramid toy_backbone(const Tensor& image, const WeightStore& w, const ModelConfig& cfg) {
  if (image.rank() != 3 || image.dim(0) != 3) throw_usage("backbone expects a [3,H,W] image");
  const int h = image.dim(1), wd = image.dim(2);
  if (h % 32 != 0 || wd % 32 != 0) {
    throw_usage("image dims " + std::to_string(h) + "x" + std::to_string(wd) +
                " must be divisible by 32; pad to " + std::to_string((h + 31) / 32 * 32) + "x" +
                std::to_string((wd + 31) / 32 * 32));
  }
  const auto& bc = cfg.backbone_channels;
  Tensor x = conv_bn_relu(image, w, "backbone.stem", bc[0], 3, 2);
  Pyramid out;
  for (int s = 0; s < 4; ++s) {
    x = sep_named(x, w, "backbone.stage" + std::to_string(s + 1), bc[s], 2);
    out[s] = conv_bn_relu(x, w, "reduce" + std::to_string(s + 1), cfg.enhanced_channels, 1, 1);
  }
  return out;
}

Tensor recognition_features(const Tensor& fused, const WeightStore& w, const ModelConfig& cfg) {
  return conv_bn_relu(fused, w, "rec.reduce", cfg.rec_dim, 3, 1);
}

}  // namespace panpp
