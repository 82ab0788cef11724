// SPDX-License-Identifier: Apache-2.0
#include "panpp/recognition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "panpp/error.hpp"

namespace panpp {

namespace {

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 0;
}

// out[r] = sum_c m[r,c] * x[c] + b[r]
std::vector<float> matvec(const Tensor& m, std::span<const float> x, const Tensor* b) {
  const int rows = m.dim(0), cols = m.dim(1);
  if (static_cast<int>(x.size()) != cols) {
    throw_usage("matvec: input length " + std::to_string(x.size()) + " vs matrix " + m.shape_string());
  }
  std::vector<float> out(rows);
  for (int r = 0; r < rows; ++r) {
    const float* row = m.raw() + static_cast<std::size_t>(r) * cols;
    double s = b ? (*b)[r] : 0.0;
    for (int c = 0; c < cols; ++c) s += static_cast<double>(row[c]) * x[c];
    out[r] = static_cast<float>(s);
  }
  return out;
}

// [L,E_in] x W[E,E_in]^T + b -> [L,E]
Tensor project_rows(const Tensor& x, const Tensor& wt, const Tensor& b) {
  const int l = x.dim(0), e = wt.dim(0), in = wt.dim(1);
  if (x.dim(1) != in) throw_usage("attention: memory width " + std::to_string(x.dim(1)) + " vs " + wt.shape_string());
  Tensor out({l, e});
  for (int i = 0; i < l; ++i) {
    const float* xi = x.raw() + static_cast<std::size_t>(i) * in;
    for (int r = 0; r < e; ++r) {
      const float* wr = wt.raw() + static_cast<std::size_t>(r) * in;
      double s = b[r];
      for (int c = 0; c < in; ++c) s += static_cast<double>(wr[c]) * xi[c];
      out.at(i, r) = static_cast<float>(s);
    }
  }
  return out;
}

float sigmoid(double v) { return static_cast<float>(1.0 / (1.0 + std::exp(-v))); }

struct LstmState {
  std::vector<float> h, c;
};

LstmState lstm_cell(std::span<const float> x, const LstmState& s, const WeightStore& w, const std::string& prefix,
                    int hidden) {
  const Tensor& w_ih = w.get(prefix + ".w_ih");
  const Tensor& w_hh = w.get(prefix + ".w_hh");
  const Tensor& bias = w.get(prefix + ".bias");
  std::vector<float> gx = matvec(w_ih, x, &bias);
  const std::vector<float> gh = matvec(w_hh, s.h, nullptr);
  LstmState out{std::vector<float>(hidden), std::vector<float>(hidden)};
  // Gate order i, f, g, o.
  for (int k = 0; k < hidden; ++k) {
    const float i = sigmoid(static_cast<double>(gx[k]) + gh[k]);
    const float f = sigmoid(static_cast<double>(gx[hidden + k]) + gh[hidden + k]);
    const float g = static_cast<float>(std::tanh(static_cast<double>(gx[2 * hidden + k]) + gh[2 * hidden + k]));
    const float o = sigmoid(static_cast<double>(gx[3 * hidden + k]) + gh[3 * hidden + k]);
    out.c[k] = f * s.c[k] + i * g;
    out.h[k] = o * static_cast<float>(std::tanh(static_cast<double>(out.c[k])));
  }
  return out;
}

std::span<const float> embedding_row(const Tensor& table, int id) {
  if (id < 0 || id >= table.dim(0)) throw_usage("embedding id " + std::to_string(id) + " out of range");
  const int d = table.dim(1);
  return {table.raw() + static_cast<std::size_t>(id) * d, static_cast<std::size_t>(d)};
}

void check_vocab(const ModelConfig& cfg, const Charset& charset) {
  if (cfg.vocab_size != charset.size()) {
    throw_usage("charset has " + std::to_string(charset.size()) + " symbols (with EOS/SOS/PAD) but the model expects " +
                std::to_string(cfg.vocab_size));
  }
}

}  // namespace

std::vector<std::string> utf8_symbols(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size();) {
    const std::size_t n = utf8_length(static_cast<unsigned char>(text[i]));
    if (n == 0 || i + n > text.size()) throw_data("invalid UTF-8 in \"" + std::string(text) + "\"");
    for (std::size_t k = 1; k < n; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) >> 6) != 0x2) {
        throw_data("invalid UTF-8 in \"" + std::string(text) + "\"");
      }
    }
    out.emplace_back(text.substr(i, n));
    i += n;
  }
  return out;
}

Charset::Charset(std::vector<std::string> symbols, bool case_fold)
    : symbols_(std::move(symbols)), case_fold_(case_fold) {
  if (symbols_.empty()) throw_usage("charset is empty");
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (utf8_symbols(symbols_[i]).size() != 1) throw_usage("charset entry \"" + symbols_[i] + "\" is not one symbol");
    for (std::size_t j = 0; j < i; ++j) {
      if (symbols_[i] == symbols_[j]) throw_usage("charset entry \"" + symbols_[i] + "\" is duplicated");
    }
  }
}

Charset Charset::default_english() {
  std::vector<std::string> s;
  for (char c = 'a'; c <= 'z'; ++c) s.emplace_back(1, c);
  for (char c = '0'; c <= '9'; ++c) s.emplace_back(1, c);
  return Charset(std::move(s), true);
}

Charset Charset::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open charset file " + path.string());
  std::vector<std::string> s;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) s.push_back(line);
  }
  return Charset(std::move(s), false);
}

std::vector<int> Charset::encode(std::string_view text) const {
  std::vector<int> ids;
  for (std::string sym : utf8_symbols(text)) {
    if (case_fold_ && sym.size() == 1 && sym[0] >= 'A' && sym[0] <= 'Z') sym[0] = static_cast<char>(sym[0] - 'A' + 'a');
    const auto it = std::find(symbols_.begin(), symbols_.end(), sym);
    if (it == symbols_.end()) throw_data("symbol \"" + sym + "\" is not in the charset");
    ids.push_back(static_cast<int>(it - symbols_.begin()));
  }
  ids.push_back(eos());
  return ids;
}

std::string Charset::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == eos()) break;
    if (id < 0 || id >= size()) throw_usage("symbol id " + std::to_string(id) + " out of range");
    if (!is_special(id)) out += symbols_[id];
  }
  return out;
}

RoiPatch masked_roi(const Tensor& features, const Tensor& mask, int instance_id) {
  if (features.rank() != 3) throw_usage("masked_roi expects [C,H,W] features");
  const int c = features.dim(0), h = features.dim(1), w = features.dim(2);
  if (mask.rank() != 3 || mask.dim(0) != 1 || mask.dim(1) != h || mask.dim(2) != w) {
    throw_usage("masked_roi: mask " + mask.shape_string() + " does not match features " + features.shape_string());
  }
  int x0 = w, y0 = h, x1 = -1, y1 = -1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask.at(0, y, x) != 0.0f) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) throw_usage("masked_roi: mask is empty");
  const int ch = y1 - y0 + 1, cw = x1 - x0 + 1;
  Tensor crop({c, ch, cw});
  for (int k = 0; k < c; ++k) {
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) crop.at(k, y, x) = features.at(k, y0 + y, x0 + x) * mask.at(0, y0 + y, x0 + x);
    }
  }
  return RoiPatch{bilinear_resize(crop, kRoiHeight, kRoiWidth), instance_id};
}

RoiPatch masked_roi(const Tensor& features, const InstanceLabelMap& labels, int instance_id) {
  Tensor mask({1, labels.height(), labels.width()});
  for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = labels[i] == instance_id ? 1.0f : 0.0f;
  return masked_roi(features, mask, instance_id);
}

AttentionWeights attention_weights(const WeightStore& w, const std::string& prefix) {
  return {w.get(prefix + ".wq"), w.get(prefix + ".bq"), w.get(prefix + ".wk"), w.get(prefix + ".bk"),
          w.get(prefix + ".wv"), w.get(prefix + ".bv"), w.get(prefix + ".wo"), w.get(prefix + ".bo")};
}

AttentionMemory project_memory(const Tensor& kv, const AttentionWeights& w) {
  if (kv.rank() != 2 || kv.dim(0) == 0) throw_usage("attention memory must be a nonempty [L,E] matrix");
  return {project_rows(kv, w.wk, w.bk), project_rows(kv, w.wv, w.bv)};
}

AttentionOutput attend(std::span<const float> query, const AttentionMemory& memory, const AttentionWeights& w,
                       int heads) {
  const int e = w.wq.dim(0);
  if (heads <= 0 || e % heads != 0) {
    throw_usage("attention width " + std::to_string(e) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  const int l = memory.keys.dim(0), dh = e / heads;
  const std::vector<float> q = matvec(w.wq, query, &w.bq);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<float> context(e, 0.0f);
  std::vector<double> avg(l, 0.0);
  std::vector<double> score(l);
  for (int hd = 0; hd < heads; ++hd) {
    const int off = hd * dh;
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < l; ++i) {
      const float* k = memory.keys.raw() + static_cast<std::size_t>(i) * e + off;
      double s = 0.0;
      for (int j = 0; j < dh; ++j) s += static_cast<double>(q[off + j]) * k[j];
      score[i] = s * scale;
      mx = std::max(mx, score[i]);
    }
    double z = 0.0;
    for (int i = 0; i < l; ++i) {
      score[i] = std::exp(score[i] - mx);
      z += score[i];
    }
    for (int j = 0; j < dh; ++j) {
      double s = 0.0;
      for (int i = 0; i < l; ++i) s += score[i] * memory.values.at(i, off + j);
      context[off + j] = static_cast<float>(s / z);
    }
    for (int i = 0; i < l; ++i) avg[i] += score[i] / z;
  }
  AttentionOutput out{matvec(w.wo, context, &w.bo), std::vector<float>(l)};
  for (int i = 0; i < l; ++i) out.weights[i] = static_cast<float>(avg[i] / heads);
  return out;
}

AttentionOutput multi_head_attention(std::span<const float> query, const Tensor& kv, const AttentionWeights& w,
                                     int heads) {
  return attend(query, project_memory(kv, w), w, heads);
}

Tensor flatten_roi(const RoiPatch& roi) {
  const Tensor& f = roi.features;
  if (f.rank() != 3) throw_usage("RoI features must be [C,H,W]");
  const int c = f.dim(0), l = f.dim(1) * f.dim(2);
  Tensor out({l, c});
  for (int k = 0; k < c; ++k) {
    for (int i = 0; i < l; ++i) out.at(i, k) = f[static_cast<std::size_t>(k) * l + i];
  }
  return out;
}

std::vector<float> start(const RoiPatch& roi, const WeightStore& w, const ModelConfig& cfg, const Charset& charset) {
  check_vocab(cfg, charset);
  const AttentionWeights a1 = attention_weights(w, "rec.attn1");
  const auto q = embedding_row(w.get("rec.sos_embed.weight"), charset.sos());
  return multi_head_attention(q, flatten_roi(roi), a1, cfg.rec_heads).output;
}

DecodeResult decode(const RoiPatch& roi, const WeightStore& w, const ModelConfig& cfg, const Charset& charset,
                    int max_steps, const std::vector<int>* teacher) {
  check_vocab(cfg, charset);
  if (roi.features.rank() != 3 || roi.features.dim(0) != cfg.rec_dim) {
    throw_usage("RoI features " + roi.features.shape_string() + " do not have rec_dim channels");
  }
  const int v = cfg.vocab_size, hidden = cfg.rec_hidden;
  if (teacher) {
    if (teacher->empty()) throw_usage("teacher sequence is empty");
    for (int id : *teacher) {
      if (id < 0 || id >= v) throw_usage("teacher symbol " + std::to_string(id) + " out of range");
    }
  } else if (max_steps <= 0) {
    throw_usage("max_steps must be positive");
  }
  const int steps = teacher ? static_cast<int>(teacher->size()) : max_steps;

  const Tensor kv = flatten_roi(roi);
  const AttentionWeights a1 = attention_weights(w, "rec.attn1");
  const AttentionWeights a2 = attention_weights(w, "rec.attn2");
  const std::vector<float> f_s =
      multi_head_attention(embedding_row(w.get("rec.sos_embed.weight"), charset.sos()), kv, a1, cfg.rec_heads).output;
  const AttentionMemory memory = project_memory(kv, a2);

  const LstmState zero{std::vector<float>(hidden, 0.0f), std::vector<float>(hidden, 0.0f)};
  LstmState s1 = lstm_cell(f_s, zero, w, "rec.lstm1", hidden);
  LstmState s2 = lstm_cell(s1.h, zero, w, "rec.lstm2", hidden);

  const Tensor& embed = w.get("rec.embed.weight");
  const Tensor& fc_w = w.get("rec.fc.weight");
  const Tensor& fc_b = w.get("rec.fc.bias");

  DecodeResult out;
  out.text.stop = teacher ? StopReason::kTeacher : StopReason::kMaxSteps;
  std::vector<float> rows;
  rows.reserve(static_cast<std::size_t>(steps) * v);
  int prev = charset.sos();
  for (int t = 0; t < steps; ++t) {
    s1 = lstm_cell(embedding_row(embed, prev), s1, w, "rec.lstm1", hidden);
    s2 = lstm_cell(s1.h, s2, w, "rec.lstm2", hidden);
    AttentionOutput glimpse = attend(s2.h, memory, a2, cfg.rec_heads);
    std::vector<float> joint(s2.h);
    joint.insert(joint.end(), glimpse.output.begin(), glimpse.output.end());
    const std::vector<float> logits = matvec(fc_w, joint, &fc_b);
    rows.insert(rows.end(), logits.begin(), logits.end());
    out.text.attention.push_back(std::move(glimpse.weights));

    int best = -1;
    for (int k = 0; k < v; ++k) {
      if (k == charset.sos() || k == charset.pad()) continue;
      if (best < 0 || logits[k] > logits[best]) best = k;
    }
    out.text.symbols.push_back(best);
    if (teacher) {
      prev = (*teacher)[t];
    } else {
      if (best == charset.eos()) {
        out.text.stop = StopReason::kEos;
        break;
      }
      prev = best;
    }
  }
  const int t_out = static_cast<int>(rows.size()) / v;
  out.logits = Tensor({t_out, v}, std::move(rows));
  return out;
}

}  // namespace panpp
