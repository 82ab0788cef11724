// SPDX-License-Identifier: Apache-2.0
#include "panpp/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "panpp/error.hpp"

namespace panpp {

namespace {

std::size_t checked_volume(const std::vector<int>& dims) {
  std::size_t n = 1;
  for (int d : dims) {
    if (d <= 0) throw_data("tensor dims must be positive, got " + std::to_string(d));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

Tensor::Tensor(std::vector<int> dims, float fill) : dims_(std::move(dims)) {
  if (dims_.empty()) throw_data("tensor rank must be at least 1");
  data_.assign(checked_volume(dims_), fill);
}

Tensor::Tensor(std::vector<int> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (dims_.empty()) throw_data("tensor rank must be at least 1");
  if (checked_volume(dims_) != data_.size()) {
    throw_data("tensor data length " + std::to_string(data_.size()) +
               " does not match dims " + shape_string());
  }
}

int Tensor::dim(int i) const {
  if (i < 0 || i >= rank()) throw_usage("tensor dim index out of range");
  return dims_[i];
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ']';
  return os.str();
}

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op) {
  if (!a.same_shape(b)) {
    throw_usage("elementwise dim mismatch: " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor out(a.dims());
  auto x = a.data();
  auto y = b.data();
  auto z = out.data();
  if (op == ElementwiseOp::kAdd) {
    std::transform(x.begin(), x.end(), y.begin(), z.begin(), std::plus<float>());
  } else {
    std::transform(x.begin(), x.end(), y.begin(), z.begin(), std::multiplies<float>());
  }
  return out;
}

Tensor bilinear_resize(const Tensor& src, int out_h, int out_w) {
  if (src.rank() != 3) throw_usage("bilinear_resize expects [C,H,W], got " + src.shape_string());
  if (out_h < 1 || out_w < 1) throw_usage("bilinear_resize target size must be positive");
  const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
  if (h == out_h && w == out_w) return src;

  struct Tap {
    int lo, hi;
    double frac;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      double s = (i + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const int lo = static_cast<int>(std::floor(s));
      t[i] = {lo, std::min(lo + 1, in - 1), s - lo};
    }
    return t;
  };
  const auto ty = taps(h, out_h);
  const auto tx = taps(w, out_w);

  Tensor out({c, out_h, out_w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < out_h; ++y) {
      const Tap& ay = ty[y];
      for (int x = 0; x < out_w; ++x) {
        const Tap& ax = tx[x];
        // Difference form keeps constant regions exact.
        const double v00 = src.at(ch, ay.lo, ax.lo), v01 = src.at(ch, ay.lo, ax.hi);
        const double v10 = src.at(ch, ay.hi, ax.lo), v11 = src.at(ch, ay.hi, ax.hi);
        const double top = v00 + ax.frac * (v01 - v00);
        const double bottom = v10 + ax.frac * (v11 - v10);
        out.at(ch, y, x) = static_cast<float>(top + ay.frac * (bottom - top));
      }
    }
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw_usage("softmax_rows expects [R,C], got " + x.shape_string());
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor out(x.dims());
  std::vector<double> e(cols);
  for (int r = 0; r < rows; ++r) {
    double m = x.at(r, 0);
    for (int c = 1; c < cols; ++c) m = std::max(m, static_cast<double>(x.at(r, c)));
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      e[c] = std::exp(static_cast<double>(x.at(r, c)) - m);
      sum += e[c];
    }
    for (int c = 0; c < cols; ++c) out.at(r, c) = static_cast<float>(e[c] / sum);
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> maps) {
  if (maps.empty()) throw_usage("concat_channels needs at least one map");
  const int h = maps[0].dim(1), w = maps[0].dim(2);
  int c = 0;
  for (const auto& m : maps) {
    if (m.rank() != 3 || m.dim(1) != h || m.dim(2) != w) {
      throw_usage("concat_channels spatial mismatch: " + m.shape_string());
    }
    c += m.dim(0);
  }
  Tensor out({c, h, w});
  float* dst = out.raw();
  for (const auto& m : maps) dst = std::copy(m.data().begin(), m.data().end(), dst);
  return out;
}

std::vector<unsigned char> encode_ptm(const Tensor& t) {
  std::vector<unsigned char> out;
  out.reserve(8 + 4 * t.dims().size() + 4 * t.size());
  for (char ch : {'P', 'T', 'M', '1'}) out.push_back(static_cast<unsigned char>(ch));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (int d : t.dims()) put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_ptm(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "PTM1", 4) != 0) {
    throw_data("PTM: bad magic");
  }
  const std::uint32_t rank = get_u32(bytes.data() + 4);
  if (rank == 0) throw_data("PTM: rank 0");
  if (rank > 16) throw_data("PTM: rank " + std::to_string(rank) + " unsupported");
  if (bytes.size() < 8 + 4ull * rank) throw_data("PTM: truncated header");
  std::vector<int> dims(rank);
  std::size_t volume = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = get_u32(bytes.data() + 8 + 4 * i);
    if (d == 0 || d > (1u << 30)) throw_data("PTM: invalid dim " + std::to_string(d));
    dims[i] = static_cast<int>(d);
    volume *= d;
  }
  const std::size_t offset = 8 + 4ull * rank;
  if (bytes.size() - offset < 4 * volume) throw_data("PTM: truncated payload");
  std::vector<float> data(volume);
  for (std::size_t i = 0; i < volume; ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes.data() + offset + 4 * i));
  }
  return Tensor(std::move(dims), std::move(data));
}

Tensor read_ptm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_ptm(bytes);
  } catch (const Error& e) {
    throw_data(path.string() + ": " + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw_io("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw_io("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw_io("rename to " + path.string() + " failed: " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

void write_ptm(const std::filesystem::path& path, const Tensor& t) {
  write_file_atomic(path, encode_ptm(t));
}

}  // namespace panpp
