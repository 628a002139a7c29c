#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "molgeom/errors.hpp"

namespace molgeom {

// Additive padding sentinel. Finite, so masked softmax never sees inf - inf.
inline constexpr double kMaskNegInf = -1e9;

// Mask entries at or below this value count as padding.
inline constexpr double kMaskedThreshold = 0.5 * kMaskNegInf;

inline bool is_masked(double mask_value) { return mask_value <= kMaskedThreshold; }

// Dense row-major matrix. Rows are tokens, columns are channels.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data has " + std::to_string(data_.size()) + " values for " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using TokenMatrix = Matrix<float>;

// h x w x c feature map, channel-fastest.
template <typename T>
struct Grid {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(std::size_t h_, std::size_t w_, std::size_t c_, T fill = T{0})
      : h(h_), w(w_), c(c_), data(h_ * w_ * c_, fill) {}

  T& at(std::size_t y, std::size_t x, std::size_t ch) { return data[(y * w + x) * c + ch]; }
  const T& at(std::size_t y, std::size_t x, std::size_t ch) const {
    return data[(y * w + x) * c + ch];
  }

  bool operator==(const Grid&) const = default;
};

// Row-major tokens <-> square grid. Token index = y * side + x.
template <typename T>
Grid<T> tokens_to_grid(const Matrix<T>& tokens, std::size_t side) {
  if (side * side != tokens.rows()) {
    throw ShapeError(std::to_string(tokens.rows()) + " tokens do not form a " +
                     std::to_string(side) + "x" + std::to_string(side) + " grid");
  }
  Grid<T> g(side, side, tokens.cols());
  g.data = tokens.data();
  return g;
}

template <typename T>
Matrix<T> grid_to_tokens(const Grid<T>& g) {
  return Matrix<T>(g.h * g.w, g.c, g.data);
}

// Integer square root; throws ShapeError unless n is a perfect square.
std::size_t exact_sqrt(std::size_t n);

// --- seeded parameters ------------------------------------------------------

// Counter-based generator: value k of stream `seed` is splitmix64(seed, k).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double next_unit();
  // Uniform in [-bound, bound).
  double next_symmetric(double bound) { return (2.0 * next_unit() - 1.0) * bound; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Stable per-tensor seed from a base seed and a parameter name.
std::uint64_t derive_seed(std::uint64_t base, std::string_view name);

// count values uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
std::vector<T> seeded_params(std::size_t count, std::size_t fan_in, std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  CounterRng rng(seed);
  std::vector<T> out(count);
  for (auto& v : out) v = static_cast<T>(rng.next_symmetric(bound));
  return out;
}

// rows x cols weight with fan_in = rows (inputs multiply from the left).
template <typename T>
Matrix<T> seeded_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  return Matrix<T>(rows, cols, seeded_params<T>(rows * cols, rows, seed));
}

// --- dense kernels ------------------------------------------------------------
// Products accumulate in double in a fixed order, so results do not depend on
// anything but the operands.

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix<T> out(a.rows(), b.cols());
  std::vector<double> acc(b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const T* brow = b.row(k).data();
      for (std::size_t j = 0; j < b.cols(); ++j) acc[j] += aik * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) = static_cast<T>(acc[j]);
  }
  return out;
}

// a * b^T
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  Matrix<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto br = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) {
        acc += static_cast<double>(ar[k]) * static_cast<double>(br[k]);
      }
      out(i, j) = static_cast<T>(acc);
    }
  }
  return out;
}

// a^T * b
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
  std::vector<double> acc(a.cols() * b.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto ar = a.row(r);
    const auto br = b.row(r);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ari = ar[i];
      if (ari == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) acc[i * b.cols() + j] += ari * br[j];
    }
  }
  Matrix<T> out(a.cols(), b.cols());
  for (std::size_t i = 0; i < acc.size(); ++i) out.data()[i] = static_cast<T>(acc[i]);
  return out;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename T>
void add_inplace(Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: shapes differ");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

template <typename T>
Matrix<T> add(Matrix<T> a, const Matrix<T>& b) {
  add_inplace(a, b);
  return a;
}

template <typename T>
void add_row_inplace(Matrix<T>& a, std::span<const T> bias) {
  if (bias.size() != a.cols()) throw ShapeError("bias length differs from column count");
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) += bias[j];
}

// Column sums (gradient of a broadcast row bias).
template <typename T>
std::vector<T> column_sums(const Matrix<T>& a) {
  std::vector<double> acc(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) acc[j] += a(i, j);
  return std::vector<T>(acc.begin(), acc.end());
}

// Columns [begin, begin + count).
template <typename T>
Matrix<T> slice_cols(const Matrix<T>& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) throw ShapeError("slice_cols out of range");
  Matrix<T> out(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, begin + j);
  return out;
}

template <typename T>
void set_cols(Matrix<T>& dst, std::size_t begin, const Matrix<T>& src) {
  if (src.rows() != dst.rows() || begin + src.cols() > dst.cols()) {
    throw ShapeError("set_cols out of range");
  }
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(i, begin + j) = src(i, j);
}

template <typename T>
Matrix<T> concat_cols(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  Matrix<T> out(a.rows(), a.cols() + b.cols());
  set_cols(out, 0, a);
  set_cols(out, a.cols(), b);
  return out;
}

template <typename T>
Matrix<T> concat_rows(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols() && a.rows() != 0 && b.rows() != 0) {
    throw ShapeError("concat_rows: column counts differ");
  }
  const std::size_t cols = a.rows() ? a.cols() : b.cols();
  std::vector<T> data = a.data();
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Matrix<T>(a.rows() + b.rows(), cols, std::move(data));
}

// Row-wise softmax of (logits + mask) with max subtraction. Masked columns
// get exactly zero weight for the finite sentinel. Throws DegenerateMaskError
// when every column is masked.
template <typename T, typename M>
Matrix<T> softmax_last_masked(const Matrix<T>& logits, std::span<const M> mask) {
  if (mask.size() != logits.cols()) {
    throw ShapeError("mask length " + std::to_string(mask.size()) + " differs from " +
                     std::to_string(logits.cols()) + " columns");
  }
  bool any_open = false;
  for (const M m : mask) any_open = any_open || !is_masked(static_cast<double>(m));
  if (!any_open && !mask.empty()) throw DegenerateMaskError("every column is masked");

  Matrix<T> out(logits.rows(), logits.cols());
  std::vector<double> shifted(logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double max_v = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      shifted[j] = static_cast<double>(logits(i, j)) + static_cast<double>(mask[j]);
      max_v = std::max(max_v, shifted[j]);
    }
    double sum = 0.0;
    for (auto& v : shifted) {
      v = std::exp(v - max_v);
      sum += v;
    }
    for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) = static_cast<T>(shifted[j] / sum);
  }
  return out;
}

template <typename T>
Matrix<T> softmax_last(const Matrix<T>& logits) {
  const std::vector<T> open(logits.cols(), T{0});
  return softmax_last_masked(logits, std::span<const T>(open));
}

// d logits given attention weights p and upstream dp (row-wise softmax
// Jacobian). Masked columns have p == 0 and therefore receive exactly 0.
template <typename T>
Matrix<T> softmax_backward(const Matrix<T>& p, const Matrix<T>& dp) {
  Matrix<T> out(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) dot += static_cast<double>(p(i, j)) * dp(i, j);
    for (std::size_t j = 0; j < p.cols(); ++j) {
      out(i, j) = static_cast<T>(static_cast<double>(p(i, j)) * (dp(i, j) - dot));
    }
  }
  return out;
}

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, std::span<const T> gain, std::span<const T> bias,
                     double eps = kLayerNormEps) {
  if (gain.size() != x.cols() || bias.size() != x.cols()) {
    throw ShapeError("layer_norm: gain/bias length differs from column count");
  }
  Matrix<T> out(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mean = 0.0;
    for (const T v : x.row(i)) mean += v;
    mean /= n;
    double var = 0.0;
    for (const T v : x.row(i)) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      out(i, j) = static_cast<T>((x(i, j) - mean) * inv * gain[j] + bias[j]);
    }
  }
  return out;
}

template <typename T>
struct LayerNormGrads {
  Matrix<T> dx;
  std::vector<T> dgain;
  std::vector<T> dbias;
};

template <typename T>
LayerNormGrads<T> layer_norm_backward(const Matrix<T>& x, std::span<const T> gain,
                                      const Matrix<T>& dy, double eps = kLayerNormEps) {
  LayerNormGrads<T> g{Matrix<T>(x.rows(), x.cols()), {}, {}};
  std::vector<double> dgain(x.cols(), 0.0);
  std::vector<double> dbias(x.cols(), 0.0);
  std::vector<double> xhat(x.cols());
  const double n = static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mean = 0.0;
    for (const T v : x.row(i)) mean += v;
    mean /= n;
    double var = 0.0;
    for (const T v : x.row(i)) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      xhat[j] = (x(i, j) - mean) * inv;
      const double dxhat = static_cast<double>(dy(i, j)) * gain[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat[j];
      dgain[j] += static_cast<double>(dy(i, j)) * xhat[j];
      dbias[j] += dy(i, j);
    }
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double dxhat = static_cast<double>(dy(i, j)) * gain[j];
      g.dx(i, j) = static_cast<T>(inv * (dxhat - sum_dxhat / n - xhat[j] * sum_dxhat_xhat / n));
    }
  }
  g.dgain.assign(dgain.begin(), dgain.end());
  g.dbias.assign(dbias.begin(), dbias.end());
  return g;
}

// Exact GELU: x * Phi(x).
double gelu(double x);
double gelu_grad(double x);
double normal_cdf(double x);

template <typename T>
Matrix<T> gelu(const Matrix<T>& x) {
  Matrix<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = static_cast<T>(gelu(x.data()[i]));
  return out;
}

template <typename T>
Grid<T> gelu(const Grid<T>& g) {
  Grid<T> out = g;
  for (auto& v : out.data) v = static_cast<T>(gelu(v));
  return out;
}

// --- convolution and windows ------------------------------------------------

// c_out x c_in x 3 x 3 weights, laid out [o][i][ky][kx].
template <typename T>
struct ConvKernel {
  std::size_t c_out = 0;
  std::size_t c_in = 0;
  std::vector<T> weights;
  std::vector<T> bias;

  T& w(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
    return weights[((o * c_in + i) * 3 + ky) * 3 + kx];
  }
  const T& w(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
    return weights[((o * c_in + i) * 3 + ky) * 3 + kx];
  }
};

// Output extent of a 3x3 stride-2 padding-1 convolution: ceil(n / 2).
inline constexpr std::size_t conv_s2_extent(std::size_t n) { return (n + 2 - 3) / 2 + 1; }

template <typename T>
Grid<T> conv3x3_s2(const Grid<T>& g, const ConvKernel<T>& k) {
  if (k.c_in != g.c) {
    throw ShapeError("conv3x3_s2: kernel expects " + std::to_string(k.c_in) +
                     " input channels, grid has " + std::to_string(g.c));
  }
  if (k.weights.size() != k.c_out * k.c_in * 9 || k.bias.size() != k.c_out) {
    throw ShapeError("conv3x3_s2: kernel storage does not match its shape");
  }
  const std::size_t oh = conv_s2_extent(g.h);
  const std::size_t ow = conv_s2_extent(g.w);
  Grid<T> out(oh, ow, k.c_out);
  std::vector<double> acc(k.c_out);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      for (std::size_t o = 0; o < k.c_out; ++o) acc[o] = k.bias[o];
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const long iy = static_cast<long>(2 * y + ky) - 1;
        if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const long ix = static_cast<long>(2 * x + kx) - 1;
          if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
          const T* pixel = &g.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), 0);
          for (std::size_t o = 0; o < k.c_out; ++o) {
            double s = 0.0;
            for (std::size_t i = 0; i < k.c_in; ++i) s += static_cast<double>(k.w(o, i, ky, kx)) * pixel[i];
            acc[o] += s;
          }
        }
      }
      for (std::size_t o = 0; o < k.c_out; ++o) out.at(y, x, o) = static_cast<T>(acc[o]);
    }
  }
  return out;
}

template <typename T>
struct WindowPartition {
  std::vector<Grid<T>> windows;  // row-major over the window grid
  std::size_t window = 0;
  std::size_t height = 0;  // original extents
  std::size_t width = 0;
  std::size_t padded_height = 0;
  std::size_t padded_width = 0;

  std::size_t windows_per_row() const { return padded_width / window; }
};

inline constexpr std::size_t round_up(std::size_t n, std::size_t multiple) {
  return (n + multiple - 1) / multiple * multiple;
}

// Zero-pads to multiples of window_size and splits into non-overlapping
// window_size x window_size tiles.
template <typename T>
WindowPartition<T> window_partition(const Grid<T>& g, std::size_t window_size) {
  if (window_size == 0) throw ShapeError("window size must be >= 1");
  WindowPartition<T> p;
  p.window = window_size;
  p.height = g.h;
  p.width = g.w;
  p.padded_height = round_up(g.h, window_size);
  p.padded_width = round_up(g.w, window_size);
  for (std::size_t wy = 0; wy < p.padded_height; wy += window_size) {
    for (std::size_t wx = 0; wx < p.padded_width; wx += window_size) {
      Grid<T> tile(window_size, window_size, g.c);
      for (std::size_t y = 0; y < window_size; ++y) {
        for (std::size_t x = 0; x < window_size; ++x) {
          if (wy + y >= g.h || wx + x >= g.w) continue;
          for (std::size_t ch = 0; ch < g.c; ++ch) tile.at(y, x, ch) = g.at(wy + y, wx + x, ch);
        }
      }
      p.windows.push_back(std::move(tile));
    }
  }
  return p;
}

// Inverse of window_partition: stitches windows and crops the padding.
template <typename T>
Grid<T> window_reverse(const WindowPartition<T>& p) {
  const std::size_t channels = p.windows.empty() ? 0 : p.windows.front().c;
  Grid<T> out(p.height, p.width, channels);
  const std::size_t per_row = p.windows_per_row();
  for (std::size_t n = 0; n < p.windows.size(); ++n) {
    const std::size_t wy = (n / per_row) * p.window;
    const std::size_t wx = (n % per_row) * p.window;
    for (std::size_t y = 0; y < p.window; ++y) {
      for (std::size_t x = 0; x < p.window; ++x) {
        if (wy + y >= p.height || wx + x >= p.width) continue;
        for (std::size_t ch = 0; ch < channels; ++ch) {
          out.at(wy + y, wx + x, ch) = p.windows[n].at(y, x, ch);
        }
      }
    }
  }
  return out;
}

// FNV-1a over the raw bytes of a float buffer; used for audit checksums.
std::uint64_t checksum(std::span<const float> values);

}  // namespace molgeom
