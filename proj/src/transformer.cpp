#include "molgeom/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace molgeom {

namespace {

std::vector<float> seeded_bias(std::size_t n, std::size_t fan_in, std::uint64_t seed) {
  return seeded_params<float>(n, fan_in, seed);
}

}  // namespace

BlockParams make_block(std::size_t d, std::size_t hidden, std::size_t heads, std::uint64_t seed,
                       const std::string& prefix) {
  if (heads == 0 || d % heads != 0) throw ShapeError("width must be divisible by head count");
  const auto s = [&](const char* name) { return derive_seed(seed, prefix + name); };
  BlockParams p;
  p.ln1_gain.assign(d, 1.0f);
  p.ln1_bias.assign(d, 0.0f);
  p.ln2_gain.assign(d, 1.0f);
  p.ln2_bias.assign(d, 0.0f);
  p.attn.heads = heads;
  p.attn.wq = seeded_matrix<float>(d, d, s(".wq"));
  p.attn.wk = seeded_matrix<float>(d, d, s(".wk"));
  p.attn.wv = seeded_matrix<float>(d, d, s(".wv"));
  p.attn.wo = seeded_matrix<float>(d, d, s(".wo"));
  p.attn.bq = seeded_bias(d, d, s(".bq"));
  p.attn.bk = seeded_bias(d, d, s(".bk"));
  p.attn.bv = seeded_bias(d, d, s(".bv"));
  p.attn.bo = seeded_bias(d, d, s(".bo"));
  p.mlp.w1 = seeded_matrix<float>(d, hidden, s(".w1"));
  p.mlp.b1 = seeded_bias(hidden, d, s(".b1"));
  p.mlp.w2 = seeded_matrix<float>(hidden, d, s(".w2"));
  p.mlp.b2 = seeded_bias(d, hidden, s(".b2"));
  return p;
}

namespace {

TokenMatrix linear(const TokenMatrix& x, const TokenMatrix& w, std::span<const float> b) {
  TokenMatrix y = matmul(x, w);
  add_row_inplace(y, b);
  return y;
}

}  // namespace

TokenMatrix self_attention(const TokenMatrix& x, const AttentionParams& p,
                           std::span<const float> key_mask, bool causal) {
  const std::size_t n = x.rows();
  const std::size_t d = p.wq.cols();
  if (!key_mask.empty() && key_mask.size() != n) {
    throw ShapeError("key mask length differs from token count");
  }
  const std::size_t dk = d / p.heads;
  const TokenMatrix q = linear(x, p.wq, p.bq);
  const TokenMatrix k = linear(x, p.wk, p.bk);
  const TokenMatrix v = linear(x, p.wv, p.bv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  TokenMatrix heads_out(n, d);
  std::vector<double> weights(n);
  std::vector<double> acc(dk);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const std::size_t off = h * dk;
    for (std::size_t i = 0; i < n; ++i) {
      double max_v = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dk; ++c) {
          s += static_cast<double>(q(i, off + c)) * static_cast<double>(k(j, off + c));
        }
        s = s * scale;
        if (!key_mask.empty()) s += key_mask[j];
        if (causal && j > i) s += kMaskNegInf;
        weights[j] = s;
        max_v = std::max(max_v, s);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        weights[j] = std::exp(weights[j] - max_v);
        sum += weights[j];
      }
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const double a = static_cast<float>(weights[j] / sum);
        if (a == 0.0) continue;
        for (std::size_t c = 0; c < dk; ++c) acc[c] += a * static_cast<double>(v(j, off + c));
      }
      for (std::size_t c = 0; c < dk; ++c) heads_out(i, off + c) = static_cast<float>(acc[c]);
    }
  }
  return linear(heads_out, p.wo, p.bo);
}

TokenMatrix mlp_forward(const TokenMatrix& x, const MlpParams& p) {
  return linear(gelu(linear(x, p.w1, p.b1)), p.w2, p.b2);
}

TokenMatrix prenorm_block(const TokenMatrix& x, const BlockParams& p,
                          std::span<const float> key_mask, bool causal) {
  TokenMatrix h = x;
  add_inplace(h, self_attention(layer_norm(h, std::span<const float>(p.ln1_gain),
                                           std::span<const float>(p.ln1_bias)),
                                p.attn, key_mask, causal));
  add_inplace(h, mlp_forward(layer_norm(h, std::span<const float>(p.ln2_gain),
                                        std::span<const float>(p.ln2_bias)),
                             p.mlp));
  return h;
}

}  // namespace molgeom
