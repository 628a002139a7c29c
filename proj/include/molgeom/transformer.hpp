#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "molgeom/numerics.hpp"

namespace molgeom {

struct AttentionParams {
  std::size_t heads = 1;
  TokenMatrix wq, wk, wv, wo;  // d x d; head h owns columns [h*d_k, (h+1)*d_k)
  std::vector<float> bq, bk, bv, bo;
};

struct MlpParams {
  TokenMatrix w1;  // d x hidden
  std::vector<float> b1;
  TokenMatrix w2;  // hidden x d
  std::vector<float> b2;
};

// Pre-norm block: x + Attn(LN1(x)), then + MLP(LN2(x)).
struct BlockParams {
  std::vector<float> ln1_gain, ln1_bias;
  AttentionParams attn;
  std::vector<float> ln2_gain, ln2_bias;
  MlpParams mlp;
};

// Seeded block of width d with MLP hidden width `hidden`. Every tensor seed is
// derived from (seed, prefix + tensor name).
BlockParams make_block(std::size_t d, std::size_t hidden, std::size_t heads, std::uint64_t seed,
                       const std::string& prefix);

// Multi-head self attention over x. key_mask (optional, length x.rows())
// is additive; causal masks columns after the query row.
TokenMatrix self_attention(const TokenMatrix& x, const AttentionParams& p,
                           std::span<const float> key_mask = {}, bool causal = false);

TokenMatrix mlp_forward(const TokenMatrix& x, const MlpParams& p);

TokenMatrix prenorm_block(const TokenMatrix& x, const BlockParams& p,
                          std::span<const float> key_mask = {}, bool causal = false);

}  // namespace molgeom
