#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "molgeom/binary_io.hpp"
#include "molgeom/numerics.hpp"

namespace molgeom {

struct ProjectorConfig {
  std::size_t d_v = 64;  // 2 x encoder width
  std::size_t d_s = 64;
  std::size_t d_h = 64;
  std::size_t d_ff = 256;
  std::size_t heads = 8;
  std::uint64_t seed = 0x5eed0002;

  // d_v 2048, d_h 4096, d_ff 16384, 32 heads.
  static ProjectorConfig full_scale(std::size_t d_s);

  // Throws SchemaError: zero dims, d_h % heads != 0.
  void validate() const;
  std::size_t d_k() const { return d_h / heads; }
};

enum class FusionMode { kCrossAttention, kConcat, kNo3d };

// "cross_attention", "concat", "no3d"; SchemaError otherwise.
FusionMode parse_fusion_mode(const std::string& name);
std::string fusion_mode_name(FusionMode mode);

// Every tensor is a matrix; vectors are 1 x n. Query/key/value weights are
// d_h x d_h with head h owning columns [h*d_k, (h+1)*d_k).
template <typename R>
struct ProjectorParams {
  Matrix<R> w_v, w_s;
  Matrix<R> w_q, w_k, w_vh;
  Matrix<R> w_o, b_o;
  Matrix<R> ln1_gain, ln1_bias;
  Matrix<R> w1, b1, w2, b2;
  Matrix<R> ln2_gain, ln2_bias;
  // Concatenation baseline: (d_v + d_s) x d_h.
  Matrix<R> w_cat, b_cat;

  static ProjectorParams seeded(const ProjectorConfig& cfg);
  static ProjectorParams zeros(const ProjectorConfig& cfg);

  // Stable (name, tensor) listing used for checkpoints and gradient checks.
  std::vector<std::pair<std::string, Matrix<R>*>> named();
  std::vector<std::pair<std::string, const Matrix<R>*>> named() const;

  template <typename U>
  ProjectorParams<U> cast() const;

  // Hash of every value; ties a forward cache to the parameters it used.
  std::uint64_t tag() const;
};

template <typename R>
struct Projected {
  Matrix<R> hv;  // N_v x d_h
  Matrix<R> hs;  // L_max x d_h
};

template <typename R>
Projected<R> project_modalities(const Matrix<R>& hvis, const Matrix<R>& s,
                                const ProjectorParams<R>& p);

template <typename R>
struct AttentionTrace {
  std::vector<Matrix<R>> q, k, v, weights;  // per head; weights N_v x L_max
  Matrix<R> heads;                          // concatenated head outputs, N_v x d_h
  Matrix<R> out;                            // heads W_O + b_O
};

// Masked multi-head cross attention, visual queries over structural keys and
// values, no causal mask. Throws ShapeError or DegenerateMaskError.
template <typename R>
AttentionTrace<R> cross_attention(const Matrix<R>& hv, const Matrix<R>& hs,
                                  std::span<const float> mask, const ProjectorParams<R>& p,
                                  std::size_t heads);

template <typename R>
struct ProjectorCache {
  Matrix<R> hvis, s;
  std::vector<float> mask;
  std::size_t heads = 0;
  Projected<R> proj;
  AttentionTrace<R> attn;
  Matrix<R> x1;  // H_V + MHA
  Matrix<R> hc;  // LN1(x1)
  Matrix<R> f1;  // H_c W_1 + b_1
  Matrix<R> g;   // GELU(f1)
  Matrix<R> x2;  // H_c + FFN
  Matrix<R> out;
  std::uint64_t params_tag = 0;
};

template <typename R>
ProjectorCache<R> projector_forward_cached(const Matrix<R>& hvis, const Matrix<R>& s,
                                           std::span<const float> mask,
                                           const ProjectorParams<R>& p, std::size_t heads);

template <typename R>
Matrix<R> projector_forward(const Matrix<R>& hvis, const Matrix<R>& s,
                            std::span<const float> mask, const ProjectorParams<R>& p,
                            std::size_t heads);

template <typename R>
struct ProjectorGrads {
  ProjectorParams<R> params;  // w_cat and b_cat stay zero
  Matrix<R> hvis;
  Matrix<R> s;
};

// Gradients of a scalar loss given dLoss/dH_fused. CacheMismatchError if
// the upstream shape differs from the cached output or the parameters are
// not the ones the cache was produced with.
template <typename R>
ProjectorGrads<R> projector_backward(const Matrix<R>& upstream, const ProjectorCache<R>& cache,
                                     const ProjectorParams<R>& p);

// Mean of the unmasked structural rows, appended to every visual token, then
// one linear map to d_h.
template <typename R>
Matrix<R> concat_baseline(const Matrix<R>& hvis, const Matrix<R>& s, std::span<const float> mask,
                          const ProjectorParams<R>& p);

// Checkpoint blocks named "projector.<tensor>".
std::vector<io::TensorBlock> projector_blocks(const ProjectorParams<float>& p);
// SchemaError on missing blocks or shapes that disagree with cfg.
ProjectorParams<float> projector_from_blocks(const std::vector<io::TensorBlock>& blocks,
                                             const ProjectorConfig& cfg);

}  // namespace molgeom
