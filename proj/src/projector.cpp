#include "molgeom/projector.hpp"

#include <cstring>
#include <map>

#include "molgeom/errors.hpp"

namespace molgeom {

ProjectorConfig ProjectorConfig::full_scale(std::size_t d_s) {
  ProjectorConfig cfg;
  cfg.d_v = 2048;
  cfg.d_s = d_s;
  cfg.d_h = 4096;
  cfg.d_ff = 4 * 4096;
  cfg.heads = 32;
  return cfg;
}

void ProjectorConfig::validate() const {
  if (d_v == 0 || d_s == 0 || d_h == 0 || d_ff == 0 || heads == 0) {
    throw SchemaError("projector: all dimensions must be >= 1");
  }
  if (d_h % heads != 0) {
    throw SchemaError("projector: d_h " + std::to_string(d_h) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "cross_attention") return FusionMode::kCrossAttention;
  if (name == "concat") return FusionMode::kConcat;
  if (name == "no3d") return FusionMode::kNo3d;
  throw SchemaError("unknown fusion mode '" + name + "'");
}

std::string fusion_mode_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::kCrossAttention: return "cross_attention";
    case FusionMode::kConcat: return "concat";
    case FusionMode::kNo3d: return "no3d";
  }
  return "?";
}

namespace {

template <typename R>
Matrix<R> row_vector(std::size_t n, R fill) {
  return Matrix<R>(1, n, fill);
}

template <typename R>
std::span<const R> as_span(const Matrix<R>& m) {
  return {m.data().data(), m.size()};
}

template <typename R>
Matrix<R> affine(const Matrix<R>& x, const Matrix<R>& w, const Matrix<R>& b) {
  Matrix<R> y = matmul(x, w);
  add_row_inplace(y, as_span(b));
  return y;
}

template <typename R>
Matrix<R> column_sum_row(const Matrix<R>& a) {
  const std::vector<R> sums = column_sums(a);
  return Matrix<R>(1, sums.size(), sums);
}

}  // namespace

template <typename R>
ProjectorParams<R> ProjectorParams<R>::seeded(const ProjectorConfig& cfg) {
  cfg.validate();
  const auto s = [&](const char* name) { return derive_seed(cfg.seed, name); };
  const auto bias = [&](std::size_t n, std::size_t fan_in, const char* name) {
    return Matrix<R>(1, n, seeded_params<R>(n, fan_in, s(name)));
  };
  ProjectorParams p;
  p.w_v = seeded_matrix<R>(cfg.d_v, cfg.d_h, s("w_v"));
  p.w_s = seeded_matrix<R>(cfg.d_s, cfg.d_h, s("w_s"));
  p.w_q = seeded_matrix<R>(cfg.d_h, cfg.d_h, s("w_q"));
  p.w_k = seeded_matrix<R>(cfg.d_h, cfg.d_h, s("w_k"));
  p.w_vh = seeded_matrix<R>(cfg.d_h, cfg.d_h, s("w_vh"));
  p.w_o = seeded_matrix<R>(cfg.d_h, cfg.d_h, s("w_o"));
  p.b_o = bias(cfg.d_h, cfg.d_h, "b_o");
  p.ln1_gain = row_vector<R>(cfg.d_h, R{1});
  p.ln1_bias = row_vector<R>(cfg.d_h, R{0});
  p.w1 = seeded_matrix<R>(cfg.d_h, cfg.d_ff, s("w1"));
  p.b1 = bias(cfg.d_ff, cfg.d_h, "b1");
  p.w2 = seeded_matrix<R>(cfg.d_ff, cfg.d_h, s("w2"));
  p.b2 = bias(cfg.d_h, cfg.d_ff, "b2");
  p.ln2_gain = row_vector<R>(cfg.d_h, R{1});
  p.ln2_bias = row_vector<R>(cfg.d_h, R{0});
  p.w_cat = seeded_matrix<R>(cfg.d_v + cfg.d_s, cfg.d_h, s("w_cat"));
  p.b_cat = bias(cfg.d_h, cfg.d_v + cfg.d_s, "b_cat");
  return p;
}

template <typename R>
ProjectorParams<R> ProjectorParams<R>::zeros(const ProjectorConfig& cfg) {
  cfg.validate();
  ProjectorParams p;
  p.w_v = Matrix<R>(cfg.d_v, cfg.d_h);
  p.w_s = Matrix<R>(cfg.d_s, cfg.d_h);
  p.w_q = Matrix<R>(cfg.d_h, cfg.d_h);
  p.w_k = Matrix<R>(cfg.d_h, cfg.d_h);
  p.w_vh = Matrix<R>(cfg.d_h, cfg.d_h);
  p.w_o = Matrix<R>(cfg.d_h, cfg.d_h);
  p.b_o = row_vector<R>(cfg.d_h, R{0});
  p.ln1_gain = row_vector<R>(cfg.d_h, R{0});
  p.ln1_bias = row_vector<R>(cfg.d_h, R{0});
  p.w1 = Matrix<R>(cfg.d_h, cfg.d_ff);
  p.b1 = row_vector<R>(cfg.d_ff, R{0});
  p.w2 = Matrix<R>(cfg.d_ff, cfg.d_h);
  p.b2 = row_vector<R>(cfg.d_h, R{0});
  p.ln2_gain = row_vector<R>(cfg.d_h, R{0});
  p.ln2_bias = row_vector<R>(cfg.d_h, R{0});
  p.w_cat = Matrix<R>(cfg.d_v + cfg.d_s, cfg.d_h);
  p.b_cat = row_vector<R>(cfg.d_h, R{0});
  return p;
}

template <typename R>
std::vector<std::pair<std::string, Matrix<R>*>> ProjectorParams<R>::named() {
  return {{"w_v", &w_v},       {"w_s", &w_s},           {"w_q", &w_q},
          {"w_k", &w_k},       {"w_vh", &w_vh},         {"w_o", &w_o},
          {"b_o", &b_o},       {"ln1_gain", &ln1_gain}, {"ln1_bias", &ln1_bias},
          {"w1", &w1},         {"b1", &b1},             {"w2", &w2},
          {"b2", &b2},         {"ln2_gain", &ln2_gain}, {"ln2_bias", &ln2_bias},
          {"w_cat", &w_cat},   {"b_cat", &b_cat}};
}

template <typename R>
std::vector<std::pair<std::string, const Matrix<R>*>> ProjectorParams<R>::named() const {
  std::vector<std::pair<std::string, const Matrix<R>*>> out;
  for (auto& [name, m] : const_cast<ProjectorParams*>(this)->named()) out.emplace_back(name, m);
  return out;
}

template <typename R>
template <typename U>
ProjectorParams<U> ProjectorParams<R>::cast() const {
  ProjectorParams<U> out;
  const auto src = named();
  const auto dst = out.named();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
  return out;
}

template <typename R>
std::uint64_t ProjectorParams<R>::tag() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, m] : named()) {
    h = splitmix64(h ^ (m->rows() * 0x9E3779B97F4A7C15ULL) ^ m->cols());
    for (const R v : m->data()) {
      const double d = static_cast<double>(v);
      std::uint64_t bits;
      std::memcpy(&bits, &d, sizeof bits);
      h = (h ^ bits) * 0x100000001b3ULL;
      h ^= h >> 29;
    }
  }
  return splitmix64(h);
}

template <typename R>
Projected<R> project_modalities(const Matrix<R>& hvis, const Matrix<R>& s,
                                const ProjectorParams<R>& p) {
  if (hvis.cols() != p.w_v.rows()) {
    throw ShapeError("H_vis has " + std::to_string(hvis.cols()) + " channels, W_V expects " +
                     std::to_string(p.w_v.rows()));
  }
  if (s.cols() != p.w_s.rows()) {
    throw ShapeError("S has " + std::to_string(s.cols()) + " channels, W_S expects " +
                     std::to_string(p.w_s.rows()));
  }
  return {matmul(hvis, p.w_v), matmul(s, p.w_s)};
}

template <typename R>
AttentionTrace<R> cross_attention(const Matrix<R>& hv, const Matrix<R>& hs,
                                  std::span<const float> mask, const ProjectorParams<R>& p,
                                  std::size_t heads) {
  const std::size_t d_h = p.w_q.rows();
  if (heads == 0 || d_h % heads != 0) throw ShapeError("d_h is not divisible by the head count");
  if (hv.cols() != d_h || hs.cols() != d_h) throw ShapeError("cross_attention: width differs from d_h");
  if (mask.size() != hs.rows()) {
    throw ShapeError("mask length " + std::to_string(mask.size()) + " differs from L_max " +
                     std::to_string(hs.rows()));
  }
  const std::size_t dk = d_h / heads;
  const R scale = static_cast<R>(1.0 / std::sqrt(static_cast<double>(dk)));
  const Matrix<R> q = matmul(hv, p.w_q);
  const Matrix<R> k = matmul(hs, p.w_k);
  const Matrix<R> v = matmul(hs, p.w_vh);

  AttentionTrace<R> t;
  t.heads = Matrix<R>(hv.rows(), d_h);
  for (std::size_t h = 0; h < heads; ++h) {
    t.q.push_back(slice_cols(q, h * dk, dk));
    t.k.push_back(slice_cols(k, h * dk, dk));
    t.v.push_back(slice_cols(v, h * dk, dk));
    Matrix<R> scores = matmul_nt(t.q.back(), t.k.back());
    for (R& x : scores.data()) x *= scale;
    t.weights.push_back(softmax_last_masked(scores, mask));
    set_cols(t.heads, h * dk, matmul(t.weights.back(), t.v.back()));
  }
  t.out = affine(t.heads, p.w_o, p.b_o);
  return t;
}

namespace {

template <typename R>
ProjectorCache<R> forward_untagged(const Matrix<R>& hvis, const Matrix<R>& s,
                                   std::span<const float> mask, const ProjectorParams<R>& p,
                                   std::size_t heads) {
  ProjectorCache<R> c;
  c.hvis = hvis;
  c.s = s;
  c.mask.assign(mask.begin(), mask.end());
  c.heads = heads;
  c.proj = project_modalities(hvis, s, p);
  c.attn = cross_attention(c.proj.hv, c.proj.hs, mask, p, heads);
  c.x1 = add(c.proj.hv, c.attn.out);
  c.hc = layer_norm(c.x1, as_span(p.ln1_gain), as_span(p.ln1_bias));
  c.f1 = affine(c.hc, p.w1, p.b1);
  c.g = gelu(c.f1);
  c.x2 = add(c.hc, affine(c.g, p.w2, p.b2));
  c.out = layer_norm(c.x2, as_span(p.ln2_gain), as_span(p.ln2_bias));
  return c;
}

}  // namespace

template <typename R>
ProjectorCache<R> projector_forward_cached(const Matrix<R>& hvis, const Matrix<R>& s,
                                           std::span<const float> mask,
                                           const ProjectorParams<R>& p, std::size_t heads) {
  ProjectorCache<R> c = forward_untagged(hvis, s, mask, p, heads);
  c.params_tag = p.tag();
  return c;
}

template <typename R>
Matrix<R> projector_forward(const Matrix<R>& hvis, const Matrix<R>& s, std::span<const float> mask,
                            const ProjectorParams<R>& p, std::size_t heads) {
  return forward_untagged(hvis, s, mask, p, heads).out;
}

template <typename R>
ProjectorGrads<R> projector_backward(const Matrix<R>& upstream, const ProjectorCache<R>& c,
                                     const ProjectorParams<R>& p) {
  if (upstream.rows() != c.out.rows() || upstream.cols() != c.out.cols()) {
    throw CacheMismatchError("upstream gradient is " + std::to_string(upstream.rows()) + "x" +
                             std::to_string(upstream.cols()) + ", cached output is " +
                             std::to_string(c.out.rows()) + "x" + std::to_string(c.out.cols()));
  }
  if (p.tag() != c.params_tag) {
    throw CacheMismatchError("parameters differ from the ones the cache was built with");
  }
  ProjectorGrads<R> g;
  ProjectorParams<R>& gp = g.params;
  gp.w_cat = Matrix<R>(p.w_cat.rows(), p.w_cat.cols());
  gp.b_cat = Matrix<R>(1, p.b_cat.cols());

  // H_fused = LN2(x2), x2 = H_c + W_2 GELU(f1)
  LayerNormGrads<R> ln2 = layer_norm_backward(c.x2, as_span(p.ln2_gain), upstream);
  gp.ln2_gain = Matrix<R>(1, ln2.dgain.size(), ln2.dgain);
  gp.ln2_bias = Matrix<R>(1, ln2.dbias.size(), ln2.dbias);
  const Matrix<R>& dx2 = ln2.dx;
  gp.w2 = matmul_tn(c.g, dx2);
  gp.b2 = column_sum_row(dx2);
  Matrix<R> df1 = matmul_nt(dx2, p.w2);
  for (std::size_t i = 0; i < df1.size(); ++i) {
    df1.data()[i] = static_cast<R>(df1.data()[i] * gelu_grad(c.f1.data()[i]));
  }
  gp.w1 = matmul_tn(c.hc, df1);
  gp.b1 = column_sum_row(df1);
  Matrix<R> dhc = add(dx2, matmul_nt(df1, p.w1));

  // H_c = LN1(x1), x1 = H_V + heads W_O + b_O
  LayerNormGrads<R> ln1 = layer_norm_backward(c.x1, as_span(p.ln1_gain), dhc);
  gp.ln1_gain = Matrix<R>(1, ln1.dgain.size(), ln1.dgain);
  gp.ln1_bias = Matrix<R>(1, ln1.dbias.size(), ln1.dbias);
  const Matrix<R>& dx1 = ln1.dx;
  gp.w_o = matmul_tn(c.attn.heads, dx1);
  gp.b_o = column_sum_row(dx1);
  const Matrix<R> dheads = matmul_nt(dx1, p.w_o);

  const std::size_t d_h = p.w_q.rows();
  const std::size_t dk = d_h / c.heads;
  const R scale = static_cast<R>(1.0 / std::sqrt(static_cast<double>(dk)));
  Matrix<R> dq(c.proj.hv.rows(), d_h);
  Matrix<R> dk_all(c.proj.hs.rows(), d_h);
  Matrix<R> dv(c.proj.hs.rows(), d_h);
  for (std::size_t h = 0; h < c.heads; ++h) {
    const Matrix<R> dout = slice_cols(dheads, h * dk, dk);
    const Matrix<R>& a = c.attn.weights[h];
    set_cols(dv, h * dk, matmul_tn(a, dout));
    Matrix<R> dscores = softmax_backward(a, matmul_nt(dout, c.attn.v[h]));
    for (R& x : dscores.data()) x *= scale;
    set_cols(dq, h * dk, matmul(dscores, c.attn.k[h]));
    set_cols(dk_all, h * dk, matmul_tn(dscores, c.attn.q[h]));
  }
  gp.w_q = matmul_tn(c.proj.hv, dq);
  gp.w_k = matmul_tn(c.proj.hs, dk_all);
  gp.w_vh = matmul_tn(c.proj.hs, dv);

  Matrix<R> dhv = add(dx1, matmul_nt(dq, p.w_q));
  Matrix<R> dhs = add(matmul_nt(dk_all, p.w_k), matmul_nt(dv, p.w_vh));
  gp.w_v = matmul_tn(c.hvis, dhv);
  gp.w_s = matmul_tn(c.s, dhs);
  g.hvis = matmul_nt(dhv, p.w_v);
  g.s = matmul_nt(dhs, p.w_s);
  return g;
}

template <typename R>
Matrix<R> concat_baseline(const Matrix<R>& hvis, const Matrix<R>& s, std::span<const float> mask,
                          const ProjectorParams<R>& p) {
  if (mask.size() != s.rows()) throw ShapeError("mask length differs from L_max");
  if (hvis.cols() + s.cols() != p.w_cat.rows()) {
    throw ShapeError("concat baseline expects " + std::to_string(p.w_cat.rows()) +
                     " input channels, got " + std::to_string(hvis.cols() + s.cols()));
  }
  std::vector<double> acc(s.cols(), 0.0);
  std::size_t open = 0;
  for (std::size_t t = 0; t < s.rows(); ++t) {
    if (is_masked(mask[t])) continue;
    ++open;
    for (std::size_t c = 0; c < s.cols(); ++c) acc[c] += s(t, c);
  }
  if (open == 0) throw DegenerateMaskError("every structural position is masked");
  Matrix<R> joined(hvis.rows(), hvis.cols() + s.cols());
  set_cols(joined, 0, hvis);
  for (std::size_t i = 0; i < hvis.rows(); ++i) {
    for (std::size_t c = 0; c < s.cols(); ++c) {
      joined(i, hvis.cols() + c) = static_cast<R>(acc[c] / static_cast<double>(open));
    }
  }
  return affine(joined, p.w_cat, p.b_cat);
}

std::vector<io::TensorBlock> projector_blocks(const ProjectorParams<float>& p) {
  std::vector<io::TensorBlock> blocks;
  for (const auto& [name, m] : p.named()) blocks.push_back({"projector." + name, *m});
  return blocks;
}

ProjectorParams<float> projector_from_blocks(const std::vector<io::TensorBlock>& blocks,
                                             const ProjectorConfig& cfg) {
  std::map<std::string, const TokenMatrix*> by_name;
  for (const auto& b : blocks) by_name[b.name] = &b.value;
  const ProjectorParams<float> shapes = ProjectorParams<float>::zeros(cfg);
  ProjectorParams<float> p;
  const auto want = shapes.named();
  const auto dst = p.named();
  for (std::size_t i = 0; i < want.size(); ++i) {
    const std::string key = "projector." + want[i].first;
    const auto it = by_name.find(key);
    if (it == by_name.end()) throw SchemaError("checkpoint lacks block " + key);
    const TokenMatrix& m = *it->second;
    if (m.rows() != want[i].second->rows() || m.cols() != want[i].second->cols()) {
      throw SchemaError("block " + key + " is " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", config expects " +
                        std::to_string(want[i].second->rows()) + "x" +
                        std::to_string(want[i].second->cols()));
    }
    for (const float v : m.data()) {
      if (!std::isfinite(v)) throw SchemaError("block " + key + " holds a non-finite value");
    }
    *dst[i].second = m;
  }
  return p;
}

#define MOLGEOM_INSTANTIATE_PROJECTOR(R)                                                        \
  template struct ProjectorParams<R>;                                                           \
  template Projected<R> project_modalities(const Matrix<R>&, const Matrix<R>&,                  \
                                           const ProjectorParams<R>&);                          \
  template AttentionTrace<R> cross_attention(const Matrix<R>&, const Matrix<R>&,                \
                                             std::span<const float>, const ProjectorParams<R>&, \
                                             std::size_t);                                      \
  template ProjectorCache<R> projector_forward_cached(const Matrix<R>&, const Matrix<R>&,       \
                                                      std::span<const float>,                   \
                                                      const ProjectorParams<R>&, std::size_t);  \
  template Matrix<R> projector_forward(const Matrix<R>&, const Matrix<R>&, std::span<const float>, \
                                       const ProjectorParams<R>&, std::size_t);                \
  template ProjectorGrads<R> projector_backward(const Matrix<R>&, const ProjectorCache<R>&,     \
                                                const ProjectorParams<R>&);                     \
  template Matrix<R> concat_baseline(const Matrix<R>&, const Matrix<R>&,                        \
                                     std::span<const float>, const ProjectorParams<R>&);

MOLGEOM_INSTANTIATE_PROJECTOR(float)
MOLGEOM_INSTANTIATE_PROJECTOR(double)

template ProjectorParams<double> ProjectorParams<float>::cast<double>() const;
template ProjectorParams<float> ProjectorParams<double>::cast<float>() const;

}  // namespace molgeom
