#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "molgeom/projector.hpp"

namespace testing {

using molgeom::Matrix;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<group>[index]"
  std::size_t checked = 0;
  std::map<std::string, double> per_group;
};

inline void randomize(Matrix<double>& m, molgeom::CounterRng& rng, double bound, double offset = 0.0) {
  for (double& v : m.data()) v = offset + rng.next_symmetric(bound);
}

enum class Loss { kHalfSquare, kRandomLinear };

// Loss = 0.5*|H_fused|^2 (upstream = H_fused) or sum(H_fused * R) for a fixed
// random R. Central differences with step h against projector_backward for
// every parameter group except the concatenation baseline, plus both inputs.
inline GradCheckResult projector_gradcheck(const molgeom::ProjectorConfig& cfg, std::size_t n_v,
                                           std::size_t l_max, std::size_t length,
                                           std::uint64_t seed, Loss kind = Loss::kHalfSquare,
                                           double h = 1e-4, double floor = 1e-6) {
  using namespace molgeom;
  CounterRng rng(seed);
  auto p = ProjectorParams<double>::seeded(cfg);
  // Non-trivial LayerNorm affine parameters so their gradients are exercised.
  randomize(p.ln1_gain, rng, 0.5, 1.0);
  randomize(p.ln1_bias, rng, 0.5);
  randomize(p.ln2_gain, rng, 0.5, 1.0);
  randomize(p.ln2_bias, rng, 0.5);
  Matrix<double> hvis(n_v, cfg.d_v), s(l_max, cfg.d_s), r(n_v, cfg.d_h);
  randomize(hvis, rng, 1.0);
  randomize(s, rng, 1.0);
  randomize(r, rng, 1.0);
  const std::vector<float> mask = padding_mask(length, l_max);

  const auto loss = [&](const Matrix<double>& hv, const Matrix<double>& sm,
                        const ProjectorParams<double>& params) {
    const Matrix<double> out = projector_forward(hv, sm, std::span<const float>(mask), params, cfg.heads);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double o = out.data()[i];
      acc += kind == Loss::kHalfSquare ? 0.5 * o * o : o * r.data()[i];
    }
    return acc;
  };

  const auto cache = projector_forward_cached(hvis, s, std::span<const float>(mask), p, cfg.heads);
  const Matrix<double> upstream = kind == Loss::kHalfSquare ? cache.out : r;
  const ProjectorGrads<double> g = projector_backward(upstream, cache, p);

  GradCheckResult res;
  const auto compare = [&](const std::string& group, Matrix<double>& target,
                           const Matrix<double>& analytic, auto&& eval) {
    double& group_max = res.per_group[group];
    for (std::size_t i = 0; i < target.size(); ++i) {
      const double keep = target.data()[i];
      target.data()[i] = keep + h;
      const double up = eval();
      target.data()[i] = keep - h;
      const double down = eval();
      target.data()[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      group_max = std::max(group_max, rel);
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = group + "[" + std::to_string(i) + "]";
      }
      ++res.checked;
    }
  };

  auto analytic = g.params;
  const auto grads = analytic.named();
  auto named = p.named();
  for (std::size_t k = 0; k < named.size(); ++k) {
    if (named[k].first == "w_cat" || named[k].first == "b_cat") continue;
    compare(named[k].first, *named[k].second, *grads[k].second, [&] { return loss(hvis, s, p); });
  }
  compare("H_vis", hvis, g.hvis, [&] { return loss(hvis, s, p); });
  compare("S", s, g.s, [&] { return loss(hvis, s, p); });
  return res;
}

}  // namespace testing
