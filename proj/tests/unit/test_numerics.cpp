#include <doctest.h>

#include <cmath>

#include "molgeom/errors.hpp"
#include "molgeom/numerics.hpp"
#include "unit/helpers.hpp"

using namespace molgeom;

TEST_SUITE("numerics") {

TEST_CASE("matmul against a hand product") {
  const Matrix<double> a(2, 3, {1, 2, 3, 4, 5, 6});
  const Matrix<double> b(3, 2, {7, 8, 9, 10, 11, 12});
  CHECK(matmul(a, b) == Matrix<double>(2, 2, {58, 64, 139, 154}));
  CHECK(matmul_nt(a, transpose(b)) == matmul(a, b));
  CHECK(matmul_tn(transpose(a), b) == matmul(a, b));
  CHECK(matmul(a, Matrix<double>::identity(3)) == a);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(Matrix<float>(2, 2, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST_CASE("softmax") {
  const Matrix<double> zeros(1, 4);
  const auto uniform = softmax_last(zeros);
  for (const double p : uniform.data()) CHECK(p == doctest::Approx(0.25));

  const Matrix<double> logits(1, 3, {1, 2, 3});
  const auto p = softmax_last(logits);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p(0, 2) == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));

  // Large logits must not overflow.
  const Matrix<double> big(1, 2, {1000, 1000});
  CHECK(softmax_last(big)(0, 0) == doctest::Approx(0.5));

  const std::vector<double> mask{0, kMaskNegInf, 0};
  const auto pm = softmax_last_masked(logits, std::span<const double>(mask));
  CHECK(pm(0, 1) == 0.0);
  CHECK(pm(0, 0) + pm(0, 2) == doctest::Approx(1.0).epsilon(1e-15));

  const std::vector<double> all{kMaskNegInf, kMaskNegInf, kMaskNegInf};
  CHECK_THROWS_AS(softmax_last_masked(logits, std::span<const double>(all)), DegenerateMaskError);
  CHECK_THROWS_AS(softmax_last_masked(logits, std::span<const double>(mask.data(), 2)), ShapeError);

  const Matrix<double> pair(1, 2);
  const std::vector<double> second_closed{0.0, -1e9};
  const auto collapsed = softmax_last_masked(pair, std::span<const double>(second_closed));
  CHECK(collapsed(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(collapsed(0, 1) <= 1e-12);
}

TEST_CASE("masked softmax rows are distributions") {
  CounterRng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix<double> logits(3, 9);
    for (auto& v : logits.data()) v = rng.next_symmetric(30.0);
    std::vector<double> mask(9);
    bool any_open = false;
    for (auto& m : mask) {
      m = rng.next_unit() < 0.4 ? kMaskNegInf : 0.0;
      any_open = any_open || m == 0.0;
    }
    if (!any_open) mask[4] = 0.0;
    const auto p = softmax_last_masked(logits, std::span<const double>(mask));
    for (std::size_t i = 0; i < 3; ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < 9; ++j) {
        CHECK(p(i, j) >= 0.0);
        if (mask[j] != 0.0) CHECK(p(i, j) <= 1e-12);
        sum += p(i, j);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("layer norm of a two-value row") {
  const Matrix<double> x(1, 2, {3, 1});
  const std::vector<double> gain{1, 1}, bias{0, 0};
  const auto y = layer_norm(x, std::span<const double>(gain), std::span<const double>(bias));
  const double expected = 1.0 / std::sqrt(1.0 + kLayerNormEps);
  CHECK(y(0, 0) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(y(0, 1) == doctest::Approx(-expected).epsilon(1e-15));
}

TEST_CASE("layer norm statistics and invariances") {
  const std::size_t d = 16;
  const std::vector<double> ones(d, 1.0), zero(d, 0.0);
  const auto ln = [&](const Matrix<double>& m) {
    return layer_norm(m, std::span<const double>(ones), std::span<const double>(zero));
  };
  const auto constant = ln(Matrix<double>(2, d, 4.25));
  for (const double v : constant.data()) CHECK(v == 0.0);

  CounterRng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix<double> x(4, d);
    for (auto& v : x.data()) v = rng.next_symmetric(3.0);
    const auto y = ln(x);
    for (std::size_t i = 0; i < 4; ++i) {
      double mean = 0, var = 0;
      for (std::size_t c = 0; c < d; ++c) mean += y(i, c);
      mean /= d;
      for (std::size_t c = 0; c < d; ++c) var += (y(i, c) - mean) * (y(i, c) - mean);
      var /= d;
      CHECK(std::abs(mean) <= 1e-12);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
    // Positive scale plus a per-row shift leaves the output unchanged.
    const double a = 1.0 + 4.0 * rng.next_unit();
    Matrix<double> moved = x;
    for (std::size_t i = 0; i < 4; ++i) {
      const double b = rng.next_symmetric(50.0);
      for (std::size_t c = 0; c < d; ++c) moved(i, c) = a * x(i, c) + b;
    }
    const auto z = ln(moved);
    for (std::size_t k = 0; k < y.size(); ++k) CHECK(std::abs(z.data()[k] - y.data()[k]) <= 1e-5);
  }
}

TEST_CASE("matmul is associative") {
  CounterRng rng(9);
  Matrix<double> a(5, 7), b(7, 4), c(4, 6);
  for (auto* m : {&a, &b, &c})
    for (auto& v : m->data()) v = rng.next_symmetric(2.0);
  const auto left = matmul(matmul(a, b), c);
  const auto right = matmul(a, matmul(b, c));
  double scale = 0, diff = 0;
  for (std::size_t k = 0; k < left.size(); ++k) {
    scale = std::max(scale, std::abs(left.data()[k]));
    diff = std::max(diff, std::abs(left.data()[k] - right.data()[k]));
  }
  CHECK(diff <= 1e-4 * scale);
}

TEST_CASE("layer norm backward matches finite differences") {
  CounterRng rng(5);
  Matrix<double> x(2, 5);
  Matrix<double> dy(2, 5);
  for (auto& v : x.data()) v = rng.next_symmetric(2);
  for (auto& v : dy.data()) v = rng.next_symmetric(1);
  std::vector<double> gain(5), bias(5);
  for (auto& v : gain) v = 1 + rng.next_symmetric(0.5);
  for (auto& v : bias) v = rng.next_symmetric(0.5);
  const auto loss = [&](const Matrix<double>& in) {
    const auto y = layer_norm(in, std::span<const double>(gain), std::span<const double>(bias));
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * dy.data()[i];
    return s;
  };
  const auto g = layer_norm_backward(x, std::span<const double>(gain), dy);
  for (std::size_t i = 0; i < x.size(); ++i) {
    Matrix<double> plus = x, minus = x;
    plus.data()[i] += 1e-6;
    minus.data()[i] -= 1e-6;
    CHECK(g.dx.data()[i] == doctest::Approx((loss(plus) - loss(minus)) / 2e-6).epsilon(1e-6));
  }
}

TEST_CASE("gelu matches the erf form") {
  for (const auto& [key, value] : testing::load_json("numeric_oracle.json")["gelu"].items()) {
    CHECK(gelu(std::stod(key)) == doctest::Approx(value.get<double>()).epsilon(1e-14));
  }
  CHECK(gelu(3.0) == doctest::Approx(2.9960).epsilon(1e-4));
  CHECK(gelu(0.0) == 0.0);
  for (const double x : {-4.0, -1.5, -0.1, 0.3, 1.0, 2.5, 6.0})
    CHECK(std::abs(gelu(x) - x * normal_cdf(x)) <= 1e-15);
  for (const double x : {-2.0, -0.3, 0.0, 0.7, 2.5}) {
    CHECK(gelu_grad(x) == doctest::Approx((gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6).epsilon(1e-7));
  }
}

TEST_CASE("strided convolution extents") {
  CHECK(conv_s2_extent(64) == 32);
  CHECK(conv_s2_extent(32) == 16);
  CHECK(conv_s2_extent(7) == 4);
  Grid<float> g(64, 64, 2, 1.0f);
  ConvKernel<float> k{3, 2, std::vector<float>(3 * 2 * 9, 0.0f), {0.5f, -1.0f, 2.0f}};
  const auto once = conv3x3_s2(g, k);
  CHECK(once.h == 32);
  CHECK(once.c == 3);
  const auto twice = conv3x3_s2(once, ConvKernel<float>{3, 3, std::vector<float>(81, 0.0f), {0, 0, 0}});
  CHECK(twice.h == 16);
  CHECK(twice.w == 16);
  // Zero weights: the output is the bias everywhere.
  CHECK(once.at(5, 7, 0) == 0.5f);
  CHECK(once.at(31, 0, 2) == 2.0f);
  CHECK_THROWS_AS(conv3x3_s2(once, k), ShapeError);
}

TEST_CASE("centre-tap convolution subsamples") {
  Grid<double> g(6, 6, 1);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = static_cast<double>(i);
  ConvKernel<double> k{1, 1, std::vector<double>(9, 0.0), {0.0}};
  k.w(0, 0, 1, 1) = 1.0;
  const auto out = conv3x3_s2(g, k);
  REQUIRE(out.h == 3);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x) CHECK(out.at(y, x, 0) == g.at(2 * y, 2 * x, 0));

  // Border handling: an all-ones kernel at the corner sees a 2x2 patch.
  ConvKernel<double> ones{1, 1, std::vector<double>(9, 1.0), {0.0}};
  const Grid<double> flat(4, 4, 1, 1.0);
  CHECK(conv3x3_s2(flat, ones).at(0, 0, 0) == 4.0);
  CHECK(conv3x3_s2(flat, ones).at(1, 1, 0) == 9.0);
}

TEST_CASE("window partition pads and reverses") {
  Grid<float> g(64, 64, 3);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = static_cast<float>(i % 1013);
  const auto p = window_partition(g, 14);
  CHECK(p.padded_height == 70);
  CHECK(p.padded_width == 70);
  CHECK(p.windows.size() == 25);
  CHECK(p.windows[24].at(13, 13, 0) == 0.0f);  // padding
  CHECK(p.windows[6].at(0, 0, 1) == g.at(14, 14, 1));
  CHECK(window_reverse(p) == g);

  Grid<float> exact(14, 14, 1, 2.0f);
  const auto single = window_partition(exact, 14);
  CHECK(single.windows.size() == 1);
  CHECK(single.windows[0] == exact);
  CHECK_THROWS_AS(window_partition(exact, 0), ShapeError);
}

TEST_CASE("token grid round trip") {
  Matrix<float> t(16, 2);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<float>(i);
  const auto g = tokens_to_grid(t, 4);
  CHECK(g.at(1, 2, 1) == t(6, 1));
  CHECK(grid_to_tokens(g) == t);
  CHECK_THROWS_AS(tokens_to_grid(t, 3), ShapeError);
  CHECK(exact_sqrt(4096) == 64);
  CHECK_THROWS_AS(exact_sqrt(4095), ShapeError);
}

TEST_CASE("seeded parameters are reproducible and bounded") {
  const auto a = seeded_params<float>(10000, 64, 17);
  CHECK(a == seeded_params<float>(10000, 64, 17));
  CHECK(a != seeded_params<float>(10000, 64, 18));
  double mean = 0, sq = 0, max_abs = 0;
  for (const float v : a) {
    mean += v;
    sq += double(v) * v;
    max_abs = std::max(max_abs, std::abs(double(v)));
  }
  mean /= a.size();
  sq /= a.size();
  CHECK(max_abs <= 1.0 / 8.0);
  // Within three standard errors of zero: sigma = b / sqrt(3 n).
  CHECK(std::abs(mean) <= 3.0 * (1.0 / 8.0) / std::sqrt(3.0 * a.size()));
  // Uniform on [-b, b): variance b^2 / 3.
  CHECK(sq == doctest::Approx(1.0 / 64 / 3).epsilon(0.05));
  CHECK(derive_seed(7, "projector") == derive_seed(7, "projector"));
  CHECK(derive_seed(7, "projector") != derive_seed(7, "decoder"));
  CHECK(derive_seed(7, "projector") != derive_seed(8, "projector"));

  CounterRng r1(3), r2(3, 5);
  for (int i = 0; i < 5; ++i) r1.next_u64();
  CHECK(r1.next_u64() == r2.next_u64());
}

TEST_CASE("checksum sees every bit") {
  std::vector<float> v{1.0f, 2.0f, 3.0f};
  const auto c = checksum(v);
  CHECK(c == checksum(std::vector<float>{1.0f, 2.0f, 3.0f}));
  v[1] = std::nextafter(2.0f, 3.0f);
  CHECK(c != checksum(v));
  CHECK(checksum(std::vector<float>{0.0f}) != checksum(std::vector<float>{-0.0f}));
}

}  // TEST_SUITE
