#include <doctest.h>

#include <cmath>

#include "molgeom/deepencoder.hpp"
#include "molgeom/errors.hpp"
#include "molgeom/transformer.hpp"
#include "unit/helpers.hpp"

using namespace molgeom;

namespace {

TokenMatrix random_tokens(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  CounterRng rng(seed);
  TokenMatrix m(rows, cols);
  for (auto& v : m.data()) v = static_cast<float>(rng.next_symmetric(1.0));
  return m;
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(double(a[i]) - b[i]));
  return d;
}

}  // namespace

TEST_SUITE("deepencoder") {

TEST_CASE("desk shapes") {
  const DeepEncoder enc(EncoderConfig{});
  const EncoderOutput out = enc.forward(synthetic_image(128, 3));
  CHECK(out.patches.rows() == 64);
  CHECK(out.local.rows() == 64);
  CHECK(out.compressed.rows() == 4);
  CHECK(out.global.rows() == 4);
  CHECK(out.visual.rows() == 4);
  CHECK(out.visual.cols() == 64);
  for (const float v : out.visual.data()) CHECK(std::isfinite(v));
}

TEST_CASE("full-scale shape arithmetic") {
  const EncoderConfig cfg = EncoderConfig::full_scale();
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.token_count() == 4096);
  CHECK(cfg.compressed_count() == 256);
  CHECK(cfg.fused_width() == 2048);
}

TEST_CASE("config validation") {
  EncoderConfig cfg;
  cfg.image = 120;
  CHECK_THROWS_AS(cfg.validate(), SchemaError);
  cfg = {};
  cfg.image = 96;  // 6x6 patch grid, not divisible by 4
  CHECK_THROWS_AS(cfg.validate(), SchemaError);
  cfg = {};
  cfg.heads = 5;
  CHECK_THROWS_AS(cfg.validate(), SchemaError);
  cfg = {};
  cfg.window = 0;
  CHECK_THROWS_AS(cfg.validate(), SchemaError);
}

TEST_CASE("wrong image size is a ShapeError") {
  const DeepEncoder enc(EncoderConfig{});
  CHECK_THROWS_AS(enc.patchify(synthetic_image(1000, 1)), ShapeError);
  CHECK_THROWS_AS(enc.patchify(synthetic_image(64, 1)), ShapeError);
  CHECK_THROWS_AS(load_image(testing::data_path("cli_errors/malformed.json")), SchemaError);
  const ImageTensor small = load_image(testing::data_path("cli_errors/small.mgim"));
  CHECK(small.h == 64);
  CHECK(small.at(3, 3, 2) == 0.5f);
  CHECK_THROWS_AS(enc.forward(small), ShapeError);
}

TEST_CASE("patch pixel order") {
  EncoderConfig cfg;
  cfg.positional_embedding = false;
  DeepEncoder enc(cfg);
  auto& p = enc.params();
  std::fill(p.patch_weight.data().begin(), p.patch_weight.data().end(), 0.0f);
  std::fill(p.patch_bias.begin(), p.patch_bias.end(), 0.0f);
  // Channel 0 reads pixel (row 2, col 5, channel 1) of each patch.
  p.patch_weight((2 * 16 + 5) * 3 + 1, 0) = 1.0f;
  ImageTensor img = synthetic_image(128, 9);
  const TokenMatrix t = enc.patchify(img);
  CHECK(t(0, 0) == img.at(2, 5, 1));
  CHECK(t(8 * 3 + 4, 0) == img.at(3 * 16 + 2, 4 * 16 + 5, 1));
}

TEST_CASE("zero depth stages are identities") {
  EncoderConfig cfg;
  cfg.local_layers = 0;
  cfg.global_layers = 0;
  const DeepEncoder enc(cfg);
  const TokenMatrix x = random_tokens(64, 32, 1);
  CHECK(enc.local_forward(x) == x);
  const TokenMatrix y = random_tokens(4, 32, 2);
  CHECK(enc.global_forward(y) == y);
}

TEST_CASE("window attention stays inside its window") {
  EncoderConfig cfg;
  cfg.local_layers = 1;
  const DeepEncoder enc(cfg);
  const TokenMatrix x = random_tokens(64, 32, 4);
  TokenMatrix x2 = x;
  // A constant shift would vanish under LayerNorm, hence the ramp.
  // Token (row 0, col 1) lives in window 0, which covers rows 0-1, cols 0-1.
  for (std::size_t c = 0; c < 32; ++c) x2(1, c) += 0.5f * static_cast<float>(c % 3) - 0.5f;
  const TokenMatrix a = enc.local_forward(x);
  const TokenMatrix b = enc.local_forward(x2);
  for (std::size_t t = 0; t < 64; ++t) {
    const std::size_t y = t / 8, xx = t % 8;
    const bool same_window = y < 2 && xx < 2;
    CAPTURE(t);
    if (same_window) {
      CHECK(max_abs_diff(a.row(t), b.row(t)) > 1e-4);
    } else {
      CHECK(a.row(t)[0] == b.row(t)[0]);
      CHECK(max_abs_diff(a.row(t), b.row(t)) == 0.0);
    }
  }
}

TEST_CASE("padded window positions never act as keys") {
  EncoderConfig cfg;
  cfg.local_layers = 1;
  cfg.window = 3;  // 8 = 3 + 3 + 2: the last row and column of windows are partial
  const DeepEncoder enc(cfg);
  const TokenMatrix x = random_tokens(64, 32, 6);
  const TokenMatrix out = enc.local_forward(x);

  const BlockParams& block = enc.params().local_blocks[0];
  const TokenMatrix normed = layer_norm(x, std::span<const float>(block.ln1_gain),
                                        std::span<const float>(block.ln1_bias));
  // Bottom-right window holds only rows 6-7, cols 6-7.
  const std::size_t ids[] = {54, 55, 62, 63};
  TokenMatrix sub(4, 32);
  for (std::size_t i = 0; i < 4; ++i) std::copy(normed.row(ids[i]).begin(), normed.row(ids[i]).end(), sub.row(i).begin());
  TokenMatrix expected = add(sub, self_attention(sub, block.attn));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 32; ++c) expected(i, c) = x(ids[i], c) + (expected(i, c) - sub(i, c));
  const TokenMatrix mlp = mlp_forward(layer_norm(expected, std::span<const float>(block.ln2_gain),
                                                 std::span<const float>(block.ln2_bias)),
                                      block.mlp);
  add_inplace(expected, mlp);
  for (std::size_t i = 0; i < 4; ++i) CHECK(max_abs_diff(out.row(ids[i]), expected.row(i)) < 1e-5);
}

TEST_CASE("global stage is permutation equivariant without positions") {
  EncoderConfig cfg;
  cfg.positional_embedding = false;
  const DeepEncoder enc(cfg);
  const TokenMatrix x = random_tokens(4, 32, 8);
  const std::size_t perm[] = {2, 0, 3, 1};
  TokenMatrix xp(4, 32);
  for (std::size_t i = 0; i < 4; ++i) std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), xp.row(i).begin());
  const TokenMatrix a = enc.global_forward(x);
  const TokenMatrix b = enc.global_forward(xp);
  for (std::size_t i = 0; i < 4; ++i) CHECK(max_abs_diff(b.row(i), a.row(perm[i])) < 1e-5);
}

TEST_CASE("cell pooling and fusion") {
  TokenMatrix local(64, 1);
  for (std::size_t t = 0; t < 64; ++t) local(t, 0) = static_cast<float>(t);
  const TokenMatrix pooled = pool_cells(local, 8);
  REQUIRE(pooled.rows() == 4);
  // Cell 0 holds rows 0-3, cols 0-3 of an 8-wide grid: mean index 1.5 * 8 + 1.5.
  CHECK(pooled(0, 0) == doctest::Approx(13.5));
  CHECK(pooled(1, 0) == doctest::Approx(17.5));
  CHECK(pooled(2, 0) == doctest::Approx(45.5));

  const DeepEncoder enc(EncoderConfig{});
  const TokenMatrix g = random_tokens(4, 32, 10);
  const TokenMatrix l = random_tokens(64, 32, 11);
  const TokenMatrix fused = enc.fuse_local_global(g, l);
  CHECK(fused.cols() == 64);
  CHECK(slice_cols(fused, 0, 32) == g);
  CHECK(slice_cols(fused, 32, 32) == pool_cells(l, 8));
  const TokenMatrix zeroed = enc.fuse_local_global(TokenMatrix(4, 32), l);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 64; ++c) CHECK((zeroed(i, c) == 0.0f) == (c < 32 || fused(i, c) == 0.0f));
}

TEST_CASE("forward is deterministic") {
  const DeepEncoder a(EncoderConfig{});
  const DeepEncoder b(EncoderConfig{});
  const ImageTensor img = synthetic_image(128, 5);
  CHECK(a.forward(img).visual == b.forward(img).visual);
  EncoderConfig other;
  other.seed = 1;
  CHECK_FALSE(DeepEncoder(other).forward(img).visual == a.forward(img).visual);
}

}  // TEST_SUITE
