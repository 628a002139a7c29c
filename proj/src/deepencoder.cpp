#include "molgeom/deepencoder.hpp"

#include <cctype>
#include <cstring>
#include <sstream>

#include "molgeom/binary_io.hpp"
#include "molgeom/errors.hpp"

namespace molgeom {

EncoderConfig EncoderConfig::full_scale() {
  EncoderConfig cfg;
  cfg.image = 1024;
  cfg.patch = 16;
  cfg.window = 14;
  cfg.width = 1024;
  cfg.local_layers = 12;
  cfg.global_layers = 24;
  cfg.heads = 16;
  return cfg;
}

void EncoderConfig::validate() const {
  if (image == 0 || patch == 0 || window == 0 || width == 0 || heads == 0) {
    throw SchemaError("encoder: sizes must be positive");
  }
  if (image % patch != 0) {
    throw SchemaError("encoder: image side " + std::to_string(image) +
                      " is not divisible by patch " + std::to_string(patch));
  }
  if (grid_side() % 4 != 0) {
    throw SchemaError("encoder: patch grid side must be divisible by 4");
  }
  if (width % heads != 0) throw SchemaError("encoder: width must be divisible by heads");
}

ImageTensor synthetic_image(std::size_t side, std::uint64_t seed) {
  ImageTensor img{side, side, 3, std::vector<float>(side * side * 3)};
  CounterRng rng(seed);
  for (float& v : img.data) v = static_cast<float>(rng.next_unit());
  return img;
}

namespace {

// Skips whitespace and '#' comments between PPM header fields.
std::size_t read_ppm_field(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t value = 0;
  const std::size_t start = pos;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
    if (value > (1u << 20)) throw SchemaError("PPM header value too large");
    ++pos;
  }
  if (pos == start) throw SchemaError("malformed PPM header");
  return value;
}

}  // namespace

ImageTensor load_image(const std::string& path) {
  const std::string bytes = io::read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
    std::size_t pos = 2;
    const std::size_t w = read_ppm_field(bytes, pos);
    const std::size_t h = read_ppm_field(bytes, pos);
    const std::size_t maxval = read_ppm_field(bytes, pos);
    if (maxval == 0 || maxval > 255) throw SchemaError("PPM maxval must be in [1, 255]");
    ++pos;  // single whitespace before the raster
    if (bytes.size() < pos + w * h * 3) throw SchemaError("PPM raster is truncated");
    ImageTensor img{h, w, 3, std::vector<float>(w * h * 3)};
    for (std::size_t i = 0; i < img.data.size(); ++i) {
      img.data[i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + i])) /
                    static_cast<float>(maxval);
    }
    return img;
  }
  if (bytes.size() >= 16 && std::memcmp(bytes.data(), "MGIM", 4) == 0) {
    std::istringstream in(bytes.substr(4));
    const std::uint32_t h = io::read_u32(in);
    const std::uint32_t w = io::read_u32(in);
    const std::uint32_t c = io::read_u32(in);
    if (static_cast<std::uint64_t>(h) * w * c > (1ull << 28)) throw SchemaError("image too large");
    ImageTensor img{h, w, c, std::vector<float>(static_cast<std::size_t>(h) * w * c)};
    for (float& v : img.data) {
      v = io::read_f32(in);
      if (!std::isfinite(v)) throw SchemaError("image contains non-finite values");
    }
    return img;
  }
  throw SchemaError(path + ": not a P6 PPM or MGIM tensor");
}

std::string image_to_raw_bytes(const ImageTensor& img) {
  std::ostringstream out;
  out.write("MGIM", 4);
  io::write_u32(out, static_cast<std::uint32_t>(img.h));
  io::write_u32(out, static_cast<std::uint32_t>(img.w));
  io::write_u32(out, static_cast<std::uint32_t>(img.c));
  for (const float v : img.data) io::write_f32(out, v);
  return out.str();
}

namespace {

ConvKernel<float> seeded_conv(std::size_t channels, std::uint64_t seed) {
  ConvKernel<float> k;
  k.c_out = channels;
  k.c_in = channels;
  k.weights = seeded_params<float>(channels * channels * 9, channels * 9, derive_seed(seed, "w"));
  k.bias = seeded_params<float>(channels, channels * 9, derive_seed(seed, "b"));
  return k;
}

}  // namespace

DeepEncoder::DeepEncoder(EncoderConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.width;
  const std::size_t patch_dim = cfg_.patch * cfg_.patch * 3;
  const auto s = [&](const std::string& name) { return derive_seed(cfg_.seed, name); };
  params_.patch_weight = seeded_matrix<float>(patch_dim, d, s("patch.w"));
  params_.patch_bias = seeded_params<float>(d, patch_dim, s("patch.b"));
  params_.positional = cfg_.positional_embedding
                           ? seeded_matrix<float>(cfg_.token_count(), d, s("pos"))
                           : TokenMatrix(cfg_.token_count(), d);
  for (std::size_t l = 0; l < cfg_.local_layers; ++l) {
    params_.local_blocks.push_back(
        make_block(d, 4 * d, cfg_.heads, cfg_.seed, "local." + std::to_string(l)));
  }
  params_.compress1 = seeded_conv(d, s("compress.1"));
  params_.compress2 = seeded_conv(d, s("compress.2"));
  for (std::size_t l = 0; l < cfg_.global_layers; ++l) {
    params_.global_blocks.push_back(
        make_block(d, 4 * d, cfg_.heads, cfg_.seed, "global." + std::to_string(l)));
  }
}

TokenMatrix DeepEncoder::patchify(const ImageTensor& img) const {
  if (img.c != 3) throw ShapeError("image must have 3 channels");
  if (img.h != img.w || img.h % cfg_.patch != 0) {
    throw ShapeError("image extents " + std::to_string(img.h) + "x" + std::to_string(img.w) +
                     " are not a square multiple of patch " + std::to_string(cfg_.patch));
  }
  if (img.h != cfg_.image) {
    throw ShapeError("image side " + std::to_string(img.h) + " differs from configured " +
                     std::to_string(cfg_.image));
  }
  const std::size_t side = cfg_.grid_side();
  const std::size_t p = cfg_.patch;
  TokenMatrix blocks(side * side, p * p * 3);
  for (std::size_t py = 0; py < side; ++py) {
    for (std::size_t px = 0; px < side; ++px) {
      auto row = blocks.row(py * side + px);
      std::size_t n = 0;
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t ch = 0; ch < 3; ++ch) row[n++] = img.at(py * p + y, px * p + x, ch);
    }
  }
  TokenMatrix tokens = matmul(blocks, params_.patch_weight);
  add_row_inplace(tokens, std::span<const float>(params_.patch_bias));
  add_inplace(tokens, params_.positional);
  return tokens;
}

TokenMatrix DeepEncoder::local_forward(TokenMatrix tokens) const {
  if (tokens.cols() != cfg_.width) throw ShapeError("local_forward: channel width mismatch");
  const std::size_t side = exact_sqrt(tokens.rows());
  const std::size_t w = cfg_.window;
  for (const BlockParams& block : params_.local_blocks) {
    const TokenMatrix normed = layer_norm(tokens, std::span<const float>(block.ln1_gain),
                                          std::span<const float>(block.ln1_bias));
    WindowPartition<float> parts = window_partition(tokens_to_grid(normed, side), w);
    const std::size_t per_row = parts.windows_per_row();
    for (std::size_t n = 0; n < parts.windows.size(); ++n) {
      const std::size_t wy = (n / per_row) * w;
      const std::size_t wx = (n % per_row) * w;
      std::vector<float> key_mask(w * w, 0.0f);
      for (std::size_t y = 0; y < w; ++y)
        for (std::size_t x = 0; x < w; ++x)
          if (wy + y >= side || wx + x >= side) key_mask[y * w + x] = static_cast<float>(kMaskNegInf);
      Grid<float>& win = parts.windows[n];
      const TokenMatrix out =
          self_attention(grid_to_tokens(win), block.attn, std::span<const float>(key_mask));
      win.data = out.data();
    }
    add_inplace(tokens, grid_to_tokens(window_reverse(parts)));
    add_inplace(tokens, mlp_forward(layer_norm(tokens, std::span<const float>(block.ln2_gain),
                                               std::span<const float>(block.ln2_bias)),
                                    block.mlp));
  }
  return tokens;
}

TokenMatrix DeepEncoder::compress(const TokenMatrix& local) const {
  if (local.cols() != cfg_.width) throw ShapeError("compress: channel width mismatch");
  const std::size_t side = exact_sqrt(local.rows());
  const Grid<float> g1 = conv3x3_s2(tokens_to_grid(local, side), params_.compress1);
  return grid_to_tokens(conv3x3_s2(gelu(g1), params_.compress2));
}

TokenMatrix DeepEncoder::global_forward(TokenMatrix tokens) const {
  if (tokens.cols() != cfg_.width) throw ShapeError("global_forward: channel width mismatch");
  for (const BlockParams& block : params_.global_blocks) tokens = prenorm_block(tokens, block);
  return tokens;
}

TokenMatrix pool_cells(const TokenMatrix& local, std::size_t side) {
  const std::size_t cells = conv_s2_extent(conv_s2_extent(side));
  TokenMatrix pooled(cells * cells, local.cols());
  std::vector<double> acc(local.cols());
  for (std::size_t cy = 0; cy < cells; ++cy) {
    for (std::size_t cx = 0; cx < cells; ++cx) {
      std::fill(acc.begin(), acc.end(), 0.0);
      std::size_t count = 0;
      for (std::size_t y = 4 * cy; y < std::min(side, 4 * cy + 4); ++y) {
        for (std::size_t x = 4 * cx; x < std::min(side, 4 * cx + 4); ++x) {
          const auto row = local.row(y * side + x);
          for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += row[c];
          ++count;
        }
      }
      auto out = pooled.row(cy * cells + cx);
      for (std::size_t c = 0; c < acc.size(); ++c) out[c] = static_cast<float>(acc[c] / count);
    }
  }
  return pooled;
}

TokenMatrix DeepEncoder::fuse_local_global(const TokenMatrix& global,
                                           const TokenMatrix& local) const {
  if (global.cols() != local.cols()) throw ShapeError("fuse: channel widths differ");
  const TokenMatrix pooled = pool_cells(local, exact_sqrt(local.rows()));
  if (pooled.rows() != global.rows()) {
    throw ShapeError("fuse: " + std::to_string(global.rows()) + " global tokens but " +
                     std::to_string(pooled.rows()) + " pooled local cells");
  }
  return concat_cols(global, pooled);
}

EncoderOutput DeepEncoder::forward(const ImageTensor& img) const {
  EncoderOutput out;
  out.patches = patchify(img);
  out.local = local_forward(out.patches);
  out.compressed = compress(out.local);
  out.global = global_forward(out.compressed);
  out.visual = fuse_local_global(out.global, out.local);
  return out;
}

}  // namespace molgeom
