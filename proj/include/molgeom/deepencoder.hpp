#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "molgeom/numerics.hpp"
#include "molgeom/transformer.hpp"

namespace molgeom {

struct EncoderConfig {
  std::size_t image = 128;  // square side in pixels
  std::size_t patch = 16;
  std::size_t window = 2;
  std::size_t width = 32;  // d
  std::size_t local_layers = 2;
  std::size_t global_layers = 2;
  std::size_t heads = 4;
  bool positional_embedding = true;
  std::uint64_t seed = 0x5eed0001;

  // Full-size shape constants: 1024 px, 16 px patches, 14-token windows,
  // d = 1024, 12 local and 24 global layers.
  static EncoderConfig full_scale();

  // Throws SchemaError: image % patch != 0, patch-grid side not divisible by
  // 4, width % heads != 0, zero sizes.
  void validate() const;

  std::size_t grid_side() const { return image / patch; }
  std::size_t token_count() const { return grid_side() * grid_side(); }  // N
  std::size_t compressed_side() const { return conv_s2_extent(conv_s2_extent(grid_side())); }
  std::size_t compressed_count() const { return compressed_side() * compressed_side(); }  // M
  std::size_t fused_width() const { return 2 * width; }
};

// h x w x c pixels in [0, 1], channel-fastest.
struct ImageTensor {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 3;
  std::vector<float> data;

  float& at(std::size_t y, std::size_t x, std::size_t ch) { return data[(y * w + x) * c + ch]; }
  float at(std::size_t y, std::size_t x, std::size_t ch) const { return data[(y * w + x) * c + ch]; }
};

// Seeded uniform [0, 1) image.
ImageTensor synthetic_image(std::size_t side, std::uint64_t seed);

// Binary PPM (P6, maxval <= 255) or raw float tensor: "MGIM", u32 h, u32 w,
// u32 c, then h*w*c little-endian float32. Throws SchemaError.
ImageTensor load_image(const std::string& path);
std::string image_to_raw_bytes(const ImageTensor& img);

struct EncoderParams {
  TokenMatrix patch_weight;  // (p*p*3) x d, pixel order (row, col, channel)
  std::vector<float> patch_bias;
  TokenMatrix positional;  // N x d
  std::vector<BlockParams> local_blocks;
  ConvKernel<float> compress1, compress2;
  std::vector<BlockParams> global_blocks;
};

struct EncoderOutput {
  TokenMatrix patches;  // N x d
  TokenMatrix local;    // H_local, N x d
  TokenMatrix compressed;  // H_cmp, M x d
  TokenMatrix global;   // H_global, M x d
  TokenMatrix visual;   // H_vis, M x 2d
};

class DeepEncoder {
 public:
  explicit DeepEncoder(EncoderConfig cfg);

  const EncoderConfig& config() const { return cfg_; }
  EncoderParams& params() { return params_; }
  const EncoderParams& params() const { return params_; }

  // Patch tokens plus positional embeddings. ShapeError if the image side is
  // not the configured size or not divisible by the patch size.
  TokenMatrix patchify(const ImageTensor& img) const;
  // Window attention blocks over the patch grid; shape preserved.
  TokenMatrix local_forward(TokenMatrix tokens) const;
  // Two stride-2 3x3 convolutions with GELU between; N -> N/16 tokens.
  TokenMatrix compress(const TokenMatrix& local) const;
  // Dense attention blocks; shape preserved, permutation equivariant.
  TokenMatrix global_forward(TokenMatrix tokens) const;
  // [H_global | local tokens averaged over each 4x4 patch cell].
  TokenMatrix fuse_local_global(const TokenMatrix& global, const TokenMatrix& local) const;

  EncoderOutput forward(const ImageTensor& img) const;

 private:
  EncoderConfig cfg_;
  EncoderParams params_;
};

// Average of the local tokens in each 4x4 cell of a side x side grid, in the
// row-major order of the compressed grid.
TokenMatrix pool_cells(const TokenMatrix& local, std::size_t side);

}  // namespace molgeom
