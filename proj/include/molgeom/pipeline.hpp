#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "molgeom/decoder.hpp"
#include "molgeom/deepencoder.hpp"
#include "molgeom/e3fp.hpp"
#include "molgeom/projector.hpp"
#include "molgeom/structok.hpp"

namespace molgeom {

inline constexpr int kConfigVersion = 1;

// Per-module seeds default to derive_seed(base, module name); any of
// "encoder", "projector", "embed_1d", "embed_3d", "decoder", "image" can be
// pinned explicitly.
struct PipelineSeeds {
  std::uint64_t base = 7;
  std::map<std::string, std::uint64_t> overrides;

  std::uint64_t get(const std::string& module) const;
};

struct DecodeSettings {
  std::vector<std::size_t> prompt{1, 2};
  std::size_t t_max = 8;
  std::size_t stop_id = 0;
};

struct PipelineConfig {
  E3fpConfig e3fp;
  EncoderConfig encoder;
  ProjectorConfig projector;
  DecoderConfig decoder;
  DecodeSettings decode;
  std::size_t d_s = 64;
  std::size_t l_max = 64;
  PipelineSeeds seeds;
  FusionMode fusion_mode = FusionMode::kCrossAttention;
  std::string vocabulary_path;  // empty: built-in SELFIES alphabet

  // Full-size encoder and projector; everything else at defaults.
  static PipelineConfig full_scale();

  // Pushes derived dims (d_v = 2 * encoder width, projector d_s, decoder
  // width = d_h) and seeds into the module configs, then validates them.
  void resolve();
};

// Strict: unknown keys, wrong types, a missing or unsupported "version", or
// inconsistent dims throw SchemaError. The result is resolved.
PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::string& path);

struct ShapeTrace {
  std::size_t n = 0;  // patch tokens
  std::size_t m = 0;  // compressed tokens = N_v
  std::size_t d_v = 0;
  std::size_t d_h = 0;

  std::vector<std::string> lines() const;
};

ShapeTrace shape_trace(const PipelineConfig& cfg);

// Seeded modules and tables for one resolved config.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);

  const PipelineConfig& config() const { return cfg_; }
  const TokenVocabulary& vocabulary() const { return vocab_; }

  FingerprintTable fingerprint(const Conformer& conformer) const;
  // SELFIES of the conformer, aligned to its atoms, fused and padded. The
  // no3d mode drops the 3D branch.
  StructuralSequence tokenize(const Conformer& conformer) const;
  ImageTensor synthetic_image() const;
  TokenMatrix encode(const ImageTensor& image) const;
  TokenMatrix fuse(const TokenMatrix& h_vis, const StructuralSequence& seq) const;
  std::vector<std::size_t> decode(const TokenMatrix& h_fused) const;

  // Built on first use (once, thread-safe); full-size weights are large.
  const DeepEncoder& encoder() const;
  const ProjectorParams<float>& projector() const;
  const ToyDecoder& decoder() const;

 private:
  PipelineConfig cfg_;
  TokenVocabulary vocab_;
  EmbeddingTable table_1d_;
  EmbeddingTable table_3d_;
  mutable std::once_flag encoder_once_, projector_once_, decoder_once_;
  mutable std::unique_ptr<DeepEncoder> encoder_;
  mutable std::unique_ptr<ProjectorParams<float>> projector_;
  mutable std::unique_ptr<ToyDecoder> decoder_;
};

}  // namespace molgeom
