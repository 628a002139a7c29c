#include "molgeom/pipeline.hpp"

#include <nlohmann/json.hpp>
#include <set>

#include "molgeom/binary_io.hpp"
#include "molgeom/errors.hpp"
#include "molgeom/selfies.hpp"

namespace molgeom {

namespace {

const std::set<std::string> kSeedModules = {"encoder", "projector", "embed_1d",
                                            "embed_3d", "decoder",   "image"};

using json = nlohmann::json;

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw SchemaError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw SchemaError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& dst, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw SchemaError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw SchemaError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (it->is_number_integer() && !it->is_number_unsigned()) throw SchemaError("");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw SchemaError("");
    } else {
      if (!it->is_string()) throw SchemaError("");
    }
    dst = it->get<T>();
  } catch (const std::exception&) {
    throw SchemaError(where + "." + key + " has the wrong type");
  }
}

}  // namespace

std::uint64_t PipelineSeeds::get(const std::string& module) const {
  const auto it = overrides.find(module);
  return it != overrides.end() ? it->second : derive_seed(base, module);
}

PipelineConfig PipelineConfig::full_scale() {
  PipelineConfig cfg;
  cfg.encoder = EncoderConfig::full_scale();
  cfg.projector = ProjectorConfig::full_scale(cfg.d_s);
  cfg.decoder.heads = 32;
  cfg.resolve();
  return cfg;
}

void PipelineConfig::resolve() {
  e3fp.validate();
  encoder.seed = seeds.get("encoder");
  encoder.validate();
  if (d_s == 0 || l_max == 0) throw SchemaError("d_s and l_max must be >= 1");
  projector.d_v = encoder.fused_width();
  projector.d_s = d_s;
  projector.seed = seeds.get("projector");
  projector.validate();
  decoder.width = projector.d_h;
  decoder.seed = seeds.get("decoder");
  decoder.validate();
  if (decode.stop_id >= decoder.vocab_size) throw SchemaError("decoder stop_id outside vocabulary");
  PromptTokens{decode.prompt, decoder.vocab_size}.validate();
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(doc, "config",
             {"version", "fusion_mode", "d_s", "l_max", "seeds", "vocabulary", "e3fp", "encoder",
              "projector", "decoder"});
  int version = 0;
  read_field(doc, "version", version, "config");
  if (!doc.contains("version")) throw SchemaError("config lacks \"version\"");
  if (version != kConfigVersion) {
    throw SchemaError("unsupported config version " + std::to_string(version));
  }

  PipelineConfig cfg;
  read_field(doc, "d_s", cfg.d_s, "config");
  read_field(doc, "l_max", cfg.l_max, "config");
  read_field(doc, "vocabulary", cfg.vocabulary_path, "config");
  if (doc.contains("fusion_mode")) {
    std::string mode;
    read_field(doc, "fusion_mode", mode, "config");
    cfg.fusion_mode = parse_fusion_mode(mode);
  }
  if (doc.contains("seeds")) {
    const json& s = doc["seeds"];
    std::set<std::string> allowed = kSeedModules;
    allowed.insert("base");
    check_keys(s, "seeds", allowed);
    read_field(s, "base", cfg.seeds.base, "seeds");
    for (const std::string& module : kSeedModules) {
      if (!s.contains(module)) continue;
      std::uint64_t v = 0;
      read_field(s, module.c_str(), v, "seeds");
      cfg.seeds.overrides[module] = v;
    }
  }
  if (doc.contains("e3fp")) {
    const json& e = doc["e3fp"];
    check_keys(e, "e3fp", {"iterations", "radius_step", "vocab_size", "dist_eps", "stereo_cos_tol"});
    read_field(e, "iterations", cfg.e3fp.iterations, "e3fp");
    read_field(e, "radius_step", cfg.e3fp.radius_step, "e3fp");
    read_field(e, "vocab_size", cfg.e3fp.vocab_size, "e3fp");
    read_field(e, "dist_eps", cfg.e3fp.dist_eps, "e3fp");
    read_field(e, "stereo_cos_tol", cfg.e3fp.stereo_cos_tol, "e3fp");
  }
  if (doc.contains("encoder")) {
    const json& e = doc["encoder"];
    check_keys(e, "encoder",
               {"image", "patch", "window", "width", "local_layers", "global_layers", "heads",
                "positional_embedding"});
    read_field(e, "image", cfg.encoder.image, "encoder");
    read_field(e, "patch", cfg.encoder.patch, "encoder");
    read_field(e, "window", cfg.encoder.window, "encoder");
    read_field(e, "width", cfg.encoder.width, "encoder");
    read_field(e, "local_layers", cfg.encoder.local_layers, "encoder");
    read_field(e, "global_layers", cfg.encoder.global_layers, "encoder");
    read_field(e, "heads", cfg.encoder.heads, "encoder");
    read_field(e, "positional_embedding", cfg.encoder.positional_embedding, "encoder");
  }
  std::optional<std::size_t> d_v, proj_d_s;
  if (doc.contains("projector")) {
    const json& p = doc["projector"];
    check_keys(p, "projector", {"d_v", "d_s", "d_h", "d_ff", "heads"});
    std::size_t v = 0;
    if (p.contains("d_v")) read_field(p, "d_v", v, "projector"), d_v = v;
    if (p.contains("d_s")) read_field(p, "d_s", v, "projector"), proj_d_s = v;
    read_field(p, "d_h", cfg.projector.d_h, "projector");
    cfg.projector.d_ff = 4 * cfg.projector.d_h;
    read_field(p, "d_ff", cfg.projector.d_ff, "projector");
    read_field(p, "heads", cfg.projector.heads, "projector");
  }
  if (doc.contains("decoder")) {
    const json& d = doc["decoder"];
    check_keys(d, "decoder", {"vocab_size", "layers", "heads", "t_max", "stop_id", "prompt"});
    read_field(d, "vocab_size", cfg.decoder.vocab_size, "decoder");
    read_field(d, "layers", cfg.decoder.layers, "decoder");
    read_field(d, "heads", cfg.decoder.heads, "decoder");
    read_field(d, "t_max", cfg.decode.t_max, "decoder");
    read_field(d, "stop_id", cfg.decode.stop_id, "decoder");
    if (d.contains("prompt")) {
      if (!d["prompt"].is_array()) throw SchemaError("decoder.prompt must be an array");
      cfg.decode.prompt.clear();
      for (const json& id : d["prompt"]) {
        if (!id.is_number_unsigned()) throw SchemaError("decoder.prompt holds a non-id value");
        cfg.decode.prompt.push_back(id.get<std::size_t>());
      }
    }
  }
  cfg.resolve();
  if (d_v && *d_v != cfg.projector.d_v) {
    throw SchemaError("projector.d_v " + std::to_string(*d_v) + " != 2 x encoder.width " +
                      std::to_string(cfg.projector.d_v));
  }
  if (proj_d_s && *proj_d_s != cfg.d_s) {
    throw SchemaError("projector.d_s " + std::to_string(*proj_d_s) + " != d_s " +
                      std::to_string(cfg.d_s));
  }
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  return parse_pipeline_config(io::read_file(path));
}

std::vector<std::string> ShapeTrace::lines() const {
  const std::string vis = std::to_string(m) + "x" + std::to_string(d_v);
  const std::string fused = std::to_string(m) + "x" + std::to_string(d_h);
  return {
      "N = " + std::to_string(n),
      "M = " + std::to_string(m),
      "H_vis = " + vis,
      "H_fused = " + fused,
      "trace: " + std::to_string(n) + " -> " + std::to_string(m) + " -> " + vis + " -> " + fused,
  };
}

ShapeTrace shape_trace(const PipelineConfig& cfg) {
  return {cfg.encoder.token_count(), cfg.encoder.compressed_count(), cfg.encoder.fused_width(),
          cfg.projector.d_h};
}

namespace {

TokenVocabulary build_vocabulary(const PipelineConfig& cfg) {
  if (cfg.vocabulary_path.empty()) return TokenVocabulary(default_selfies_alphabet());
  return TokenVocabulary::load(cfg.vocabulary_path);
}

}  // namespace

Pipeline::Pipeline(PipelineConfig cfg)
    : cfg_(std::move(cfg)),
      vocab_(build_vocabulary(cfg_)),
      table_1d_(vocab_.size(), cfg_.d_s, cfg_.seeds.get("embed_1d")),
      table_3d_(cfg_.e3fp.vocab_size, cfg_.d_s, cfg_.seeds.get("embed_3d")) {}

const DeepEncoder& Pipeline::encoder() const {
  std::call_once(encoder_once_, [&] { encoder_ = std::make_unique<DeepEncoder>(cfg_.encoder); });
  return *encoder_;
}

const ProjectorParams<float>& Pipeline::projector() const {
  std::call_once(projector_once_, [&] {
    projector_ = std::make_unique<ProjectorParams<float>>(
        ProjectorParams<float>::seeded(cfg_.projector));
  });
  return *projector_;
}

const ToyDecoder& Pipeline::decoder() const {
  std::call_once(decoder_once_, [&] { decoder_ = std::make_unique<ToyDecoder>(cfg_.decoder); });
  return *decoder_;
}

FingerprintTable Pipeline::fingerprint(const Conformer& conformer) const {
  return molgeom::fingerprint(conformer, cfg_.e3fp);
}

StructuralSequence Pipeline::tokenize(const Conformer& conformer) const {
  if (conformer.selfies().empty()) throw SchemaError("molecule document has no \"selfies\" field");
  const ParsedSelfies parsed = parse_selfies(conformer.selfies());
  align_phi(parsed, conformer);
  if (cfg_.fusion_mode == FusionMode::kNo3d) {
    return no3d_sequence(parsed.tokens, vocab_, table_1d_, cfg_.l_max);
  }
  return fuse_sequence(parsed.tokens, fingerprint(conformer), vocab_, table_1d_, table_3d_,
                       cfg_.l_max);
}

ImageTensor Pipeline::synthetic_image() const {
  return molgeom::synthetic_image(cfg_.encoder.image, cfg_.seeds.get("image"));
}

TokenMatrix Pipeline::encode(const ImageTensor& image) const {
  return encoder().forward(image).visual;
}

TokenMatrix Pipeline::fuse(const TokenMatrix& h_vis, const StructuralSequence& seq) const {
  if (h_vis.rows() != cfg_.encoder.compressed_count() || h_vis.cols() != cfg_.projector.d_v) {
    throw ShapeError("H_vis is " + std::to_string(h_vis.rows()) + "x" +
                     std::to_string(h_vis.cols()) + ", config expects " +
                     std::to_string(cfg_.encoder.compressed_count()) + "x" +
                     std::to_string(cfg_.projector.d_v));
  }
  if (cfg_.fusion_mode == FusionMode::kConcat) {
    return concat_baseline(h_vis, seq.s, std::span<const float>(seq.mask), projector());
  }
  return projector_forward(h_vis, seq.s, std::span<const float>(seq.mask), projector(),
                           cfg_.projector.heads);
}

std::vector<std::size_t> Pipeline::decode(const TokenMatrix& h_fused) const {
  const ToyDecoder& dec = decoder();
  const DecoderState state =
      dec.start(h_fused, PromptTokens{cfg_.decode.prompt, cfg_.decoder.vocab_size});
  return greedy_decode(state, dec, cfg_.decode.t_max, cfg_.decode.stop_id);
}

}  // namespace molgeom
