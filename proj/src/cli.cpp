#include "molgeom/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <thread>

#include "molgeom/binary_io.hpp"
#include "molgeom/errors.hpp"
#include "molgeom/pipeline.hpp"

namespace molgeom::cli {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const GeometryError*>(&e)) return kGeometry;
  if (dynamic_cast<const LengthError*>(&e)) return kLength;
  if (dynamic_cast<const MismatchError*>(&e) || dynamic_cast<const UnknownTokenError*>(&e)) {
    return kMismatch;
  }
  if (dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const DegenerateMaskError*>(&e) ||
      dynamic_cast<const CacheMismatchError*>(&e) || dynamic_cast<const IoError*>(&e)) {
    return kShape;
  }
  return kSchema;
}

namespace {

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const SchemaError*>(&e)) return "schema error";
  if (dynamic_cast<const GeometryError*>(&e)) return "geometry error";
  if (dynamic_cast<const IndexError*>(&e)) return "index error";
  if (dynamic_cast<const GrammarError*>(&e)) return "grammar error";
  if (dynamic_cast<const UnsupportedTokenError*>(&e)) return "unsupported token";
  if (dynamic_cast<const MismatchError*>(&e)) return "mismatch";
  if (dynamic_cast<const UnknownTokenError*>(&e)) return "unknown token";
  if (dynamic_cast<const LengthError*>(&e)) return "length error";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape error";
  if (dynamic_cast<const DegenerateMaskError*>(&e)) return "degenerate mask";
  if (dynamic_cast<const CacheMismatchError*>(&e)) return "cache mismatch";
  if (dynamic_cast<const IoError*>(&e)) return "i/o error";
  return "error";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool shapes_only = false;
  bool decode = false;
  std::string fusion_mode;
  std::string image;
  bool synthetic = false;
  std::string hvis;
  std::string input;
};

PipelineConfig load_config(const Options& o) {
  PipelineConfig cfg = o.config_path.empty() ? PipelineConfig{} : load_pipeline_config(o.config_path);
  if (o.seed) cfg.seeds.base = *o.seed;
  if (!o.fusion_mode.empty()) cfg.fusion_mode = parse_fusion_mode(o.fusion_mode);
  cfg.resolve();
  return cfg;
}

struct JobResult {
  int code = kOk;
  std::string out;
  std::string err;
};

// One molecule document in, artifacts written under `base`.
using Job = std::function<void(const std::string& input, const std::string& base, std::ostream& out)>;

std::size_t thread_budget() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MOLGEOM_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) n = v;
  }
  return n;
}

JobResult run_job(const Job& job, const std::string& input, const std::string& base) {
  JobResult r;
  std::ostringstream out;
  try {
    job(input, base, out);
  } catch (const std::exception& e) {
    r.code = exit_code_for(e);
    r.err = "molgeom: " + input + ": " + error_kind(e) + ": " + e.what() + "\n";
  }
  r.out = out.str();
  return r;
}

// A file input writes to `out` directly. A directory input processes every
// *.json inside, sorted by name, with bounded parallelism, and writes to
// out/<stem><suffix>; reports and the exit code follow input order.
int run_inputs(const Options& o, const std::string& suffix, const Job& job, std::ostream& out,
               std::ostream& err) {
  if (!fs::is_directory(o.input)) {
    const JobResult r = run_job(job, o.input, o.out);
    out << r.out;
    err << r.err;
    return r.code;
  }
  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(o.input)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec || !fs::is_directory(o.out)) {
    err << "molgeom: cannot create output directory " << o.out << "\n";
    return kShape;
  }
  std::vector<JobResult> results(inputs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      const std::string base = (fs::path(o.out) / inputs[i].stem()).string() + suffix;
      results[i] = run_job(job, inputs[i].string(), base);
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n = std::min(thread_budget(), std::max<std::size_t>(inputs.size(), 1));
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  int code = kOk;
  for (const JobResult& r : results) {
    out << r.out;
    err << r.err;
    if (code == kOk) code = r.code;
  }
  return code;
}

void write_text(const std::string& path, const std::string& text) { io::write_file(path, text); }

void write_blocks(const std::string& path, const std::vector<io::TensorBlock>& blocks) {
  std::ostringstream buf;
  io::write_checkpoint(buf, blocks);
  io::write_file(path, buf.str());
}

void print_trace(const PipelineConfig& cfg, std::ostream& out) {
  for (const std::string& line : shape_trace(cfg).lines()) out << line << "\n";
}

ImageTensor pick_image(const Pipeline& p, const Options& o) {
  return o.synthetic ? p.synthetic_image() : load_image(o.image);
}

std::string tokens_json(const std::vector<std::size_t>& tokens) {
  nlohmann::ordered_json doc;
  doc["decoder"] = "greedy";
  doc["tokens"] = tokens;
  return doc.dump() + "\n";
}

TokenMatrix read_hvis(const std::string& path) {
  for (io::TensorBlock& b : io::load_checkpoint(path)) {
    if (b.name == "H_vis") return std::move(b.value);
  }
  throw SchemaError(path + " has no H_vis block");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"molgeom: molecular fingerprints, structural sequences and fused encodings"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "pipeline config JSON");
    sub->add_option("--seed", o.seed, "base seed for every seeded module");
  };

  CLI::App* fp = app.add_subcommand("fingerprint", "per-atom E3FP identifiers as JSON");
  common(fp);
  fp->add_option("input", o.input, "conformer JSON or a directory of them")->required();
  fp->add_option("--out", o.out, "output file (directory for directory input)")->required();

  CLI::App* tok = app.add_subcommand("tokenize", "padded structural sequence plus mask sidecar");
  common(tok);
  tok->add_option("input", o.input, "conformer JSON with a selfies field, or a directory")->required();
  tok->add_option("--out", o.out, "output prefix (directory for directory input)")->required();
  tok->add_option("--fusion-mode", o.fusion_mode, "cross_attention | concat | no3d");

  CLI::App* enc = app.add_subcommand("encode", "image encoder forward, writes H_vis");
  common(enc);
  enc->add_option("--image", o.image, "P6 PPM or MGIM raw tensor");
  enc->add_flag("--synthetic", o.synthetic, "seeded random image");
  enc->add_option("--out", o.out, "checkpoint file");
  enc->add_flag("--shapes-only", o.shapes_only, "print the shape trace only");

  CLI::App* fu = app.add_subcommand("fuse", "projector forward on a stored H_vis");
  common(fu);
  fu->add_option("input", o.input, "conformer JSON with a selfies field, or a directory")->required();
  fu->add_option("--hvis", o.hvis, "checkpoint holding an H_vis block")->required();
  fu->add_option("--out", o.out, "checkpoint file (directory for directory input)")->required();
  fu->add_option("--fusion-mode", o.fusion_mode, "cross_attention | concat | no3d");

  CLI::App* pl = app.add_subcommand("pipeline", "image + molecule -> H_fused (and tokens)");
  common(pl);
  pl->add_option("input", o.input, "conformer JSON with a selfies field, or a directory");
  pl->add_option("--image", o.image, "P6 PPM or MGIM raw tensor");
  pl->add_flag("--synthetic", o.synthetic, "seeded random image");
  pl->add_option("--out", o.out, "checkpoint file (directory for directory input)");
  pl->add_flag("--shapes-only", o.shapes_only, "print the shape trace only");
  pl->add_flag("--decode", o.decode, "greedy-decode tokens to <out>.tokens.json");
  pl->add_option("--fusion-mode", o.fusion_mode, "cross_attention | concat | no3d");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const auto usage = [&](const std::string& msg) {
    err << "molgeom: " << msg << "\n";
    return kUsage;
  };

  try {
    const PipelineConfig cfg = load_config(o);

    if (fp->parsed()) {
      const Pipeline p(cfg);
      return run_inputs(o, ".fp.json",
                        [&](const std::string& in, const std::string& base, std::ostream&) {
                          write_text(base, fingerprint_to_json(p.fingerprint(load_conformer(in))) + "\n");
                        },
                        out, err);
    }

    if (tok->parsed()) {
      const Pipeline p(cfg);
      return run_inputs(o, "",
                        [&](const std::string& in, const std::string& base, std::ostream& log) {
                          const StructuralSequence seq = p.tokenize(load_conformer(in));
                          std::ostringstream bin;
                          write_sequence_binary(bin, seq);
                          io::write_file(base + ".seq", bin.str());
                          write_text(base + ".mask.json", mask_sidecar_json(seq) + "\n");
                          log << in << ": L = " << seq.length << ", L_max = " << seq.l_max() << "\n";
                        },
                        out, err);
    }

    if (enc->parsed()) {
      print_trace(cfg, out);
      if (o.shapes_only) return kOk;
      if (o.synthetic == !o.image.empty()) return usage("encode needs exactly one of --image, --synthetic");
      if (o.out.empty()) return usage("encode needs --out");
      const Pipeline p(cfg);
      const TokenMatrix h_vis = p.encode(pick_image(p, o));
      write_blocks(o.out, {{"H_vis", h_vis}});
      out << "H_vis checksum = " << hex64(checksum(h_vis.data())) << "\n";
      return kOk;
    }

    if (fu->parsed()) {
      const Pipeline p(cfg);
      const TokenMatrix h_vis = read_hvis(o.hvis);
      return run_inputs(o, ".ckpt",
                        [&](const std::string& in, const std::string& base, std::ostream& log) {
                          const TokenMatrix fused = p.fuse(h_vis, p.tokenize(load_conformer(in)));
                          write_blocks(base, {{"H_fused", fused}});
                          log << in << ": H_fused " << fused.rows() << "x" << fused.cols()
                              << " checksum = " << hex64(checksum(fused.data())) << "\n";
                        },
                        out, err);
    }

    // pipeline
    print_trace(cfg, out);
    out << "fusion_mode = " << fusion_mode_name(cfg.fusion_mode) << "\n";
    if (o.shapes_only) return kOk;
    if (o.input.empty()) return usage("pipeline needs a molecule input");
    if (o.out.empty()) return usage("pipeline needs --out");
    if (o.synthetic == !o.image.empty()) return usage("pipeline needs exactly one of --image, --synthetic");
    const Pipeline p(cfg);
    TokenMatrix h_vis;
    try {
      h_vis = p.encode(pick_image(p, o));
    } catch (const std::exception& e) {
      err << "molgeom: " << (o.synthetic ? "synthetic image" : o.image) << ": " << error_kind(e)
          << ": " << e.what() << "\n";
      return exit_code_for(e);
    }
    out << "H_vis checksum = " << hex64(checksum(h_vis.data())) << "\n";
    return run_inputs(o, ".ckpt",
                      [&](const std::string& in, const std::string& base, std::ostream& log) {
                        const TokenMatrix fused = p.fuse(h_vis, p.tokenize(load_conformer(in)));
                        write_blocks(base, {{"H_fused", fused}});
                        log << in << ": H_fused " << fused.rows() << "x" << fused.cols()
                            << " checksum = " << hex64(checksum(fused.data())) << "\n";
                        if (o.decode) write_text(base + ".tokens.json", tokens_json(p.decode(fused)));
                      },
                      out, err);
  } catch (const std::exception& e) {
    err << "molgeom: " << error_kind(e) << ": " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace molgeom::cli
