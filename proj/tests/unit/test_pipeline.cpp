#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "molgeom/binary_io.hpp"
#include "molgeom/cli.hpp"
#include "molgeom/errors.hpp"
#include "molgeom/pipeline.hpp"
#include "unit/helpers.hpp"

using namespace molgeom;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("molgeom_unit_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string config(const std::string& name) { return std::string(MOLGEOM_CONFIG_DIR) + "/" + name; }
std::string desk() { return config("desk.json"); }

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config parsing is strict") {
  CHECK_NOTHROW(parse_pipeline_config(R"({"version":1})"));
  CHECK_THROWS_AS(parse_pipeline_config(R"({})"), SchemaError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"version":2})"), SchemaError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"version":1,"colour":1})"), SchemaError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"version":1,"l_max":"64"})"), SchemaError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"version":1,"encoder":{"widht":8}})"), SchemaError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"version":1,"projector":{"d_v":10}})"), SchemaError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"version":1,"fusion_mode":"sum"})"), SchemaError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"version":1,"decoder":{"prompt":[99]}})"), SchemaError);
  CHECK_THROWS_AS(parse_pipeline_config("{"), SchemaError);

  const PipelineConfig cfg = parse_pipeline_config(
      R"({"version":1,"fusion_mode":"no3d","d_s":32,"seeds":{"base":3,"projector":11}})");
  CHECK(cfg.fusion_mode == FusionMode::kNo3d);
  CHECK(cfg.projector.d_s == 32);
  CHECK(cfg.projector.d_v == 2 * cfg.encoder.width);
  CHECK(cfg.decoder.width == cfg.projector.d_h);
  CHECK(cfg.projector.seed == 11);
  CHECK(cfg.encoder.seed == derive_seed(3, "encoder"));
}

TEST_CASE("shape traces") {
  const ShapeTrace full = shape_trace(PipelineConfig::full_scale());
  CHECK(full.n == 4096);
  CHECK(full.m == 256);
  CHECK(full.d_v == 2048);
  CHECK(full.d_h == 4096);
  const auto lines = full.lines();
  CHECK(std::find(lines.begin(), lines.end(), "H_fused = 256x4096") != lines.end());
  CHECK(shape_trace(load_pipeline_config(config("full_scale.json"))).d_h == 4096);
  const ShapeTrace d = shape_trace(load_pipeline_config(desk()));
  CHECK(d.n == 64);
  CHECK(d.m == 4);
}

TEST_CASE("end to end on the desk config") {
  const Pipeline p(load_pipeline_config(desk()));
  const Conformer c = testing::fixture("conformers/mol15.json");
  const StructuralSequence seq = p.tokenize(c);
  CHECK(seq.l_max() == p.config().l_max);
  const TokenMatrix h_vis = p.encode(p.synthetic_image());
  CHECK(h_vis.rows() == 4);
  const TokenMatrix fused = p.fuse(h_vis, seq);
  CHECK(fused.rows() == 4);
  CHECK(fused.cols() == p.config().projector.d_h);
  const auto tokens = p.decode(fused);
  CHECK(tokens.size() <= p.config().decode.t_max);
  CHECK_THROWS_AS(p.fuse(TokenMatrix(3, 64), seq), ShapeError);
  CHECK_THROWS_AS(p.tokenize(Conformer(c.graph(), c.coords())), SchemaError);
}

TEST_CASE("fusion modes give distinct outputs") {
  PipelineConfig base = load_pipeline_config(desk());
  const Conformer c = testing::fixture("conformers/mol13.json");
  std::vector<TokenMatrix> outs;
  for (const FusionMode m : {FusionMode::kCrossAttention, FusionMode::kConcat, FusionMode::kNo3d}) {
    PipelineConfig cfg = base;
    cfg.fusion_mode = m;
    const Pipeline p(cfg);
    outs.push_back(p.fuse(p.encode(p.synthetic_image()), p.tokenize(c)));
  }
  CHECK_FALSE(outs[0] == outs[1]);
  CHECK_FALSE(outs[0] == outs[2]);
  CHECK_FALSE(outs[1] == outs[2]);
}

TEST_CASE("cli exit codes") {
  const auto err = [](const std::string& f) { return testing::data_path("cli_errors/" + f); };
  const fs::path dir = scratch("codes");
  const std::string out = (dir / "x").string();
  CHECK(cli_run({}).code == 1);
  CHECK(cli_run({"frobnicate"}).code == 1);
  CHECK(cli_run({"fingerprint", err("malformed.json"), "--out", out}).code == 2);
  CHECK(cli_run({"fingerprint", err("unknown_key.json"), "--out", out}).code == 2);
  CHECK(cli_run({"fingerprint", err("clash.json"), "--out", out}).code == 3);
  CHECK(cli_run({"tokenize", err("long.json"), "--out", out, "--config", err("lmax4.json")}).code == 4);
  CHECK(cli_run({"tokenize", err("mismatch.json"), "--out", out}).code == 5);
  CHECK(cli_run({"tokenize", err("bad_selfies.json"), "--out", out}).code == 2);
  CHECK(cli_run({"tokenize", testing::data_path("conformers/mol03.json"), "--out", out,
                 "--config", err("bad_config.json")}).code == 2);
  const CliRun small = cli_run({"encode", "--image", err("small.mgim"), "--out", out});
  CHECK(small.code == 6);
  CHECK(small.err.find("shape error") != std::string::npos);
  CHECK(cli_run({"fingerprint", testing::data_path("conformers/mol03.json"), "--out",
                 "/nonexistent/dir/fp.json"}).code == 6);
}

TEST_CASE("cli outputs") {
  const fs::path dir = scratch("outputs");
  const std::string mol = testing::data_path("conformers/mol09.json");
  const CliRun fp = cli_run({"fingerprint", mol, "--out", (dir / "fp.json").string()});
  REQUIRE(fp.code == 0);
  const auto doc = nlohmann::json::parse(io::read_file((dir / "fp.json").string()));
  CHECK(doc["n_atoms"] == 4);

  REQUIRE(cli_run({"tokenize", mol, "--out", (dir / "mol").string()}).code == 0);
  CHECK(fs::file_size(dir / "mol.seq") == 16 + 64 * 64 * 4);
  CHECK(fs::exists(dir / "mol.mask.json"));

  const CliRun shapes = cli_run({"pipeline", "--shapes-only", "--config",
                                 config("full_scale.json")});
  CHECK(shapes.code == 0);
  CHECK(shapes.out.find("H_vis = 256x2048") != std::string::npos);

  const CliRun enc = cli_run({"encode", "--synthetic", "--out", (dir / "hvis.ckpt").string()});
  REQUIRE(enc.code == 0);
  REQUIRE(cli_run({"fuse", mol, "--hvis", (dir / "hvis.ckpt").string(), "--out",
                   (dir / "fused.ckpt").string()}).code == 0);
  const auto blocks = io::load_checkpoint((dir / "fused.ckpt").string());
  REQUIRE(blocks.size() == 1);
  CHECK(blocks[0].name == "H_fused");
  CHECK(blocks[0].value.rows() == 4);

  const CliRun pl = cli_run({"pipeline", mol, "--synthetic", "--decode", "--out", (dir / "pl.ckpt").string()});
  CHECK(pl.code == 0);
  CHECK(io::load_checkpoint((dir / "pl.ckpt").string())[0].value == blocks[0].value);
  CHECK(fs::exists(dir / "pl.ckpt.tokens.json"));
}

TEST_CASE("directory mode") {
  const fs::path dir = scratch("dir");
  const CliRun run = cli_run({"fingerprint", testing::data_path("stereo"), "--out", dir.string()});
  CHECK(run.code == 0);
  for (const char* stem : {"chiral", "chiral_mirror", "planar", "planar_mirror"}) {
    CHECK(fs::exists(dir / (std::string(stem) + ".fp.json")));
  }
  const CliRun errs = cli_run({"fingerprint", testing::data_path("cli_errors"), "--out", dir.string()});
  // bad_config.json sorts first and is not a conformer document.
  CHECK(errs.code == 2);
}

TEST_CASE("installed binary") {
  const std::string cmd = std::string(MOLGEOM_CLI_PATH) + " tokenize " +
                          testing::data_path("cli_errors/mismatch.json") + " --out " +
                          (scratch("binary") / "x").string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 5);
}

}  // TEST_SUITE
