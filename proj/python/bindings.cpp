#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "molgeom/cli.hpp"
#include "molgeom/e3fp.hpp"
#include "molgeom/elements.hpp"
#include "molgeom/errors.hpp"
#include "molgeom/pipeline.hpp"
#include "molgeom/projector.hpp"
#include "molgeom/selfies.hpp"

namespace py = pybind11;
using namespace molgeom;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

TokenMatrix to_matrix(const FloatArray& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return TokenMatrix(rows, cols, std::vector<float>(a.data(), a.data() + rows * cols));
}

FloatArray to_array(const TokenMatrix& m) {
  FloatArray out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

PipelineConfig config_from(const std::string& config_json) {
  if (config_json.empty()) {
    PipelineConfig cfg;
    cfg.resolve();
    return cfg;
  }
  return parse_pipeline_config(config_json);
}

}  // namespace

PYBIND11_MODULE(_molgeom, m) {
  m.doc() = "molgeom core bindings";

  static py::exception<Error> base(m, "MolgeomError");
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
  py::register_exception<GeometryError>(m, "GeometryError", base.ptr());
  py::register_exception<GrammarError>(m, "GrammarError", base.ptr());
  py::register_exception<UnsupportedTokenError>(m, "UnsupportedTokenError", base.ptr());
  py::register_exception<MismatchError>(m, "MismatchError", base.ptr());
  py::register_exception<LengthError>(m, "LengthError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<DegenerateMaskError>(m, "DegenerateMaskError", base.ptr());

  m.def("murmur3_32", [](py::bytes data, std::uint32_t seed) {
    return murmur3_32(std::string_view(data), seed);
  }, py::arg("data"), py::arg("seed") = 0);

  m.def("parse_selfies", [](const std::string& s) {
    const ParsedSelfies p = parse_selfies(s);
    std::vector<std::string> elements;
    std::vector<int> numbers, charges, h_counts;
    std::vector<bool> in_ring;
    for (const Atom& a : p.graph.atoms()) {
      elements.emplace_back(element_symbol(a.element));
      numbers.push_back(a.element);
      charges.push_back(a.formal_charge);
      h_counts.push_back(a.h_count);
      in_ring.push_back(a.in_ring);
    }
    py::dict out;
    out["atomic_numbers"] = numbers;
    out["charges"] = charges;
    out["h_counts"] = h_counts;
    out["in_ring"] = in_ring;
    out["tokens"] = p.tokens.tokens;
    out["atom_positions"] = p.tokens.atom_positions;
    out["elements"] = elements;
    std::vector<std::tuple<std::size_t, std::size_t, int>> bonds;
    for (const Bond& b : p.graph.bonds()) bonds.emplace_back(b.a, b.b, static_cast<int>(b.order));
    out["bonds"] = bonds;
    return out;
  }, py::arg("selfies"));

  m.def("fingerprint", [](const std::string& conformer_json, int iterations, double radius_step,
                          std::uint32_t vocab_size) {
    E3fpConfig cfg;
    cfg.iterations = iterations;
    cfg.radius_step = radius_step;
    cfg.vocab_size = vocab_size;
    const FingerprintTable t = fingerprint(parse_conformer(conformer_json), cfg);
    std::vector<std::vector<std::uint32_t>> raw(t.atoms()), folded(t.atoms());
    for (std::size_t i = 0; i < t.atoms(); ++i) {
      for (std::size_t j = 0; j < t.levels(); ++j) {
        raw[i].push_back(t.raw(i, j));
        folded[i].push_back(t.folded(i, j));
      }
    }
    return py::make_tuple(raw, folded);
  }, py::arg("conformer_json"), py::arg("iterations") = 5, py::arg("radius_step") = 1.718,
     py::arg("vocab_size") = 4096);

  m.def("tokenize", [](const std::string& conformer_json, const std::string& config_json) {
    const Pipeline p(config_from(config_json));
    const StructuralSequence seq = p.tokenize(parse_conformer(conformer_json));
    return py::make_tuple(to_array(seq.s), seq.mask, seq.length);
  }, py::arg("conformer_json"), py::arg("config_json") = "");

  m.def("shape_trace", [](const std::string& config_json, bool full_scale) {
    const PipelineConfig cfg = full_scale ? PipelineConfig::full_scale() : config_from(config_json);
    const ShapeTrace t = shape_trace(cfg);
    py::dict out;
    out["N"] = t.n;
    out["M"] = t.m;
    out["H_vis"] = py::make_tuple(t.m, t.d_v);
    out["H_fused"] = py::make_tuple(t.m, t.d_h);
    return out;
  }, py::arg("config_json") = "", py::arg("full_scale") = false);

  m.def("projector_forward", [](const FloatArray& hvis, const FloatArray& s,
                                const std::vector<float>& mask, std::size_t d_h, std::size_t heads,
                                std::uint64_t seed, const std::string& mode) {
    const TokenMatrix hv = to_matrix(hvis);
    const TokenMatrix sm = to_matrix(s);
    ProjectorConfig cfg;
    cfg.d_v = hv.cols();
    cfg.d_s = sm.cols();
    cfg.d_h = d_h;
    cfg.d_ff = 4 * d_h;
    cfg.heads = heads;
    cfg.seed = seed;
    const auto params = ProjectorParams<float>::seeded(cfg);
    if (parse_fusion_mode(mode) == FusionMode::kConcat) {
      return to_array(concat_baseline(hv, sm, std::span<const float>(mask), params));
    }
    return to_array(projector_forward(hv, sm, std::span<const float>(mask), params, heads));
  }, py::arg("hvis"), py::arg("s"), py::arg("mask"), py::arg("d_h") = 16, py::arg("heads") = 2,
     py::arg("seed") = 1, py::arg("mode") = "cross_attention");

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"));
}
