#include "molgeom/molgraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "molgeom/errors.hpp"

namespace molgeom {

using nlohmann::json;

MoleculeGraph::MoleculeGraph(std::vector<Atom> atoms, std::vector<Bond> bonds)
    : atoms_(std::move(atoms)), bonds_(std::move(bonds)), adjacency_(atoms_.size()) {
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (atoms_[i].element < 1) {
      throw SchemaError("atom " + std::to_string(i) + ": element must be >= 1");
    }
    if (atoms_[i].h_count < 0) {
      throw SchemaError("atom " + std::to_string(i) + ": h_count must be >= 0");
    }
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t e = 0; e < bonds_.size(); ++e) {
    const Bond& bond = bonds_[e];
    if (bond.a >= atoms_.size() || bond.b >= atoms_.size()) {
      throw IndexError("bond " + std::to_string(e) + " references atom out of range");
    }
    if (bond.a == bond.b) {
      throw SchemaError("bond " + std::to_string(e) + " joins an atom to itself");
    }
    if (!seen.emplace(std::min(bond.a, bond.b), std::max(bond.a, bond.b)).second) {
      throw SchemaError("bond " + std::to_string(e) + " duplicates an earlier bond");
    }
    adjacency_[bond.a].push_back({bond.b, e});
    adjacency_[bond.b].push_back({bond.a, e});
  }
}

std::optional<BondOrder> MoleculeGraph::bond_between(std::size_t i, std::size_t k) const {
  for (const Neighbor& n : adjacency_.at(i)) {
    if (n.atom == k) return bonds_[n.bond].order;
  }
  return std::nullopt;
}

std::vector<bool> MoleculeGraph::ring_atoms() const {
  // A bond lies on a cycle iff its endpoints stay connected without it.
  std::vector<bool> ring(atoms_.size(), false);
  std::vector<std::size_t> stack;
  std::vector<bool> visited;
  for (std::size_t e = 0; e < bonds_.size(); ++e) {
    const Bond& skip = bonds_[e];
    visited.assign(atoms_.size(), false);
    stack.assign(1, skip.a);
    visited[skip.a] = true;
    bool reached = false;
    while (!stack.empty() && !reached) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      for (const Neighbor& n : adjacency_[cur]) {
        if (n.bond == e || visited[n.atom]) continue;
        if (n.atom == skip.b) {
          reached = true;
          break;
        }
        visited[n.atom] = true;
        stack.push_back(n.atom);
      }
    }
    if (reached) ring[skip.a] = ring[skip.b] = true;
  }
  return ring;
}

Conformer::Conformer(MoleculeGraph graph, std::vector<Vec3> coords, std::string selfies)
    : graph_(std::move(graph)), coords_(std::move(coords)), selfies_(std::move(selfies)) {
  if (coords_.size() != graph_.size()) {
    throw SchemaError("coords has " + std::to_string(coords_.size()) + " rows for " +
                      std::to_string(graph_.size()) + " atoms");
  }
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    for (double v : coords_[i]) {
      if (!std::isfinite(v)) {
        throw GeometryError("atom " + std::to_string(i) + " has a non-finite coordinate");
      }
    }
  }
  constexpr double kMinSq = kMinAtomSeparation * kMinAtomSeparation;
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    for (std::size_t k = i + 1; k < coords_.size(); ++k) {
      double sq = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = coords_[i][c] - coords_[k][c];
        sq += d * d;
      }
      if (sq < kMinSq) {
        throw GeometryError("atoms " + std::to_string(i) + " and " + std::to_string(k) +
                            " are closer than 0.1 A");
      }
    }
  }
}

namespace {

void require_keys(const json& obj, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional, const std::string& where) {
  if (!obj.is_object()) throw SchemaError(where + ": expected an object");
  for (const char* key : required) {
    if (!obj.contains(key)) throw SchemaError(where + ": missing field '" + key + "'");
  }
  for (const auto& [key, value] : obj.items()) {
    const auto matches = [&](const char* k) { return key == k; };
    if (std::none_of(required.begin(), required.end(), matches) &&
        std::none_of(optional.begin(), optional.end(), matches)) {
      throw SchemaError(where + ": unknown field '" + key + "'");
    }
  }
}

int get_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw SchemaError(where + ": expected an integer");
  return v.get<int>();
}

std::size_t get_index(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw SchemaError(where + ": expected an integer");
  const auto raw = v.get<long long>();
  if (raw < 0) throw IndexError(where + ": negative atom index");
  return static_cast<std::size_t>(raw);
}

BondOrder parse_order(const json& v, const std::string& where) {
  if (v.is_string() && v.get<std::string>() == "ar") return BondOrder::kAromatic;
  if (v.is_number_integer()) {
    const int o = v.get<int>();
    if (o >= 1 && o <= 3) return static_cast<BondOrder>(o);
  }
  throw SchemaError(where + ": order must be 1, 2, 3 or \"ar\"");
}

Wedge parse_wedge(const json& v, const std::string& where) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "none") return Wedge::kNone;
    if (s == "up") return Wedge::kUp;
    if (s == "down") return Wedge::kDown;
  }
  throw SchemaError(where + ": wedge must be \"none\", \"up\" or \"down\"");
}

}  // namespace

Conformer parse_conformer(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
  require_keys(doc, {"atoms", "bonds", "coords"}, {"selfies"}, "document");
  if (!doc["atoms"].is_array()) throw SchemaError("atoms: expected an array");
  if (!doc["bonds"].is_array()) throw SchemaError("bonds: expected an array");
  if (!doc["coords"].is_array()) throw SchemaError("coords: expected an array");

  std::vector<Atom> atoms;
  for (std::size_t i = 0; i < doc["atoms"].size(); ++i) {
    const json& a = doc["atoms"][i];
    const std::string where = "atoms[" + std::to_string(i) + "]";
    require_keys(a, {"z", "charge", "h", "ring"}, {}, where);
    if (!a["ring"].is_boolean()) throw SchemaError(where + ".ring: expected a boolean");
    atoms.push_back(Atom{get_int(a["z"], where + ".z"), get_int(a["charge"], where + ".charge"),
                         get_int(a["h"], where + ".h"), a["ring"].get<bool>()});
  }

  std::vector<Bond> bonds;
  for (std::size_t e = 0; e < doc["bonds"].size(); ++e) {
    const json& b = doc["bonds"][e];
    const std::string where = "bonds[" + std::to_string(e) + "]";
    require_keys(b, {"a", "b", "order", "wedge"}, {}, where);
    bonds.push_back(Bond{get_index(b["a"], where + ".a"), get_index(b["b"], where + ".b"),
                         parse_order(b["order"], where + ".order"),
                         parse_wedge(b["wedge"], where + ".wedge")});
  }

  std::vector<Vec3> coords;
  for (std::size_t i = 0; i < doc["coords"].size(); ++i) {
    const json& row = doc["coords"][i];
    const std::string where = "coords[" + std::to_string(i) + "]";
    if (!row.is_array() || row.size() != 3) throw SchemaError(where + ": expected [x, y, z]");
    Vec3 xyz{};
    for (std::size_t c = 0; c < 3; ++c) {
      if (!row[c].is_number()) throw SchemaError(where + ": expected numbers");
      xyz[c] = row[c].get<double>();
    }
    coords.push_back(xyz);
  }

  std::string selfies;
  if (doc.contains("selfies")) {
    if (!doc["selfies"].is_string()) throw SchemaError("selfies: expected a string");
    selfies = doc["selfies"].get<std::string>();
  }

  MoleculeGraph graph(std::move(atoms), std::move(bonds));
  return Conformer(std::move(graph), std::move(coords), std::move(selfies));
}

Conformer load_conformer(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_conformer(buf.str());
}

std::string conformer_to_json(const Conformer& conformer) {
  nlohmann::ordered_json doc;
  doc["atoms"] = nlohmann::ordered_json::array();
  for (const Atom& a : conformer.graph().atoms()) {
    doc["atoms"].push_back(
        {{"z", a.element}, {"charge", a.formal_charge}, {"h", a.h_count}, {"ring", a.in_ring}});
  }
  doc["bonds"] = nlohmann::ordered_json::array();
  for (const Bond& b : conformer.graph().bonds()) {
    nlohmann::ordered_json entry;
    entry["a"] = b.a;
    entry["b"] = b.b;
    if (b.order == BondOrder::kAromatic) {
      entry["order"] = "ar";
    } else {
      entry["order"] = static_cast<int>(b.order);
    }
    entry["wedge"] = b.wedge == Wedge::kUp ? "up" : b.wedge == Wedge::kDown ? "down" : "none";
    doc["bonds"].push_back(entry);
  }
  doc["coords"] = nlohmann::ordered_json::array();
  for (const Vec3& x : conformer.coords()) doc["coords"].push_back({x[0], x[1], x[2]});
  if (!conformer.selfies().empty()) doc["selfies"] = conformer.selfies();
  return doc.dump();
}

}  // namespace molgeom
