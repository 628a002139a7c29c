#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace molgeom {

enum class BondOrder : std::uint8_t {
  kSingle = 1,
  kDouble = 2,
  kTriple = 3,
  kAromatic = 4,
};

enum class Wedge : std::uint8_t { kNone, kUp, kDown };

// A heavy atom. Hydrogens are never stored as atoms; h_count carries them.
struct Atom {
  int element = 6;
  int formal_charge = 0;
  int h_count = 0;
  bool in_ring = false;

  bool operator==(const Atom&) const = default;
};

struct Bond {
  std::size_t a = 0;
  std::size_t b = 0;
  BondOrder order = BondOrder::kSingle;
  Wedge wedge = Wedge::kNone;

  bool operator==(const Bond&) const = default;
};

struct Neighbor {
  std::size_t atom;
  std::size_t bond;
};

// Heavy-atom graph. Construction validates: every bond endpoint in range
// (IndexError), no self bonds and at most one bond per pair (SchemaError),
// element >= 1 and h_count >= 0 (SchemaError).
class MoleculeGraph {
 public:
  MoleculeGraph() = default;
  MoleculeGraph(std::vector<Atom> atoms, std::vector<Bond> bonds);

  std::size_t size() const { return atoms_.size(); }
  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  const Atom& atom(std::size_t i) const { return atoms_.at(i); }
  std::span<const Neighbor> neighbors(std::size_t i) const { return adjacency_.at(i); }

  std::optional<BondOrder> bond_between(std::size_t i, std::size_t k) const;

  // Ring membership computed from the topology (an atom is in a ring iff one
  // of its bonds is not a bridge). Independent of the stored in_ring flags.
  std::vector<bool> ring_atoms() const;

  bool operator==(const MoleculeGraph& other) const {
    return atoms_ == other.atoms_ && bonds_ == other.bonds_;
  }

 private:
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

using Vec3 = std::array<double, 3>;

inline constexpr double kMinAtomSeparation = 0.1;  // Å

// Heavy-atom graph plus one coordinate row per atom (Å). Immutable.
class Conformer {
 public:
  // Throws GeometryError for non-finite coordinates or two atoms closer than
  // kMinAtomSeparation, SchemaError when the coordinate count is wrong.
  Conformer(MoleculeGraph graph, std::vector<Vec3> coords, std::string selfies = {});

  const MoleculeGraph& graph() const { return graph_; }
  const std::vector<Vec3>& coords() const { return coords_; }
  const std::string& selfies() const { return selfies_; }
  std::size_t size() const { return graph_.size(); }

  bool operator==(const Conformer&) const = default;

 private:
  MoleculeGraph graph_;
  std::vector<Vec3> coords_;
  std::string selfies_;
};

// Parses the conformer JSON document. Indices in the file are 0-based and
// stay 0-based in memory.
Conformer parse_conformer(std::string_view document);
Conformer load_conformer(const std::string& path);

// Serializes back to the document schema (used by fixtures and the Python
// bindings).
std::string conformer_to_json(const Conformer& conformer);

}  // namespace molgeom
