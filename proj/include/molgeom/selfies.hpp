#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "molgeom/molgraph.hpp"

namespace molgeom {

// SELFIES token sequence with the positions that introduce heavy atoms.
// Positions are 0-based. atom_positions is strictly increasing, and the
// i-th heavy atom of the decoded graph was introduced by
// tokens[atom_positions[i]].
struct StructuralTokens {
  std::vector<std::string> tokens;
  std::vector<std::size_t> atom_positions;

  std::size_t length() const { return tokens.size(); }
  bool is_atom_position(std::size_t t) const;
};

struct ParsedSelfies {
  StructuralTokens tokens;
  MoleculeGraph graph;
};

// Splits "[A][B]..." into bracketed tokens. Throws GrammarError on unbalanced
// or stray characters.
std::vector<std::string> split_selfies(std::string_view selfies);

std::string join_selfies(const std::vector<std::string>& tokens);

// Supported subset:
//   atoms    [X] [=X] [#X] for any element X except H, with optional @/@@,
//            H<d> count and +<d>/-<d> charge, e.g. [NH1+1], [C@@H1]
//   branches [Branch1] [=Branch1] [#Branch1]
//   rings    [Ring1] [=Ring1] [#Ring1]
// Other well-formed SELFIES symbols ([Branch2], [Ring3], [H], isotopes,
// stereo bonds, '.', [nop], ...) raise UnsupportedTokenError.
//
// Decoding follows the SELFIES derivation rules exactly (bond capacities,
// branch/ring index operands, bilocal ring closure), so tokens consumed as
// index operands or ignored after saturation never introduce atoms.
ParsedSelfies parse_selfies(std::string_view selfies);

// φ: heavy-atom index -> SELFIES position. Throws MismatchError when the
// conformer's heavy-atom count or element sequence differs from the
// SELFIES-derived graph.
std::vector<std::size_t> align_phi(const ParsedSelfies& parsed, const Conformer& conformer);

// Every token accepted by parse_selfies for elements in the organic subset
// and the common charged forms, in a fixed order. Used as the default 1D
// vocabulary.
std::vector<std::string> default_selfies_alphabet();

}  // namespace molgeom
