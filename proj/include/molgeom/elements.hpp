#pragma once

#include <optional>
#include <string_view>

namespace molgeom {

inline constexpr int kMaxAtomicNumber = 118;

// Symbol for atomic number z in [1, 118]; empty view otherwise.
std::string_view element_symbol(int z);

// Atomic number for a case-sensitive element symbol ("C", "Cl", ...).
std::optional<int> atomic_number(std::string_view symbol);

}  // namespace molgeom
