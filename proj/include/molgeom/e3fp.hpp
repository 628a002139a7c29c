#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "molgeom/molgraph.hpp"

namespace molgeom {

struct E3fpConfig {
  int iterations = 5;          // K
  double radius_step = 1.718;  // r, Å; shell j has radius r * j
  std::uint32_t vocab_size = 4096;
  double dist_eps = 1e-6;       // Å², tolerance on squared distances
  double stereo_cos_tol = 0.01;

  // Throws SchemaError when a field is out of range.
  void validate() const;
  double radius(int level) const { return radius_step * level; }
};

// MurmurHash3 x86 32-bit.
std::uint32_t murmur3_32(std::span<const std::uint8_t> bytes, std::uint32_t seed = 0);
std::uint32_t murmur3_32(std::string_view bytes, std::uint32_t seed = 0);

// Little-endian serialization of 32-bit words, then murmur3_32 with seed 0.
std::uint32_t hash_words(std::span<const std::uint32_t> words);

// (heavy degree, valence - H, atomic number, mass code, formal charge,
//  H count, ring flag). Valence counts aromatic bonds as 1.5, rounded down.
using AtomInvariants = std::array<std::int32_t, 7>;
AtomInvariants atomic_invariants(const MoleculeGraph& graph, std::size_t atom);
std::uint32_t initial_identifier(const MoleculeGraph& graph, std::size_t atom);

// Bond order code for a pair: 1, 2, 3, aromatic 4, unbonded 0.
std::uint32_t connectivity(const MoleculeGraph& graph, std::size_t k, std::size_t i);

struct ShellMember {
  std::uint32_t connectivity = 0;
  std::uint32_t prev_id = 0;
  std::int32_t stereo = 0;
  std::size_t atom = 0;
  double dist_sq = 0.0;

  auto key() const { return std::tuple(connectivity, prev_id, stereo); }
};

struct ShellDescriptor {
  std::size_t center = 0;
  std::uint32_t level = 0;
  std::uint32_t center_prev_id = 0;
  std::vector<ShellMember> members;  // ascending by key()
};

// Right-handed frame anchored on two reference members of a shell.
struct StereoFrame {
  std::size_t ref1 = 0;
  std::size_t ref2 = 0;
  Vec3 x{};
  Vec3 y{};
  Vec3 z{};
};

// Picks the reference members (smallest (prev_id, connectivity, distance),
// ties within dist_eps broken by folded level-0 identifier) and builds the
// frame. nullopt when fewer than two non-collinear references exist or a
// tie cannot be broken.
std::optional<StereoFrame> stereo_frame(const Conformer& conformer, std::size_t center,
                                        std::span<const ShellMember> members,
                                        std::span<const std::uint32_t> level0_ids,
                                        const E3fpConfig& cfg);

// Octant code of member k seen from center i in the frame: sign(z) times
// 1 + [x < 0] + 2 [y < 0]. Zero without a frame, for the two references and
// for members within stereo_cos_tol of a frame plane.
std::int32_t stereo_code(const Conformer& conformer, const std::optional<StereoFrame>& frame,
                         std::size_t k, std::size_t i, const E3fpConfig& cfg);

// All k != i with |x_k - x_i|² <= radius² + dist_eps, annotated and sorted.
// level0_ids are the raw initial identifiers (needed for stereo tie breaks).
ShellDescriptor gather_shell(const Conformer& conformer, std::span<const std::uint32_t> prev_ids,
                             std::span<const std::uint32_t> level0_ids, std::size_t i,
                             int level, const E3fpConfig& cfg);

// [level, center_prev_id] followed by (connectivity, prev_id, stereo) of each
// member, as little-endian 32-bit words hashed with seed 0.
std::uint32_t hash_shell(const ShellDescriptor& shell);

class FingerprintTable {
 public:
  FingerprintTable(std::size_t atoms, std::size_t levels, std::uint32_t vocab,
                   std::vector<std::uint32_t> raw);

  std::size_t atoms() const { return atoms_; }
  std::size_t levels() const { return levels_; }  // K + 1
  std::uint32_t vocab_size() const { return vocab_; }
  std::uint32_t raw(std::size_t i, std::size_t j) const { return raw_[i * levels_ + j]; }
  std::uint32_t folded(std::size_t i, std::size_t j) const { return folded_[i * levels_ + j]; }
  std::span<const std::uint32_t> folded_row(std::size_t i) const {
    return {folded_.data() + i * levels_, levels_};
  }

  bool operator==(const FingerprintTable&) const = default;

 private:
  std::size_t atoms_;
  std::size_t levels_;
  std::uint32_t vocab_;
  std::vector<std::uint32_t> raw_;
  std::vector<std::uint32_t> folded_;
};

FingerprintTable fingerprint(const Conformer& conformer, const E3fpConfig& cfg = {});

// {"n_atoms":N,"k":K,"vocab":V,"folded":[[...]],"raw_hex":[["%08x",...]]}
std::string fingerprint_to_json(const FingerprintTable& table);

}  // namespace molgeom
