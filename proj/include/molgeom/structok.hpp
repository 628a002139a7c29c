#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "molgeom/e3fp.hpp"
#include "molgeom/numerics.hpp"
#include "molgeom/selfies.hpp"

namespace molgeom {

// rows x dim lookup table. Seeded tables draw every value from the counter
// stream of `seed` (value index = row * dim + col), uniform in
// [-1/sqrt(dim), 1/sqrt(dim)), so equal (rows, dim, seed) means equal bits.
class EmbeddingTable {
 public:
  EmbeddingTable(std::size_t rows, std::size_t dim, std::uint64_t seed);
  explicit EmbeddingTable(TokenMatrix weights);

  std::size_t rows() const { return weights_.rows(); }
  std::size_t dim() const { return weights_.cols(); }
  std::uint64_t seed() const { return seed_; }
  std::span<const float> row(std::size_t r) const;
  const TokenMatrix& weights() const { return weights_; }

  bool operator==(const EmbeddingTable&) const = default;

 private:
  TokenMatrix weights_;
  std::uint64_t seed_ = 0;
};

// Token string -> row id. Ids follow insertion order.
class TokenVocabulary {
 public:
  TokenVocabulary() = default;
  explicit TokenVocabulary(std::vector<std::string> tokens);

  // Newline-delimited token strings; id = line number (0-based). Blank
  // trailing lines are ignored.
  static TokenVocabulary from_lines(std::istream& in);
  static TokenVocabulary load(const std::string& path);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  // Throws UnknownTokenError.
  std::size_t id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Fused per-position embeddings padded to l_max rows plus the additive mask
// (0 for t < length, kMaskNegInf after). Padding rows are zero.
struct StructuralSequence {
  TokenMatrix s;
  std::vector<float> mask;
  std::size_t length = 0;

  std::size_t l_max() const { return s.rows(); }
  std::size_t dim() const { return s.cols(); }
  bool operator==(const StructuralSequence&) const = default;
};

// L x d_s, row t = table row of token t.
TokenMatrix embed_1d(const StructuralTokens& tokens, const TokenVocabulary& vocab,
                     const EmbeddingTable& table);

// Mean of the K + 1 code embeddings of one atom.
std::vector<float> embed_3d(const FingerprintTable& fingerprints, std::size_t atom,
                            const EmbeddingTable& table);

// s_t = (e1d_t + m_t e3d_t) / (1 + m_t), m_t = 1 on atom positions.
// Throws LengthError if L > l_max, MismatchError if the fingerprint table does
// not have one row per atom position, ShapeError on table dim mismatch.
StructuralSequence fuse_sequence(const StructuralTokens& tokens,
                                 const FingerprintTable& fingerprints,
                                 const TokenVocabulary& vocab, const EmbeddingTable& table_1d,
                                 const EmbeddingTable& table_3d, std::size_t l_max);

// Same layout with every m_t = 0 (3D branch removed).
StructuralSequence no3d_sequence(const StructuralTokens& tokens, const TokenVocabulary& vocab,
                                 const EmbeddingTable& table_1d, std::size_t l_max);

std::vector<float> padding_mask(std::size_t length, std::size_t l_max);

inline constexpr std::uint32_t kSequenceFormatVersion = 1;

// 16-byte header (u32 l_max, d_s, length, version; little-endian) followed
// by l_max * d_s little-endian float32 values, row-major.
void write_sequence_binary(std::ostream& out, const StructuralSequence& seq);
StructuralSequence read_sequence_binary(std::istream& in);  // mask rebuilt from length

// {"version":1,"l_max":..,"length":..,"mask":[...]}
std::string mask_sidecar_json(const StructuralSequence& seq);

}  // namespace molgeom
