#include "molgeom/structok.hpp"

#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>

#include "molgeom/binary_io.hpp"
#include "molgeom/errors.hpp"

namespace molgeom {

EmbeddingTable::EmbeddingTable(std::size_t rows, std::size_t dim, std::uint64_t seed)
    : weights_(rows, dim, seeded_params<float>(rows * dim, dim, seed)), seed_(seed) {}

EmbeddingTable::EmbeddingTable(TokenMatrix weights) : weights_(std::move(weights)) {}

std::span<const float> EmbeddingTable::row(std::size_t r) const {
  if (r >= rows()) throw ShapeError("embedding row " + std::to_string(r) + " out of range");
  return weights_.row(r);
}

TokenVocabulary::TokenVocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw SchemaError("duplicate vocabulary entry '" + tokens_[i] + "'");
    }
  }
}

TokenVocabulary TokenVocabulary::from_lines(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  return TokenVocabulary(std::move(tokens));
}

TokenVocabulary TokenVocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open vocabulary " + path);
  return from_lines(in);
}

std::size_t TokenVocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  if (it == index_.end()) throw UnknownTokenError("token '" + token + "' is not in the vocabulary");
  return it->second;
}

TokenMatrix embed_1d(const StructuralTokens& tokens, const TokenVocabulary& vocab,
                     const EmbeddingTable& table) {
  TokenMatrix out(tokens.length(), table.dim());
  for (std::size_t t = 0; t < tokens.length(); ++t) {
    const auto row = table.row(vocab.id(tokens.tokens[t]));
    std::copy(row.begin(), row.end(), out.row(t).begin());
  }
  return out;
}

std::vector<float> embed_3d(const FingerprintTable& fingerprints, std::size_t atom,
                            const EmbeddingTable& table) {
  if (table.rows() < fingerprints.vocab_size()) {
    throw ShapeError("3D embedding table has fewer rows than the fingerprint vocabulary");
  }
  std::vector<double> acc(table.dim(), 0.0);
  for (const std::uint32_t code : fingerprints.folded_row(atom)) {
    const auto row = table.row(code);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += row[c];
  }
  const double levels = static_cast<double>(fingerprints.levels());
  std::vector<float> out(acc.size());
  for (std::size_t c = 0; c < acc.size(); ++c) out[c] = static_cast<float>(acc[c] / levels);
  return out;
}

std::vector<float> padding_mask(std::size_t length, std::size_t l_max) {
  std::vector<float> mask(l_max, static_cast<float>(kMaskNegInf));
  for (std::size_t t = 0; t < length && t < l_max; ++t) mask[t] = 0.0f;
  return mask;
}

namespace {

StructuralSequence padded_from_1d(const StructuralTokens& tokens, const TokenVocabulary& vocab,
                                  const EmbeddingTable& table_1d, std::size_t l_max) {
  if (tokens.length() > l_max) {
    throw LengthError("SELFIES length " + std::to_string(tokens.length()) + " exceeds l_max " +
                      std::to_string(l_max));
  }
  const TokenMatrix e1d = embed_1d(tokens, vocab, table_1d);
  StructuralSequence seq{TokenMatrix(l_max, table_1d.dim()), padding_mask(tokens.length(), l_max),
                         tokens.length()};
  std::copy(e1d.data().begin(), e1d.data().end(), seq.s.data().begin());
  return seq;
}

}  // namespace

StructuralSequence fuse_sequence(const StructuralTokens& tokens,
                                 const FingerprintTable& fingerprints,
                                 const TokenVocabulary& vocab, const EmbeddingTable& table_1d,
                                 const EmbeddingTable& table_3d, std::size_t l_max) {
  if (fingerprints.atoms() != tokens.atom_positions.size()) {
    throw MismatchError("fingerprint table has " + std::to_string(fingerprints.atoms()) +
                        " rows for " + std::to_string(tokens.atom_positions.size()) +
                        " atom positions");
  }
  if (table_3d.dim() != table_1d.dim()) throw ShapeError("1D and 3D embedding widths differ");
  StructuralSequence seq = padded_from_1d(tokens, vocab, table_1d, l_max);
  constexpr float m = 1.0f;
  for (std::size_t atom = 0; atom < tokens.atom_positions.size(); ++atom) {
    const std::size_t t = tokens.atom_positions[atom];
    const std::vector<float> e3d = embed_3d(fingerprints, atom, table_3d);
    auto row = seq.s.row(t);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] + m * e3d[c]) / (1.0f + m);
  }
  return seq;
}

StructuralSequence no3d_sequence(const StructuralTokens& tokens, const TokenVocabulary& vocab,
                                 const EmbeddingTable& table_1d, std::size_t l_max) {
  return padded_from_1d(tokens, vocab, table_1d, l_max);
}

void write_sequence_binary(std::ostream& out, const StructuralSequence& seq) {
  io::write_u32(out, static_cast<std::uint32_t>(seq.l_max()));
  io::write_u32(out, static_cast<std::uint32_t>(seq.dim()));
  io::write_u32(out, static_cast<std::uint32_t>(seq.length));
  io::write_u32(out, kSequenceFormatVersion);
  for (const float v : seq.s.data()) io::write_f32(out, v);
}

StructuralSequence read_sequence_binary(std::istream& in) {
  const std::uint32_t l_max = io::read_u32(in);
  const std::uint32_t dim = io::read_u32(in);
  const std::uint32_t length = io::read_u32(in);
  const std::uint32_t version = io::read_u32(in);
  if (version != kSequenceFormatVersion) {
    throw SchemaError("unsupported sequence format version " + std::to_string(version));
  }
  if (length > l_max) throw SchemaError("sequence header has length > l_max");
  std::vector<float> data(static_cast<std::size_t>(l_max) * dim);
  for (float& v : data) v = io::read_f32(in);
  return {TokenMatrix(l_max, dim, std::move(data)), padding_mask(length, l_max), length};
}

std::string mask_sidecar_json(const StructuralSequence& seq) {
  nlohmann::ordered_json doc;
  doc["version"] = kSequenceFormatVersion;
  doc["l_max"] = seq.l_max();
  doc["length"] = seq.length;
  doc["mask"] = seq.mask;
  return doc.dump();
}

}  // namespace molgeom
