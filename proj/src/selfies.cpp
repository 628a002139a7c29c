#include "molgeom/selfies.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <limits>
#include <map>
#include <optional>
#include <utility>

#include "molgeom/elements.hpp"
#include "molgeom/errors.hpp"

namespace molgeom {

bool StructuralTokens::is_atom_position(std::size_t t) const {
  return std::binary_search(atom_positions.begin(), atom_positions.end(), t);
}

std::vector<std::string> split_selfies(std::string_view selfies) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < selfies.size()) {
    if (selfies[pos] == '.') {
      tokens.emplace_back(".");
      ++pos;
      continue;
    }
    if (selfies[pos] != '[') {
      throw GrammarError("unexpected character '" + std::string(1, selfies[pos]) +
                         "' at offset " + std::to_string(pos));
    }
    const std::size_t close = selfies.find(']', pos + 1);
    if (close == std::string_view::npos) {
      throw GrammarError("unbalanced '[' at offset " + std::to_string(pos));
    }
    const std::string_view token = selfies.substr(pos, close - pos + 1);
    if (token.find('[', 1) != std::string_view::npos) {
      throw GrammarError("nested '[' at offset " + std::to_string(pos));
    }
    if (token.size() == 2) throw GrammarError("empty token at offset " + std::to_string(pos));
    tokens.emplace_back(token);
    pos = close + 1;
  }
  return tokens;
}

std::string join_selfies(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += t;
  return out;
}

namespace {

enum class TokenKind { kAtom, kBranch, kRing };

struct TokenInfo {
  TokenKind kind = TokenKind::kAtom;
  int bond_order = 1;  // bond prefix: 1, 2 ('='), 3 ('#')
  // atoms only
  int element = 0;
  int charge = 0;
  std::optional<int> explicit_h;  // unset for bare organic-subset atoms
  int capacity = 0;
};

// SELFIES default semantic constraints.
int bonding_capacity(std::string_view symbol, int charge) {
  static const std::map<std::pair<std::string_view, int>, int> kTable = {
      {{"H", 0}, 1},  {{"F", 0}, 1},  {{"Cl", 0}, 1}, {{"Br", 0}, 1}, {{"I", 0}, 1},
      {{"B", 0}, 3},  {{"B", 1}, 2},  {{"B", -1}, 4}, {{"O", 0}, 2},  {{"O", 1}, 3},
      {{"O", -1}, 1}, {{"N", 0}, 3},  {{"N", 1}, 4},  {{"N", -1}, 2}, {{"C", 0}, 4},
      {{"C", 1}, 3},  {{"C", -1}, 3}, {{"P", 0}, 5},  {{"P", 1}, 4},  {{"P", -1}, 6},
      {{"S", 0}, 6},  {{"S", 1}, 5},  {{"S", -1}, 5},
  };
  const auto it = kTable.find({symbol, charge});
  return it == kTable.end() ? 8 : it->second;
}

constexpr std::array<std::string_view, 10> kOrganicSubset = {"B", "C",  "N",  "O", "S",
                                                             "P", "F", "Cl", "Br", "I"};

bool is_organic(std::string_view s) {
  return std::find(kOrganicSubset.begin(), kOrganicSubset.end(), s) != kOrganicSubset.end();
}

int bond_prefix_order(char c) { return c == '=' ? 2 : c == '#' ? 3 : 1; }

std::optional<TokenInfo> classify_control(std::string_view body, std::string_view keyword,
                                          TokenKind kind, const std::string& token) {
  const std::size_t at = body.find(keyword);
  if (at == std::string_view::npos) return std::nullopt;
  const std::string_view prefix = body.substr(0, at);
  const std::string_view suffix = body.substr(at + keyword.size());
  if (suffix.size() != 1 || suffix[0] < '1' || suffix[0] > '3') {
    throw GrammarError("unknown token " + token);
  }
  TokenInfo info;
  info.kind = kind;
  if (prefix.empty() || prefix == "=" || prefix == "#") {
    info.bond_order = prefix.empty() ? 1 : bond_prefix_order(prefix[0]);
  } else if (kind == TokenKind::kRing && prefix.size() == 2 &&
             std::string_view("-/\\").find(prefix[0]) != std::string_view::npos &&
             std::string_view("-/\\").find(prefix[1]) != std::string_view::npos) {
    throw UnsupportedTokenError("stereo ring bond token " + token + " is not supported");
  } else {
    throw GrammarError("unknown token " + token);
  }
  if (suffix[0] != '1') {
    throw UnsupportedTokenError(token + ": only one-symbol length operands are supported");
  }
  return info;
}

TokenInfo classify(const std::string& token) {
  if (token == ".") throw UnsupportedTokenError("disconnected fragments ('.') are not supported");
  const std::string_view body = std::string_view(token).substr(1, token.size() - 2);
  if (body == "nop" || body == "epsilon") {
    throw UnsupportedTokenError(token + " is not supported");
  }
  if (auto b = classify_control(body, "Branch", TokenKind::kBranch, token)) return *b;
  if (auto r = classify_control(body, "Ring", TokenKind::kRing, token)) return *r;

  // [bond? isotope? Element chirality? (H<d>)? ([+-]<d>)?]
  std::size_t p = 0;
  TokenInfo info;
  if (p < body.size() && (body[p] == '=' || body[p] == '#')) {
    info.bond_order = bond_prefix_order(body[p]);
    ++p;
  } else if (p < body.size() && (body[p] == '/' || body[p] == '\\')) {
    throw UnsupportedTokenError("stereo bond token " + token + " is not supported");
  }
  const std::string_view atom_body = body.substr(p);
  if (p < body.size() && std::isdigit(static_cast<unsigned char>(body[p]))) {
    throw UnsupportedTokenError("isotope token " + token + " is not supported");
  }
  if (p >= body.size() || !std::isupper(static_cast<unsigned char>(body[p]))) {
    throw GrammarError("unknown token " + token);
  }
  std::size_t sym_len = 1;
  if (p + 1 < body.size() && std::islower(static_cast<unsigned char>(body[p + 1]))) sym_len = 2;
  const std::string_view symbol = body.substr(p, sym_len);
  const auto z = atomic_number(symbol);
  if (!z) throw GrammarError("unknown element in token " + token);
  if (*z == 1) throw UnsupportedTokenError("explicit hydrogen token " + token + " is not supported");
  p += sym_len;
  info.element = *z;

  if (is_organic(atom_body)) {
    info.capacity = bonding_capacity(symbol, 0);
    return info;
  }

  while (p < body.size() && body[p] == '@') ++p;  // chirality is accepted and ignored
  int h = 0;
  if (p < body.size() && body[p] == 'H') {
    if (p + 1 >= body.size() || !std::isdigit(static_cast<unsigned char>(body[p + 1]))) {
      throw GrammarError("hydrogen count needs a digit in " + token);
    }
    h = body[p + 1] - '0';
    p += 2;
  }
  int charge = 0;
  if (p < body.size() && (body[p] == '+' || body[p] == '-')) {
    const int sign = body[p] == '+' ? 1 : -1;
    ++p;
    if (p >= body.size()) throw GrammarError("charge needs a magnitude in " + token);
    int magnitude = 0;
    while (p < body.size() && body[p] >= '1' && body[p] <= '9') {
      magnitude = magnitude * 10 + (body[p] - '0');
      ++p;
    }
    if (magnitude == 0) throw GrammarError("bad charge in " + token);
    charge = sign * magnitude;
  }
  if (p != body.size()) throw GrammarError("unknown token " + token);
  info.charge = charge;
  info.explicit_h = h;
  info.capacity = bonding_capacity(symbol, charge) - h;
  if (info.capacity < 0) throw GrammarError("too many hydrogens in " + token);
  return info;
}

// Index alphabet used to read branch lengths and ring offsets.
int index_code(const std::string& token) {
  static const std::array<std::string_view, 16> kIndexAlphabet = {
      "[C]",       "[Ring1]",   "[Ring2]", "[Branch1]", "[=Branch1]", "[#Branch1]",
      "[Branch2]", "[=Branch2]", "[#Branch2]", "[O]",   "[N]",        "[=N]",
      "[=C]",      "[#C]",      "[S]",     "[P]"};
  const auto it = std::find(kIndexAlphabet.begin(), kIndexAlphabet.end(), token);
  return it == kIndexAlphabet.end() ? 0 : static_cast<int>(it - kIndexAlphabet.begin());
}

struct DerivedAtom {
  const TokenInfo* info;
  std::size_t position;
  int bond_count = 0;
};

struct PendingRing {
  std::size_t left;
  std::size_t right;
  int order;
};

// Mirrors the recursive SELFIES derivation. State is the number of bonds the
// previous atom can still form; nullopt terminates the current (sub)chain.
class Deriver {
 public:
  Deriver(const std::vector<std::string>& tokens, const std::vector<TokenInfo>& info)
      : tokens_(tokens), info_(info) {}

  void run() {
    derive(std::numeric_limits<std::size_t>::max(), 0, std::nullopt);
    close_rings();
  }

  std::vector<DerivedAtom> atoms;
  std::map<std::pair<std::size_t, std::size_t>, int> bonds;  // (lo, hi) -> order

 private:
  std::size_t read_index() {
    if (pos_ >= tokens_.size()) return 0;
    return static_cast<std::size_t>(index_code(tokens_[pos_++]));
  }

  void add_bond(std::size_t a, std::size_t b, int order) {
    bonds[{std::min(a, b), std::max(a, b)}] = order;
    atoms[a].bond_count += order;
    atoms[b].bond_count += order;
  }

  std::size_t derive(std::size_t max_derive, int init_state, std::optional<std::size_t> root) {
    std::size_t derived = 0;
    std::optional<int> state = init_state;
    std::optional<std::size_t> prev = root;

    while (state && derived < max_derive) {
      if (pos_ >= tokens_.size()) break;
      const std::size_t index = pos_++;
      ++derived;
      const TokenInfo& tok = info_[index];
      std::optional<int> next = state;

      if (tok.kind == TokenKind::kBranch) {
        if (*state > 1) {
          const int branch_init = std::min(*state - 1, tok.bond_order);
          next = *state - branch_init;
          const std::size_t q = read_index();
          derived += 1 + derive(q + 1, branch_init, prev);
        }
      } else if (tok.kind == TokenKind::kRing) {
        if (*state != 0) {
          const int order = std::min(tok.bond_order, *state);
          const int left = *state - order;
          next = left == 0 ? std::nullopt : std::optional<int>(left);
          const std::size_t q = read_index();
          derived += 1;
          const std::size_t lidx = *prev >= q + 1 ? *prev - (q + 1) : 0;
          rings_.push_back({lidx, *prev, order});
        }
      } else {
        int order = *state == 0 ? 0 : tok.bond_order;
        order = std::min({order, *state, tok.capacity});
        const int left = tok.capacity - order;
        next = left == 0 ? std::nullopt : std::optional<int>(left);
        if (order == 0) {
          if (*state == 0) {
            atoms.push_back({&tok, index});
            prev = atoms.size() - 1;
          }
          // A saturated atom that cannot bond is dropped; the chain ends.
        } else {
          atoms.push_back({&tok, index});
          add_bond(*prev, atoms.size() - 1, order);
          prev = atoms.size() - 1;
        }
      }
      if (!next) break;
      state = next;
    }
    while (derived < max_derive && pos_ < tokens_.size()) {
      ++pos_;
      ++derived;
    }
    return derived;
  }

  void close_rings() {
    for (const PendingRing& ring : rings_) {
      if (ring.left == ring.right) continue;
      const int lfree = atoms[ring.left].info->capacity - atoms[ring.left].bond_count;
      const int rfree = atoms[ring.right].info->capacity - atoms[ring.right].bond_count;
      if (lfree <= 0 || rfree <= 0) continue;
      const int order = std::min({ring.order, lfree, rfree});
      const auto key = std::make_pair(std::min(ring.left, ring.right),
                                      std::max(ring.left, ring.right));
      const auto it = bonds.find(key);
      if (it != bonds.end()) {
        const int updated = std::min(order + it->second, 3);
        const int delta = updated - it->second;
        it->second = updated;
        atoms[ring.left].bond_count += delta;
        atoms[ring.right].bond_count += delta;
      } else {
        add_bond(ring.left, ring.right, order);
      }
    }
  }

  const std::vector<std::string>& tokens_;
  const std::vector<TokenInfo>& info_;
  std::size_t pos_ = 0;
  std::vector<PendingRing> rings_;
};

int implicit_hydrogens(int element, int bond_sum) {
  std::vector<int> valences;
  switch (element) {
    case 5: valences = {3}; break;
    case 6: valences = {4}; break;
    case 7: case 15: valences = {3, 5}; break;
    case 8: valences = {2}; break;
    case 16: valences = {2, 4, 6}; break;
    default: valences = {1}; break;  // halogens
  }
  for (int v : valences) {
    if (v >= bond_sum) return v - bond_sum;
  }
  return 0;
}

}  // namespace

ParsedSelfies parse_selfies(std::string_view selfies) {
  ParsedSelfies out;
  out.tokens.tokens = split_selfies(selfies);
  std::vector<TokenInfo> info;
  info.reserve(out.tokens.tokens.size());
  for (const auto& t : out.tokens.tokens) info.push_back(classify(t));

  Deriver deriver(out.tokens.tokens, info);
  deriver.run();

  std::vector<Atom> atoms;
  for (const DerivedAtom& a : deriver.atoms) {
    out.tokens.atom_positions.push_back(a.position);
    const int h = a.info->explicit_h ? *a.info->explicit_h
                                     : implicit_hydrogens(a.info->element, a.bond_count);
    atoms.push_back(Atom{a.info->element, a.info->charge, h, false});
  }
  std::vector<Bond> bonds;
  for (const auto& [key, order] : deriver.bonds) {
    bonds.push_back(Bond{key.first, key.second, static_cast<BondOrder>(order), Wedge::kNone});
  }
  MoleculeGraph topology(atoms, bonds);
  const std::vector<bool> ring = topology.ring_atoms();
  for (std::size_t i = 0; i < atoms.size(); ++i) atoms[i].in_ring = ring[i];
  out.graph = MoleculeGraph(std::move(atoms), std::move(bonds));
  return out;
}

std::vector<std::size_t> align_phi(const ParsedSelfies& parsed, const Conformer& conformer) {
  const auto& positions = parsed.tokens.atom_positions;
  if (positions.size() != conformer.size()) {
    throw MismatchError("SELFIES introduces " + std::to_string(positions.size()) +
                        " heavy atoms but the conformer has " +
                        std::to_string(conformer.size()));
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int from_selfies = parsed.graph.atom(i).element;
    const int from_conformer = conformer.graph().atom(i).element;
    if (from_selfies != from_conformer) {
      throw MismatchError("heavy atom " + std::to_string(i) + " is " +
                          std::string(element_symbol(from_selfies)) + " in SELFIES but " +
                          std::string(element_symbol(from_conformer)) + " in the conformer");
    }
  }
  return positions;
}

std::vector<std::string> default_selfies_alphabet() {
  std::vector<std::string> out;
  const std::array<std::string_view, 3> prefixes = {"", "=", "#"};
  for (auto prefix : prefixes) {
    for (auto element : kOrganicSubset) out.push_back("[" + std::string(prefix) + std::string(element) + "]");
    for (auto charged : {"C+1", "C-1", "N+1", "N-1", "O+1", "O-1", "S+1", "S-1", "P+1", "P-1",
                         "B+1", "B-1", "NH1+1", "NH2+1", "NH3+1", "C@H1", "C@@H1", "C@", "C@@"}) {
      out.push_back("[" + std::string(prefix) + charged + "]");
    }
  }
  for (auto prefix : prefixes) {
    out.push_back("[" + std::string(prefix) + "Branch1]");
    out.push_back("[" + std::string(prefix) + "Ring1]");
  }
  return out;
}

}  // namespace molgeom
