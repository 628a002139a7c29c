#include "molgeom/e3fp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "molgeom/errors.hpp"

namespace molgeom {

void E3fpConfig::validate() const {
  if (iterations < 0) throw SchemaError("e3fp: iterations must be >= 0");
  if (!(radius_step > 0.0)) throw SchemaError("e3fp: radius_step must be > 0");
  if (vocab_size < 2) throw SchemaError("e3fp: vocab_size must be >= 2");
  if (!(dist_eps > 0.0)) throw SchemaError("e3fp: dist_eps must be > 0");
  if (!(stereo_cos_tol > 0.0 && stereo_cos_tol < 1.0)) {
    throw SchemaError("e3fp: stereo_cos_tol must lie in (0, 1)");
  }
}

namespace {

constexpr std::uint32_t rotl32(std::uint32_t x, int r) { return (x << r) | (x >> (32 - r)); }

constexpr std::uint32_t fmix32(std::uint32_t h) {
  h ^= h >> 16;
  h *= 0x85ebca6bu;
  h ^= h >> 13;
  h *= 0xc2b2ae35u;
  h ^= h >> 16;
  return h;
}

}  // namespace

std::uint32_t murmur3_32(std::span<const std::uint8_t> bytes, std::uint32_t seed) {
  constexpr std::uint32_t c1 = 0xcc9e2d51u;
  constexpr std::uint32_t c2 = 0x1b873593u;
  const std::size_t nblocks = bytes.size() / 4;
  std::uint32_t h = seed;
  for (std::size_t b = 0; b < nblocks; ++b) {
    const std::uint8_t* p = bytes.data() + 4 * b;
    std::uint32_t k = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                      (static_cast<std::uint32_t>(p[2]) << 16) |
                      (static_cast<std::uint32_t>(p[3]) << 24);
    k *= c1;
    k = rotl32(k, 15);
    k *= c2;
    h ^= k;
    h = rotl32(h, 13);
    h = h * 5 + 0xe6546b64u;
  }
  const std::uint8_t* tail = bytes.data() + 4 * nblocks;
  std::uint32_t k = 0;
  switch (bytes.size() & 3u) {
    case 3: k ^= static_cast<std::uint32_t>(tail[2]) << 16; [[fallthrough]];
    case 2: k ^= static_cast<std::uint32_t>(tail[1]) << 8; [[fallthrough]];
    case 1:
      k ^= tail[0];
      k *= c1;
      k = rotl32(k, 15);
      k *= c2;
      h ^= k;
  }
  h ^= static_cast<std::uint32_t>(bytes.size());
  return fmix32(h);
}

std::uint32_t murmur3_32(std::string_view bytes, std::uint32_t seed) {
  return murmur3_32(
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()),
      seed);
}

std::uint32_t hash_words(std::span<const std::uint32_t> words) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(words.size() * 4);
  for (const std::uint32_t w : words) {
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>((w >> (8 * b)) & 0xFFu));
  }
  return murmur3_32(std::span<const std::uint8_t>(bytes), 0);
}

AtomInvariants atomic_invariants(const MoleculeGraph& graph, std::size_t atom) {
  const Atom& a = graph.atom(atom);
  int half_units = 0;  // bond orders in units of 0.5
  for (const Neighbor& n : graph.neighbors(atom)) {
    const BondOrder order = graph.bonds()[n.bond].order;
    half_units += order == BondOrder::kAromatic ? 3 : 2 * static_cast<int>(order);
  }
  return {static_cast<std::int32_t>(graph.neighbors(atom).size()),
          half_units / 2,
          a.element,
          0,
          a.formal_charge,
          a.h_count,
          a.in_ring ? 1 : 0};
}

std::uint32_t initial_identifier(const MoleculeGraph& graph, std::size_t atom) {
  const AtomInvariants inv = atomic_invariants(graph, atom);
  std::array<std::uint32_t, 7> words{};
  std::transform(inv.begin(), inv.end(), words.begin(),
                 [](std::int32_t v) { return static_cast<std::uint32_t>(v); });
  return hash_words(words);
}

std::uint32_t connectivity(const MoleculeGraph& graph, std::size_t k, std::size_t i) {
  const auto order = graph.bond_between(k, i);
  return order ? static_cast<std::uint32_t>(*order) : 0u;
}

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 unit(const Vec3& a) {
  const double n = std::sqrt(dot(a, a));
  return {a[0] / n, a[1] / n, a[2] / n};
}

// Index (into members) of the unique smallest candidate, or nullopt when the
// minimum is shared by members that nothing distinguishes.
std::optional<std::size_t> select_reference(std::span<const ShellMember> members,
                                             const std::vector<std::size_t>& candidates,
                                             std::span<const std::uint32_t> level0_folded,
                                             double dist_eps) {
  if (candidates.empty()) return std::nullopt;
  const auto id_key = [&](std::size_t m) {
    return std::pair(members[m].prev_id, members[m].connectivity);
  };
  auto best_key = id_key(candidates.front());
  for (std::size_t m : candidates) best_key = std::min(best_key, id_key(m));
  double min_d = INFINITY;
  for (std::size_t m : candidates) {
    if (id_key(m) == best_key) min_d = std::min(min_d, members[m].dist_sq);
  }
  std::vector<std::size_t> near;
  for (std::size_t m : candidates) {
    if (id_key(m) == best_key && members[m].dist_sq <= min_d + dist_eps) near.push_back(m);
  }
  std::uint32_t min_fold = UINT32_MAX;
  for (std::size_t m : near) min_fold = std::min(min_fold, level0_folded[members[m].atom]);
  std::optional<std::size_t> chosen;
  for (std::size_t m : near) {
    if (level0_folded[members[m].atom] != min_fold) continue;
    if (chosen) return std::nullopt;
    chosen = m;
  }
  return chosen;
}

}  // namespace

std::optional<StereoFrame> stereo_frame(const Conformer& conformer, std::size_t center,
                                        std::span<const ShellMember> members,
                                        std::span<const std::uint32_t> level0_ids,
                                        const E3fpConfig& cfg) {
  if (members.size() < 2) return std::nullopt;
  std::vector<std::uint32_t> level0_folded(level0_ids.size());
  for (std::size_t a = 0; a < level0_ids.size(); ++a) {
    level0_folded[a] = level0_ids[a] % cfg.vocab_size;
  }
  std::vector<std::size_t> all(members.size());
  for (std::size_t m = 0; m < members.size(); ++m) all[m] = m;
  const auto r1 = select_reference(members, all, level0_folded, cfg.dist_eps);
  if (!r1) return std::nullopt;

  const Vec3& origin = conformer.coords()[center];
  const Vec3 to_r1 = unit(sub(conformer.coords()[members[*r1].atom], origin));
  std::vector<std::size_t> rest;
  for (std::size_t m = 0; m < members.size(); ++m) {
    if (m == *r1) continue;
    const Vec3 v = unit(sub(conformer.coords()[members[m].atom], origin));
    if (std::abs(dot(v, to_r1)) >= 1.0 - cfg.stereo_cos_tol) continue;  // collinear
    rest.push_back(m);
  }
  const auto r2 = select_reference(members, rest, level0_folded, cfg.dist_eps);
  if (!r2) return std::nullopt;

  StereoFrame frame;
  frame.ref1 = members[*r1].atom;
  frame.ref2 = members[*r2].atom;
  frame.y = to_r1;
  frame.z = unit(cross(frame.y, sub(conformer.coords()[frame.ref2], origin)));
  frame.x = cross(frame.y, frame.z);
  return frame;
}

std::int32_t stereo_code(const Conformer& conformer, const std::optional<StereoFrame>& frame,
                         std::size_t k, std::size_t i, const E3fpConfig& cfg) {
  if (!frame || k == frame->ref1 || k == frame->ref2) return 0;
  const Vec3 v = unit(sub(conformer.coords()[k], conformer.coords()[i]));
  const double cx = dot(v, frame->x);
  const double cy = dot(v, frame->y);
  const double cz = dot(v, frame->z);
  const double tol = cfg.stereo_cos_tol;
  if (std::abs(cx) < tol || std::abs(cy) < tol || std::abs(cz) < tol) return 0;
  const std::int32_t magnitude = 1 + (cx < 0 ? 1 : 0) + (cy < 0 ? 2 : 0);
  return cz > 0 ? magnitude : -magnitude;
}

ShellDescriptor gather_shell(const Conformer& conformer, std::span<const std::uint32_t> prev_ids,
                             std::span<const std::uint32_t> level0_ids, std::size_t i,
                             int level, const E3fpConfig& cfg) {
  if (prev_ids.size() != conformer.size() || level0_ids.size() != conformer.size()) {
    throw ShapeError("gather_shell: identifier arrays must have one entry per atom");
  }
  ShellDescriptor shell;
  shell.center = i;
  shell.level = static_cast<std::uint32_t>(level);
  shell.center_prev_id = prev_ids[i];
  const double radius = cfg.radius(level);
  const double limit = radius * radius + cfg.dist_eps;
  const auto& x = conformer.coords();
  for (std::size_t k = 0; k < conformer.size(); ++k) {
    if (k == i) continue;
    const Vec3 d = sub(x[k], x[i]);
    const double sq = dot(d, d);
    if (sq > limit) continue;
    ShellMember m;
    m.connectivity = connectivity(conformer.graph(), k, i);
    m.prev_id = prev_ids[k];
    m.atom = k;
    m.dist_sq = sq;
    shell.members.push_back(m);
  }
  const auto frame = stereo_frame(conformer, i, shell.members, level0_ids, cfg);
  for (ShellMember& m : shell.members) m.stereo = stereo_code(conformer, frame, m.atom, i, cfg);
  std::sort(shell.members.begin(), shell.members.end(),
            [](const ShellMember& a, const ShellMember& b) { return a.key() < b.key(); });
  return shell;
}

std::uint32_t hash_shell(const ShellDescriptor& shell) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 3 * shell.members.size());
  words.push_back(shell.level);
  words.push_back(shell.center_prev_id);
  for (const ShellMember& m : shell.members) {
    words.push_back(m.connectivity);
    words.push_back(m.prev_id);
    words.push_back(static_cast<std::uint32_t>(m.stereo));
  }
  return hash_words(words);
}

FingerprintTable::FingerprintTable(std::size_t atoms, std::size_t levels, std::uint32_t vocab,
                                   std::vector<std::uint32_t> raw)
    : atoms_(atoms), levels_(levels), vocab_(vocab), raw_(std::move(raw)) {
  if (raw_.size() != atoms_ * levels_) throw ShapeError("fingerprint table size mismatch");
  if (vocab_ < 2) throw SchemaError("vocab_size must be >= 2");
  folded_.resize(raw_.size());
  for (std::size_t n = 0; n < raw_.size(); ++n) folded_[n] = raw_[n] % vocab_;
}

FingerprintTable fingerprint(const Conformer& conformer, const E3fpConfig& cfg) {
  cfg.validate();
  const std::size_t n = conformer.size();
  const std::size_t levels = static_cast<std::size_t>(cfg.iterations) + 1;
  std::vector<std::uint32_t> level0(n);
  for (std::size_t i = 0; i < n; ++i) level0[i] = initial_identifier(conformer.graph(), i);

  std::vector<std::uint32_t> raw(n * levels);
  std::vector<std::uint32_t> prev = level0;
  std::vector<std::uint32_t> next(n);
  for (std::size_t i = 0; i < n; ++i) raw[i * levels] = level0[i];
  for (int j = 1; j <= cfg.iterations; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = hash_shell(gather_shell(conformer, prev, level0, i, j, cfg));
      raw[i * levels + static_cast<std::size_t>(j)] = next[i];
    }
    std::swap(prev, next);
  }
  return FingerprintTable(n, levels, cfg.vocab_size, std::move(raw));
}

std::string fingerprint_to_json(const FingerprintTable& table) {
  nlohmann::ordered_json doc;
  doc["n_atoms"] = table.atoms();
  doc["k"] = table.levels() - 1;
  doc["vocab"] = table.vocab_size();
  auto folded = nlohmann::ordered_json::array();
  auto raw_hex = nlohmann::ordered_json::array();
  char buf[9];
  for (std::size_t i = 0; i < table.atoms(); ++i) {
    auto frow = nlohmann::ordered_json::array();
    auto hrow = nlohmann::ordered_json::array();
    for (std::size_t j = 0; j < table.levels(); ++j) {
      frow.push_back(table.folded(i, j));
      std::snprintf(buf, sizeof buf, "%08x", table.raw(i, j));
      hrow.push_back(buf);
    }
    folded.push_back(std::move(frow));
    raw_hex.push_back(std::move(hrow));
  }
  doc["folded"] = std::move(folded);
  doc["raw_hex"] = std::move(raw_hex);
  return doc.dump();
}

}  // namespace molgeom
