#pragma once

#include <nlohmann/json.hpp>
#include <cmath>
#include <string>

#include "molgeom/binary_io.hpp"
#include "molgeom/molgraph.hpp"
#include "molgeom/numerics.hpp"

namespace testing {

inline std::string data_path(const std::string& rel) { return std::string(MOLGEOM_TEST_DATA) + "/" + rel; }

inline nlohmann::json load_json(const std::string& rel) {
  return nlohmann::json::parse(molgeom::io::read_file(data_path(rel)));
}

inline molgeom::Conformer fixture(const std::string& rel) {
  return molgeom::load_conformer(data_path(rel));
}

inline molgeom::Atom carbon(int h = 0, bool ring = false) { return {6, 0, h, ring}; }

// Uniform random proper rotation (unit quaternion) plus a translation in
// [-10, 10)^3 applied to every coordinate.
inline molgeom::Conformer rigid_motion(const molgeom::Conformer& c, molgeom::CounterRng& rng) {
  double q[4];
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : q) {
      v = rng.next_symmetric(1.0);
      norm += v * v;
    }
  } while (norm > 1.0 || norm < 1e-6);
  norm = std::sqrt(norm);
  for (double& v : q) v /= norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  const double r[3][3] = {
      {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
      {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
      {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
  const molgeom::Vec3 t{rng.next_symmetric(10), rng.next_symmetric(10), rng.next_symmetric(10)};
  std::vector<molgeom::Vec3> moved;
  for (const auto& p : c.coords()) {
    molgeom::Vec3 m{};
    for (int i = 0; i < 3; ++i) m[i] = r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i];
    moved.push_back(m);
  }
  return molgeom::Conformer(c.graph(), std::move(moved), c.selfies());
}

}  // namespace testing
