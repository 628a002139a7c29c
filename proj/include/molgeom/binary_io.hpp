#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "molgeom/numerics.hpp"

namespace molgeom::io {

void write_u32(std::ostream& out, std::uint32_t v);
void write_f32(std::ostream& out, float v);
// Throws SchemaError on truncated input.
std::uint32_t read_u32(std::istream& in);
float read_f32(std::istream& in);

inline constexpr char kCheckpointMagic[4] = {'M', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorBlock {
  std::string name;
  TokenMatrix value;
  bool operator==(const TensorBlock&) const = default;
};

// "MGCK", u32 version, u32 block count, then per block: u32 name length,
// name bytes, u32 rows, u32 cols, rows * cols little-endian float32.
void write_checkpoint(std::ostream& out, const std::vector<TensorBlock>& blocks);
std::vector<TensorBlock> read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const std::vector<TensorBlock>& blocks);
std::vector<TensorBlock> load_checkpoint(const std::string& path);

// Throws IoError when the file cannot be written / read.
void write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace molgeom::io
