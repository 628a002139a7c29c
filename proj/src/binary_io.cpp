#include "molgeom/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "molgeom/errors.hpp"

namespace molgeom::io {

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> bytes = {static_cast<char>(v & 0xFFu), static_cast<char>((v >> 8) & 0xFFu),
                                     static_cast<char>((v >> 16) & 0xFFu),
                                     static_cast<char>((v >> 24) & 0xFFu)};
  out.write(bytes.data(), 4);
}

void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t read_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) throw SchemaError("unexpected end of binary data");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float read_f32(std::istream& in) { return std::bit_cast<float>(read_u32(in)); }

void write_checkpoint(std::ostream& out, const std::vector<TensorBlock>& blocks) {
  out.write(kCheckpointMagic, 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(blocks.size()));
  for (const TensorBlock& block : blocks) {
    write_u32(out, static_cast<std::uint32_t>(block.name.size()));
    out.write(block.name.data(), static_cast<std::streamsize>(block.name.size()));
    write_u32(out, static_cast<std::uint32_t>(block.value.rows()));
    write_u32(out, static_cast<std::uint32_t>(block.value.cols()));
    for (const float v : block.value.data()) write_f32(out, v);
  }
}

std::vector<TensorBlock> read_checkpoint(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw SchemaError("not a checkpoint file (bad magic)");
  }
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion) {
    throw SchemaError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = read_u32(in);
  std::vector<TensorBlock> blocks;
  for (std::uint32_t b = 0; b < count; ++b) {
    const std::uint32_t name_len = read_u32(in);
    if (name_len > 4096) throw SchemaError("checkpoint block name too long");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (static_cast<std::uint32_t>(in.gcount()) != name_len) {
      throw SchemaError("unexpected end of checkpoint");
    }
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    std::vector<float> data(static_cast<std::size_t>(rows) * cols);
    for (float& v : data) v = read_f32(in);
    blocks.push_back({std::move(name), TokenMatrix(rows, cols, std::move(data))});
  }
  return blocks;
}

void save_checkpoint(const std::string& path, const std::vector<TensorBlock>& blocks) {
  std::ostringstream buf;
  write_checkpoint(buf, blocks);
  write_file(path, buf.str());
}

std::vector<TensorBlock> load_checkpoint(const std::string& path) {
  std::istringstream in(read_file(path));
  return read_checkpoint(in);
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace molgeom::io
