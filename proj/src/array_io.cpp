#include "vlsa/array_io.hpp"

#include <bit>
#include <cstring>

#include "vlsa/error.hpp"

namespace vlsa {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::video:
      return "video";
    case Modality::text:
      return "text";
    case Modality::audio:
      return "audio";
  }
  return "unknown";
}

std::size_t ArrayBlock::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const std::string& source) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw IoError(source + ": unexpected end of file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

void write_header(std::ostream& out, Modality modality, DType dtype, std::span<const std::uint32_t> dims,
                  std::size_t count) {
  out.write("VLSA", 4);
  put_u16(out, kArrayFormatVersion);
  out.put(static_cast<char>(modality));
  out.put(static_cast<char>(dtype));
  put_u32(out, static_cast<std::uint32_t>(dims.size()));
  put_u32(out, static_cast<std::uint32_t>(count));
  for (auto d : dims) put_u32(out, d);
}

std::size_t product(std::span<const std::uint32_t> dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

void put_u16(std::ostream& out, std::uint16_t v) { put_le(out, v); }
void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void put_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
std::uint16_t get_u16(std::istream& in, const std::string& source) { return get_le<std::uint16_t>(in, source); }
std::uint32_t get_u32(std::istream& in, const std::string& source) { return get_le<std::uint32_t>(in, source); }
std::uint64_t get_u64(std::istream& in, const std::string& source) { return get_le<std::uint64_t>(in, source); }
float get_f32(std::istream& in, const std::string& source) {
  return std::bit_cast<float>(get_le<std::uint32_t>(in, source));
}
double get_f64(std::istream& in, const std::string& source) {
  return std::bit_cast<double>(get_le<std::uint64_t>(in, source));
}

void write_block(std::ostream& out, Modality modality, std::span<const std::uint32_t> dims,
                 std::span<const float> data) {
  if (product(dims) != data.size()) throw std::invalid_argument("write_block: dims do not match data size");
  write_header(out, modality, DType::f32, dims, data.size());
  for (float v : data) put_f32(out, v);
}

void write_block(std::ostream& out, Modality modality, std::span<const std::uint32_t> dims,
                 std::span<const std::int32_t> data) {
  if (product(dims) != data.size()) throw std::invalid_argument("write_block: dims do not match data size");
  write_header(out, modality, DType::i32, dims, data.size());
  for (std::int32_t v : data) put_u32(out, static_cast<std::uint32_t>(v));
}

ArrayBlock read_block(std::istream& in, const std::string& source) {
  char magic[4];
  if (!in.read(magic, 4)) throw IoError(source + ": unexpected end of file");
  if (std::memcmp(magic, "VLSA", 4) != 0) throw IoError(source + ": bad array magic");
  const std::uint16_t version = get_u16(in, source);
  if (version != kArrayFormatVersion) throw IoError(source + ": unsupported array version " + std::to_string(version));
  const int modality = in.get();
  const int dtype = in.get();
  if (modality < 0 || modality > 2) throw IoError(source + ": bad modality tag");
  if (dtype < 0 || dtype > 1) throw IoError(source + ": bad dtype tag");
  ArrayBlock block;
  block.modality = static_cast<Modality>(modality);
  block.dtype = static_cast<DType>(dtype);
  const std::uint32_t rank = get_u32(in, source);
  const std::uint32_t count = get_u32(in, source);
  if (rank > 8) throw IoError(source + ": implausible array rank " + std::to_string(rank));
  for (std::uint32_t i = 0; i < rank; ++i) block.dims.push_back(get_u32(in, source));
  if (block.element_count() != count) throw IoError(source + ": element count does not match dims");
  if (block.dtype == DType::f32) {
    block.f32.resize(count);
    for (auto& v : block.f32) v = get_f32(in, source);
  } else {
    block.i32.resize(count);
    for (auto& v : block.i32) v = static_cast<std::int32_t>(get_u32(in, source));
  }
  return block;
}

}  // namespace vlsa
