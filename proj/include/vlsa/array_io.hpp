#pragma once

// Binary array blocks shared by dataset sample files and spectrogram exports.
//
// Block layout, all little-endian:
//   bytes 0-3   magic "VLSA"
//   bytes 4-5   u16 format version (1)
//   byte  6     u8 modality tag (0 video, 1 text, 2 audio)
//   byte  7     u8 dtype (0 float32, 1 int32)
//   bytes 8-11  u32 rank
//   bytes 12-15 u32 element count
//   rank x u32 dims, then element count x 4-byte payload in row-major order.

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace vlsa {

enum class Modality : std::uint8_t { video = 0, text = 1, audio = 2 };
enum class DType : std::uint8_t { f32 = 0, i32 = 1 };

inline constexpr std::uint16_t kArrayFormatVersion = 1;

const char* modality_name(Modality m);

struct ArrayBlock {
  Modality modality = Modality::video;
  DType dtype = DType::f32;
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;
  std::vector<std::int32_t> i32;

  std::size_t element_count() const;
};

void write_block(std::ostream& out, Modality modality, std::span<const std::uint32_t> dims,
                 std::span<const float> data);
void write_block(std::ostream& out, Modality modality, std::span<const std::uint32_t> dims,
                 std::span<const std::int32_t> data);

// `source` names the file in error messages. Throws IoError on truncation or
// a bad header.
ArrayBlock read_block(std::istream& in, const std::string& source);

// Little-endian scalar helpers.
void put_u16(std::ostream& out, std::uint16_t v);
void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_f32(std::ostream& out, float v);
void put_f64(std::ostream& out, double v);
std::uint16_t get_u16(std::istream& in, const std::string& source);
std::uint32_t get_u32(std::istream& in, const std::string& source);
std::uint64_t get_u64(std::istream& in, const std::string& source);
float get_f32(std::istream& in, const std::string& source);
double get_f64(std::istream& in, const std::string& source);

}  // namespace vlsa
