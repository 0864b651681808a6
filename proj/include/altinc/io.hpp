#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "altinc/tensor.hpp"

namespace altinc::io {

inline constexpr std::string_view kParamMagic = "ALTINC01";
inline constexpr std::string_view kProbMapMagic = "ALTPM001";

struct NamedTensor {
  std::string name;
  Tensor tensor;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Magic "ALTINC01", 8-byte config hash, then records until EOF:
/// u64 name length, name bytes, u64 rank, u64 dims, f64 values (all little-endian).
struct ParamFile {
  std::uint64_t config_hash = 0;
  std::vector<NamedTensor> records;
};

std::string encode_param_file(const ParamFile& file);
ParamFile decode_param_file(std::string_view bytes);
void write_param_file(const std::filesystem::path& path, const ParamFile& file);
ParamFile read_param_file(const std::filesystem::path& path);

/// Magic "ALTPM001", u64 c,h,w, then c*h*w f64, channel-major row-major.
std::string encode_probmap(const ProbMap& map);
/// Rejects bad magic, truncation, trailing bytes and channel sums off by more than 1e-6.
ProbMap decode_probmap(std::string_view bytes);
void save_probmap(const std::filesystem::path& path, const ProbMap& map);
ProbMap load_probmap(const std::filesystem::path& path);

/// 8-bit binary PGM (P5), gray value = class id.
std::string encode_pgm(const LabelMap& labels);
LabelMap decode_pgm(std::string_view bytes);
void write_pgm(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_pgm(const std::filesystem::path& path);

using Rgb8 = std::array<std::uint8_t, 3>;

/// Binary PPM (P6) image, h x w, row-major RGB triples.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Rgb8> pixels;

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

std::string encode_ppm(const RgbImage& image);
RgbImage decode_ppm(std::string_view bytes);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// FNV-1a digest of a file's bytes, as 16 lowercase hex digits.
std::string file_digest(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace altinc::io
