#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "oadn/image.hpp"
#include "oadn/sinogram.hpp"

namespace oadn {

// OASG sinogram file, little-endian throughout:
//   "OASG" | u16 version=1 | u32 n_transducers | u32 n_samples
//   | f64 sample_rate_hz | f32 wavelength_nm (quiet NaN if absent)
//   | f32 samples, transducer-major
// 26-byte header. Samples are rounded to f32 on write.
void write_sinogram(const Sinogram& s, const std::filesystem::path& path);
Sinogram read_sinogram(const std::filesystem::path& path);

// OAIM image file, little-endian:
//   "OAIM" | u16 version=1 | u32 n_x | u32 n_y | f64 extent_m
//   | f32 pixels, row-major
void write_image(const ImageGrid& img, const std::filesystem::path& path);
ImageGrid read_image(const std::filesystem::path& path);

// 8-bit binary PGM (P5). Values returned in [0, 1] (divided by maxval).
ImageGrid read_pgm(const std::filesystem::path& path, double extent_m = 1.0);
void write_pgm8(const ImageGrid& img, const std::filesystem::path& path,
                double lo, double hi);

// 16-bit preview PGM, min-max normalized; the applied normalization is
// recorded in a sidecar text file "<path>.norm.txt".
void write_pgm16_preview(const ImageGrid& img, const std::filesystem::path& path);

// Plain-text "key = value" file; keys kept in insertion order on write,
// lookup by exact key. '#' starts a comment.
class KeyValueFile {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::uint64_t value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;  // throws DataError
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
  static KeyValueFile load(const std::filesystem::path& path);
  static KeyValueFile parse(const std::string& text);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
};

// A multispectral stack on disk is a directory of OASG files plus a
// "stack.manifest" with wavelengths, counts and geometry fields.
void write_sinogram_stack(const SinogramStack& stack, const std::filesystem::path& dir,
                          const KeyValueFile& geometry_info);
SinogramStack read_sinogram_stack(const std::filesystem::path& dir);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace oadn
