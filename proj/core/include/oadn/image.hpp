#pragma once

#include <cstddef>
#include <vector>

namespace oadn {

// Square-pixel image with physical extent; holds the initial pressure p0.
// Row-major, row 0 is the probe-side (top) row: pixel (x, y) at y*n_x + x.
struct ImageGrid {
  std::size_t n_x = 0;
  std::size_t n_y = 0;
  double extent_m = 0.0;  // physical side length of the full grid
  std::vector<double> pixels;

  ImageGrid() = default;
  ImageGrid(std::size_t nx, std::size_t ny, double extent);

  double& at(std::size_t x, std::size_t y) { return pixels[y * n_x + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * n_x + x]; }
  std::size_t size() const { return pixels.size(); }
  double pixel_size() const { return extent_m / static_cast<double>(n_x); }

  bool same_shape(const ImageGrid& o) const { return n_x == o.n_x && n_y == o.n_y; }

  // Throws DataError on bad dims or non-finite pixels; optionally requires
  // nonnegativity (initial pressure).
  void validate(const char* context = "image", bool require_nonneg = false) const;
};

struct ImageStack {
  std::vector<double> wavelengths_nm;
  std::vector<ImageGrid> images;

  void validate(const char* context = "image stack") const;
};

}  // namespace oadn
