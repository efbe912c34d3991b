#include "oadn/image.hpp"

#include <cmath>
#include <string>

#include "oadn/errors.hpp"

namespace oadn {

ImageGrid::ImageGrid(std::size_t nx, std::size_t ny, double extent)
    : n_x(nx), n_y(ny), extent_m(extent), pixels(nx * ny, 0.0) {}

void ImageGrid::validate(const char* context, bool require_nonneg) const {
  const std::string ctx(context);
  if (n_x < 1 || n_y < 1) throw DataError(ctx + ": empty dimensions");
  if (pixels.size() != n_x * n_y)
    throw DataError(ctx + ": pixel count " + std::to_string(pixels.size()) +
                    " != n_x*n_y");
  if (!(extent_m > 0.0)) throw DataError(ctx + ": extent must be positive");
  for (double v : pixels) {
    if (!std::isfinite(v)) throw DataError(ctx + ": non-finite pixel");
    if (require_nonneg && v < 0.0) throw DataError(ctx + ": negative pixel");
  }
}

void ImageStack::validate(const char* context) const {
  const std::string ctx(context);
  if (wavelengths_nm.size() != images.size())
    throw DataError(ctx + ": wavelength count != image count");
  for (std::size_t i = 1; i < wavelengths_nm.size(); ++i)
    if (!(wavelengths_nm[i] > wavelengths_nm[i - 1]))
      throw DataError(ctx + ": wavelengths not strictly increasing");
  for (std::size_t i = 1; i < images.size(); ++i)
    if (!images[i].same_shape(images[0]))
      throw DataError(ctx + ": image " + std::to_string(i) + " shape differs");
}

}  // namespace oadn
