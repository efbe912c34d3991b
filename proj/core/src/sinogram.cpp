#include "oadn/sinogram.hpp"

#include <cmath>
#include <string>

#include "oadn/errors.hpp"

namespace oadn {

Sinogram::Sinogram(std::size_t d, std::size_t t, double fs)
    : n_transducers(d), n_samples(t), sample_rate_hz(fs), data(d * t, 0.0) {}

void Sinogram::validate(const char* context) const {
  const std::string ctx(context);
  if (n_transducers < 1 || n_samples < 1)
    throw DataError(ctx + ": empty dimensions (" + std::to_string(n_transducers) +
                    "x" + std::to_string(n_samples) + ")");
  if (data.size() != n_transducers * n_samples)
    throw DataError(ctx + ": data length " + std::to_string(data.size()) +
                    " != n_transducers*n_samples " +
                    std::to_string(n_transducers * n_samples));
  for (double v : data)
    if (!std::isfinite(v)) throw DataError(ctx + ": non-finite sample");
}

void SinogramStack::validate(const char* context) const {
  const std::string ctx(context);
  if (wavelengths_nm.size() != scans.size())
    throw DataError(ctx + ": wavelength count != scan count");
  for (std::size_t i = 1; i < wavelengths_nm.size(); ++i)
    if (!(wavelengths_nm[i] > wavelengths_nm[i - 1]))
      throw DataError(ctx + ": wavelengths not strictly increasing");
  for (std::size_t i = 1; i < scans.size(); ++i)
    if (!scans[i].same_shape(scans[0]))
      throw DataError(ctx + ": scan " + std::to_string(i) + " shape differs");
}

}  // namespace oadn
