#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace oadn {

// Time-resolved pressure signals of one scan, indexed [transducer d, time t].
// Samples live contiguously per transducer so per-channel loops stream memory.
// In-memory samples are f64 (solver precision); the OASG file stores f32.
struct Sinogram {
  std::size_t n_transducers = 0;
  std::size_t n_samples = 0;
  double sample_rate_hz = 0.0;
  std::optional<double> wavelength_nm;
  std::vector<double> data;  // size n_transducers * n_samples, d-major

  Sinogram() = default;
  Sinogram(std::size_t d, std::size_t t, double fs);

  double& at(std::size_t d, std::size_t t) { return data[d * n_samples + t]; }
  double at(std::size_t d, std::size_t t) const { return data[d * n_samples + t]; }
  double* channel(std::size_t d) { return data.data() + d * n_samples; }
  const double* channel(std::size_t d) const { return data.data() + d * n_samples; }
  std::size_t size() const { return data.size(); }

  bool same_shape(const Sinogram& o) const {
    return n_transducers == o.n_transducers && n_samples == o.n_samples;
  }

  // Throws DataError on empty dims, size mismatch or non-finite samples.
  void validate(const char* context = "sinogram") const;
};

// Ordered per-wavelength set of sinograms with identical shapes.
struct SinogramStack {
  std::vector<double> wavelengths_nm;  // strictly increasing
  std::vector<Sinogram> scans;

  void validate(const char* context = "stack") const;
};

}  // namespace oadn
