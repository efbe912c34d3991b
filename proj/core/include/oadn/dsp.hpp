#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "oadn/sinogram.hpp"

namespace oadn {

struct BandpassSpec {
  double low_cut_hz = 500e3;
  double high_cut_hz = 10e6;
  int order = 3;  // analog prototype order; realized band-pass order is 2x
  bool zero_phase = true;

  void validate(double sample_rate_hz) const;  // throws DataError
};

// One second-order section, direct form II transposed coefficients.
struct Biquad {
  double b0, b1, b2;
  double a1, a2;  // a0 normalized to 1
};

// Butterworth band-pass as a biquad cascade (bilinear transform with
// prewarping; gain normalized to 1 at the geometric center frequency).
std::vector<Biquad> design_bandpass(const BandpassSpec& spec, double sample_rate_hz);

// |H(f)| of the cascade at one frequency.
double cascade_gain(const std::vector<Biquad>& sos, double freq_hz,
                    double sample_rate_hz);

// Filters each channel independently. zero_phase applies the cascade
// forward and backward (gain |H|^2, no group delay) with odd-reflect
// padding of three times the realized filter order at both ends.
Sinogram bandpass(const Sinogram& s, const BandpassSpec& spec);

// Removes leading/trailing samples symmetrically down to target_samples;
// an odd excess loses the extra sample at the end. target must be
// divisible by 16 (network downsampling depth) and <= n_samples.
Sinogram crop_time(const Sinogram& s, std::size_t target_samples);

// Elementwise amplitude scaling; scale then unscale is an identity up to
// f64 round-off. factor must be nonzero.
Sinogram scale(const Sinogram& s, double factor);
Sinogram unscale(const Sinogram& s, double factor);

// Single-channel helpers used by the sinogram-level entry points.
void sosfilt_inplace(const std::vector<Biquad>& sos, double* x, std::size_t n);
void filtfilt_inplace(const std::vector<Biquad>& sos, double* x, std::size_t n,
                      std::size_t pad);

}  // namespace oadn
