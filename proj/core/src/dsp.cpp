#include "oadn/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "oadn/errors.hpp"

namespace oadn {

namespace {

using cd = std::complex<double>;

// Denominator coefficients from a pole pair (conjugate pair or two reals):
// (1 - p z^-1)(1 - q z^-1).
Biquad biquad_from_poles(cd p, cd q) {
  Biquad s{};
  s.a1 = -(p + q).real();
  s.a2 = (p * q).real();
  return s;
}

}  // namespace

void BandpassSpec::validate(double sample_rate_hz) const {
  if (!(low_cut_hz > 0.0) || !(low_cut_hz < high_cut_hz))
    throw DataError("bandpass: need 0 < low_cut < high_cut");
  if (!(high_cut_hz < 0.5 * sample_rate_hz))
    throw DataError("bandpass: high cut " + std::to_string(high_cut_hz) +
                    " Hz is at or above Nyquist (fs = " +
                    std::to_string(sample_rate_hz) + " Hz)");
  if (order < 1 || order > 8) throw DataError("bandpass: order must be in [1, 8]");
}

std::vector<Biquad> design_bandpass(const BandpassSpec& spec, double fs) {
  spec.validate(fs);
  const int n = spec.order;
  const double pi = std::numbers::pi;

  // Prewarped analog band edges.
  const double w1 = 2.0 * fs * std::tan(pi * spec.low_cut_hz / fs);
  const double w2 = 2.0 * fs * std::tan(pi * spec.high_cut_hz / fs);
  const double bw = w2 - w1;
  const double w0 = std::sqrt(w1 * w2);

  // Butterworth low-pass prototype poles, then LP->BP: each prototype pole
  // splits into two; the s-plane zeros (n at 0, n at infinity) map to n
  // zeros at z=1 and n at z=-1 under the bilinear transform.
  std::vector<cd> zpoles;
  for (int k = 0; k < n; ++k) {
    const double theta = pi * (2.0 * k + n + 1.0) / (2.0 * n);
    const cd proto(std::cos(theta), std::sin(theta));
    const cd pb = proto * (0.5 * bw);
    const cd disc = std::sqrt(pb * pb - cd(w0 * w0, 0.0));
    for (const cd s : {pb + disc, pb - disc}) {
      zpoles.push_back((2.0 * fs + s) / (2.0 * fs - s));  // bilinear
    }
  }

  // Pair conjugates (keep one representative of each pair), pair reals.
  constexpr double kImagTol = 1e-12;
  std::vector<cd> complex_reps;
  std::vector<double> reals;
  for (const cd& p : zpoles) {
    if (std::abs(p.imag()) > kImagTol) {
      if (p.imag() > 0.0) complex_reps.push_back(p);
    } else {
      reals.push_back(p.real());
    }
  }
  std::sort(reals.begin(), reals.end());

  std::vector<Biquad> sos;
  for (const cd& p : complex_reps) sos.push_back(biquad_from_poles(p, std::conj(p)));
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2)
    sos.push_back(biquad_from_poles(cd(reals[i], 0.0), cd(reals[i + 1], 0.0)));

  // One zero pair (z-1)(z+1) per section: b = [1, 0, -1].
  for (auto& s : sos) {
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;
  }

  // Normalize to unit gain at the digital center frequency, spread evenly.
  const double f0 = std::atan2(w0, 2.0 * fs) / pi * fs;  // maps prewarped w0 back
  double g = cascade_gain(sos, f0, fs);
  if (!(g > 0.0)) throw NumericError("bandpass design: degenerate center gain");
  const double per_section = std::pow(1.0 / g, 1.0 / static_cast<double>(sos.size()));
  for (auto& s : sos) {
    s.b0 *= per_section;
    s.b1 *= per_section;
    s.b2 *= per_section;
  }
  return sos;
}

double cascade_gain(const std::vector<Biquad>& sos, double freq_hz, double fs) {
  const double w = 2.0 * std::numbers::pi * freq_hz / fs;
  const cd z1 = std::polar(1.0, -w);
  const cd z2 = z1 * z1;
  cd h(1.0, 0.0);
  for (const auto& s : sos)
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return std::abs(h);
}

void sosfilt_inplace(const std::vector<Biquad>& sos, double* x, std::size_t n) {
  for (const auto& s : sos) {
    double z1 = 0.0, z2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double in = x[i];
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      x[i] = out;
    }
  }
}

void filtfilt_inplace(const std::vector<Biquad>& sos, double* x, std::size_t n,
                      std::size_t pad) {
  pad = std::min(pad, n - 1);
  std::vector<double> ext(n + 2 * pad);
  // Odd reflection about both endpoints.
  for (std::size_t i = 0; i < pad; ++i)
    ext[i] = 2.0 * x[0] - x[pad - i];
  std::copy(x, x + n, ext.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i)
    ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

  sosfilt_inplace(sos, ext.data(), ext.size());
  std::reverse(ext.begin(), ext.end());
  sosfilt_inplace(sos, ext.data(), ext.size());
  std::reverse(ext.begin(), ext.end());
  std::copy(ext.begin() + static_cast<std::ptrdiff_t>(pad),
            ext.begin() + static_cast<std::ptrdiff_t>(pad + n), x);
}

Sinogram bandpass(const Sinogram& s, const BandpassSpec& spec) {
  s.validate("bandpass");
  const auto sos = design_bandpass(spec, s.sample_rate_hz);
  Sinogram out = s;
  const std::size_t pad = static_cast<std::size_t>(6 * spec.order);
  for (std::size_t d = 0; d < out.n_transducers; ++d) {
    if (spec.zero_phase)
      filtfilt_inplace(sos, out.channel(d), out.n_samples, pad);
    else
      sosfilt_inplace(sos, out.channel(d), out.n_samples);
  }
  return out;
}

Sinogram crop_time(const Sinogram& s, std::size_t target_samples) {
  s.validate("crop_time");
  if (target_samples % 16 != 0)
    throw DataError("crop_time: target " + std::to_string(target_samples) +
                    " not divisible by 16");
  if (target_samples == 0 || target_samples > s.n_samples)
    throw DataError("crop_time: target " + std::to_string(target_samples) +
                    " out of range (n_samples = " + std::to_string(s.n_samples) + ")");
  const std::size_t excess = s.n_samples - target_samples;
  const std::size_t lead = excess / 2;  // odd excess: extra sample off the end
  Sinogram out(s.n_transducers, target_samples, s.sample_rate_hz);
  out.wavelength_nm = s.wavelength_nm;
  for (std::size_t d = 0; d < s.n_transducers; ++d)
    std::copy(s.channel(d) + lead, s.channel(d) + lead + target_samples,
              out.channel(d));
  return out;
}

Sinogram scale(const Sinogram& s, double factor) {
  if (factor == 0.0) throw DataError("scale: factor must be nonzero");
  Sinogram out = s;
  for (double& v : out.data) v *= factor;
  return out;
}

Sinogram unscale(const Sinogram& s, double factor) {
  if (factor == 0.0) throw DataError("unscale: factor must be nonzero");
  Sinogram out = s;
  for (double& v : out.data) v /= factor;
  return out;
}

}  // namespace oadn
