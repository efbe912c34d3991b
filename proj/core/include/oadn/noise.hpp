#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "oadn/rng.hpp"
#include "oadn/sinogram.hpp"

namespace oadn {

struct ThermalNoiseSpec {
  double sigma = 0.25;  // standard deviation in sinogram amplitude units

  void validate() const;
};

// Damped-sinusoid interference bursts replicated over a contiguous
// transducer block with a per-channel onset delay: streaks that are
// correlated across neighboring channels and across time.
struct ParasiticNoiseSpec {
  double bursts_mean = 2.0;            // Poisson mean per sinogram
  double carrier_low_hz = 6e5;
  double carrier_high_hz = 6e6;
  double decay_low_s = 1e-6;
  double decay_high_s = 5e-6;
  double amp_low = 0.2;
  double amp_high = 0.8;
  std::size_t block_low = 8;           // transducers per burst, inclusive range
  std::size_t block_high = 24;
  std::size_t delay_low_samples = 0;   // onset shift per channel step
  std::size_t delay_high_samples = 2;

  void validate(double sample_rate_hz) const;
};

struct SinogramShape {
  std::size_t n_transducers = 0;
  std::size_t n_samples = 0;
  double sample_rate_hz = 0.0;
};

// I.i.d. zero-mean Gaussian samples, std = spec.sigma.
Sinogram gen_thermal(const ThermalNoiseSpec& spec, const SinogramShape& shape,
                     RngSeed seed, std::string_view stream_label = "thermal");

// Sum of Poisson-many bursts; each burst picks onset, carrier, amplitude,
// phase, decay, transducer block and per-channel delay from its own draws.
Sinogram gen_parasitic(const ParasiticNoiseSpec& spec, const SinogramShape& shape,
                       RngSeed seed, std::string_view stream_label = "parasitic");

struct ComposedSinogram {
  Sinogram noisy;   // s = s_oa + n_th + n_par
  Sinogram noise;   // ground-truth noise component n_th + n_par
};

// Elementwise sum; also returns the ground-truth noise so the pair can be
// stored for supervised training and exact SNR evaluation.
ComposedSinogram compose_noisy(const Sinogram& s_oa, const Sinogram& n_thermal,
                               const Sinogram& n_parasitic);

struct NoiseCorpus {
  std::vector<Sinogram> sinograms;
  std::vector<std::filesystem::path> files;
};

// Loads every *.oasg in the directory as measured pure-noise data. All
// files must share one shape; NaN payloads are rejected by the reader.
NoiseCorpus load_noise_corpus(const std::filesystem::path& dir);

}  // namespace oadn
