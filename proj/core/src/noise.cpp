#include "oadn/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "oadn/errors.hpp"
#include "oadn/io.hpp"

namespace oadn {

void ThermalNoiseSpec::validate() const {
  if (!(sigma >= 0.0)) throw DataError("thermal noise: sigma must be >= 0");
}

void ParasiticNoiseSpec::validate(double sample_rate_hz) const {
  if (!(bursts_mean >= 0.0)) throw DataError("parasitic noise: bursts_mean < 0");
  if (!(carrier_low_hz > 0.0) || !(carrier_low_hz <= carrier_high_hz) ||
      !(carrier_high_hz < 0.5 * sample_rate_hz))
    throw DataError("parasitic noise: carrier range must lie inside (0, fs/2)");
  if (!(decay_low_s > 0.0) || !(decay_low_s <= decay_high_s))
    throw DataError("parasitic noise: bad decay range");
  if (!(amp_low >= 0.0) || !(amp_low <= amp_high))
    throw DataError("parasitic noise: bad amplitude range");
  if (block_low < 1 || block_low > block_high)
    throw DataError("parasitic noise: bad block size range");
  if (delay_low_samples > delay_high_samples)
    throw DataError("parasitic noise: bad delay range");
}

Sinogram gen_thermal(const ThermalNoiseSpec& spec, const SinogramShape& shape,
                     RngSeed seed, std::string_view stream_label) {
  spec.validate();
  if (shape.n_transducers < 1 || shape.n_samples < 1)
    throw DataError("gen_thermal: empty shape");
  Sinogram s(shape.n_transducers, shape.n_samples, shape.sample_rate_hz);
  if (spec.sigma == 0.0) return s;
  Rng rng(seed, stream_label);
  for (double& v : s.data) v = rng.gaussian(0.0, spec.sigma);
  return s;
}

Sinogram gen_parasitic(const ParasiticNoiseSpec& spec, const SinogramShape& shape,
                       RngSeed seed, std::string_view stream_label) {
  spec.validate(shape.sample_rate_hz);
  if (shape.n_transducers < 1 || shape.n_samples < 1)
    throw DataError("gen_parasitic: empty shape");
  Sinogram s(shape.n_transducers, shape.n_samples, shape.sample_rate_hz);
  Rng rng(seed, stream_label);
  const std::uint64_t n_bursts = rng.poisson(spec.bursts_mean);
  const double fs = shape.sample_rate_hz;
  for (std::uint64_t b = 0; b < n_bursts; ++b) {
    const auto onset = static_cast<std::int64_t>(rng.below(shape.n_samples));
    const double carrier = rng.uniform(spec.carrier_low_hz, spec.carrier_high_hz);
    const double amp = rng.uniform(spec.amp_low, spec.amp_high);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double decay_samples = rng.uniform(spec.decay_low_s, spec.decay_high_s) * fs;
    const auto block = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(spec.block_low),
        static_cast<std::int64_t>(spec.block_high)));
    const auto d0 = static_cast<std::size_t>(rng.below(shape.n_transducers));
    const auto delay = static_cast<std::int64_t>(rng.uniform_int(
        static_cast<std::int64_t>(spec.delay_low_samples),
        static_cast<std::int64_t>(spec.delay_high_samples)));
    const double omega = 2.0 * std::numbers::pi * carrier / fs;
    const std::size_t d_end = std::min(d0 + block, shape.n_transducers);
    for (std::size_t d = d0; d < d_end; ++d) {
      const std::int64_t ch_onset =
          onset + delay * static_cast<std::int64_t>(d - d0);
      double* row = s.channel(d);
      for (std::size_t t = static_cast<std::size_t>(std::max<std::int64_t>(ch_onset, 0));
           t < shape.n_samples; ++t) {
        const double dt = static_cast<double>(static_cast<std::int64_t>(t) - ch_onset);
        row[t] += amp * std::sin(omega * dt + phase) * std::exp(-dt / decay_samples);
      }
    }
  }
  return s;
}

ComposedSinogram compose_noisy(const Sinogram& s_oa, const Sinogram& n_thermal,
                               const Sinogram& n_parasitic) {
  if (!s_oa.same_shape(n_thermal) || !s_oa.same_shape(n_parasitic))
    throw DataError("compose_noisy: shape mismatch");
  ComposedSinogram out;
  out.noise = Sinogram(s_oa.n_transducers, s_oa.n_samples, s_oa.sample_rate_hz);
  out.noisy = out.noise;
  out.noisy.wavelength_nm = s_oa.wavelength_nm;
  for (std::size_t i = 0; i < s_oa.size(); ++i) {
    out.noise.data[i] = n_thermal.data[i] + n_parasitic.data[i];
    out.noisy.data[i] = s_oa.data[i] + out.noise.data[i];
  }
  return out;
}

NoiseCorpus load_noise_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw DataError("load_noise_corpus: not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".oasg")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());

  NoiseCorpus corpus;
  std::string offenders;
  for (const auto& f : files) {
    Sinogram s = read_sinogram(f);  // rejects NaN with the file name
    if (!corpus.sinograms.empty() && !s.same_shape(corpus.sinograms.front()))
      offenders += (offenders.empty() ? "" : ", ") + f.filename().string();
    else {
      corpus.sinograms.push_back(std::move(s));
      corpus.files.push_back(f);
    }
  }
  if (!offenders.empty())
    throw DataError("load_noise_corpus: mixed shapes in " + dir.string() + ": " +
                    offenders);
  return corpus;
}

}  // namespace oadn
