#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "oadn/noise.hpp"
#include "oadn/rng.hpp"
#include "oadn/sinogram.hpp"

namespace oadn {

// U-Net style residual network that infers the electrical-noise component
// of a whole sinogram. Fixed ingredients: 3x3 kernels, ReLU, per-channel
// feature normalization, channel doubling per level, concatenation skips,
// 1x1 single-channel head. Input height and width must each be divisible
// by 2^levels.
struct DenoiserArch {
  int levels = 4;
  int base_channels = 16;

  void validate() const;
  std::size_t divisor() const { return std::size_t{1} << levels; }
};

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t count = 0;
  bool trainable = true;  // false for the normalization running statistics
};

std::vector<ParamTensor> build_param_layout(const DenoiserArch& arch);
std::size_t param_count(const DenoiserArch& arch);

struct DenoiserModel {
  DenoiserArch arch;
  double input_scale = 0.004;
  std::vector<float> params;
  // Training fingerprint.
  std::uint64_t config_hash = 0;
  std::uint32_t best_epoch = 0;
  double val_loss = 0.0;
};

// Deterministic initialization: He-normal conv weights (stream label
// "init/<tensor>"), zero biases, unit normalization scale — except the head,
// which starts at exactly zero so the untrained network is the identity
// denoiser (inferred noise = 0).
DenoiserModel init_model(const DenoiserArch& arch, RngSeed seed,
                         double input_scale);

struct TrainConfig {
  int epochs = 300;
  int batch_size = 1;  // the training loop is defined at batch size 1
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int decay_epochs = 50;  // linear decay of lr to zero over the final epochs
  double input_scale = 0.004;
  double validation_fraction = 0.1;  // used if no explicit validation pairs
  RngSeed seed{1};
  std::uint64_t config_hash = 0;  // recorded in the model fingerprint

  void validate() const;
};

// One supervised example with its ground-truth noise component.
struct DenoisePair {
  Sinogram noisy;
  Sinogram noise;
};

// Source of independent noise realizations; every (purpose, index) pair is
// an independent labeled stream, so draws are reproducible and unordered.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual Sinogram draw(std::string_view purpose, std::uint64_t index,
                        const SinogramShape& shape) const = 0;
};

class ZeroNoiseSource final : public NoiseSource {
 public:
  Sinogram draw(std::string_view, std::uint64_t,
                const SinogramShape& shape) const override;
};

// Thermal + parasitic noise with fixed specs (training distribution of the
// electrical-noise datasets).
class CompositeNoiseSource final : public NoiseSource {
 public:
  CompositeNoiseSource(ThermalNoiseSpec thermal, ParasiticNoiseSpec parasitic,
                       RngSeed seed)
      : thermal_(thermal), parasitic_(parasitic), seed_(seed) {}
  Sinogram draw(std::string_view purpose, std::uint64_t index,
                const SinogramShape& shape) const override;

 private:
  ThermalNoiseSpec thermal_;
  ParasiticNoiseSpec parasitic_;
  RngSeed seed_;
};

// White Gaussian noise with per-draw standard deviation uniform in
// (0, sigma_max] (Gaussian-sweep training distribution).
class GaussianLevelNoiseSource final : public NoiseSource {
 public:
  GaussianLevelNoiseSource(double sigma_max, RngSeed seed)
      : sigma_max_(sigma_max), seed_(seed) {}
  Sinogram draw(std::string_view purpose, std::uint64_t index,
                const SinogramShape& shape) const override;

 private:
  double sigma_max_;
  RngSeed seed_;
};

// Uniformly resampled measured noise sinograms.
class PooledNoiseSource final : public NoiseSource {
 public:
  PooledNoiseSource(std::vector<Sinogram> pool, RngSeed seed);
  Sinogram draw(std::string_view purpose, std::uint64_t index,
                const SinogramShape& shape) const override;

 private:
  std::vector<Sinogram> pool_;
  RngSeed seed_;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

// Inferred noise estimate; input is scaled by input_scale internally and
// the estimate rescaled back. Deterministic (frozen running statistics).
Sinogram infer_noise(const DenoiserModel& m, const Sinogram& s);
// f64 verification path, used by forward-pass oracles.
Sinogram infer_noise_f64(const DenoiserModel& m, const Sinogram& s);

// s minus the inferred noise.
Sinogram denoise(const DenoiserModel& m, const Sinogram& s);

// Supervised training on noise-free sinograms and an independent noise
// source: per step, a fresh pair s = s_oa + n with target n, mean-absolute
// error on the scaled residual, ADAM updates, per-epoch validation; returns
// the checkpoint with minimal validation loss.
using EpochCallback = std::function<void(const EpochLog&)>;
DenoiserModel train_denoiser(const DenoiserArch& arch,
                             const std::vector<Sinogram>& corpus_oa,
                             const NoiseSource& noise, const TrainConfig& cfg,
                             std::vector<DenoisePair> val_pairs = {},
                             std::vector<EpochLog>* log = nullptr,
                             const EpochCallback& on_epoch = {});

// Analytic gradients of the L1 loss versus central finite differences
// (step 1e-6) in f64, on models with at most 10^4 parameters. Returns the
// maximum relative error max|ga-gfd| / max(|ga|, |gfd|, 1e-6).
double gradient_check(const DenoiserModel& m, const Sinogram& s,
                      const Sinogram& target, double fd_step = 1e-6);

// One ADAM step on the given model from one (input, target) pair in f64;
// used by the optimizer oracle. Returns the parameters after the step.
std::vector<double> adam_reference_step(const DenoiserModel& m, const Sinogram& s,
                                        const Sinogram& target,
                                        const TrainConfig& cfg);

// OAML model file: magic, version, arch fields, input scale, fingerprint,
// named tensor table, f32 weight blob. Round-trips bit-exactly.
void save_model(const DenoiserModel& m, const std::filesystem::path& path);
DenoiserModel load_model(const std::filesystem::path& path);

}  // namespace oadn
