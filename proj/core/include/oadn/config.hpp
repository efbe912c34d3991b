#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oadn/denoiser.hpp"
#include "oadn/dsp.hpp"
#include "oadn/forward.hpp"
#include "oadn/geometry.hpp"
#include "oadn/noise.hpp"
#include "oadn/unmix.hpp"

namespace oadn {

// Every numeric knob of the pipeline in one plain-text file; the serialized
// canonical form is hashed into every output manifest.
struct PipelineConfig {
  ArrayGeometry geometry;
  GridSpec grid;
  std::size_t n_samples = 320;
  std::int64_t t_offset_samples = 40;
  double arc_oversample = 2.0;

  bool bandpass_enabled = false;
  BandpassSpec bandpass;
  std::size_t crop_after_filter = 0;  // 0 = keep full length

  double signal_peak_target = 2.5;  // per-sinogram max-abs normalization

  std::string noise_mode = "en";  // "en" (thermal+parasitic) or "gn" (sweep)
  ThermalNoiseSpec thermal;
  ParasiticNoiseSpec parasitic;
  double gn_train_sigma_max = 0.5;
  double gn_test_sigma_step = 0.1;
  double gn_test_sigma_max = 2.0;

  std::size_t n_train = 2000;
  std::size_t n_val = 128;
  std::size_t n_test = 128;
  bool augment = true;

  DenoiserArch arch;
  TrainConfig train;

  double recon_lambda_rel_tikhonov = 1e-2;
  double recon_lambda_rel_laplacian = 1e-2;
  std::size_t recon_max_iters = 200;
  double recon_rel_tol = 1e-6;

  NmfConfig nmf;

  double wavelength_start_nm = 700.0;
  double wavelength_stop_nm = 970.0;
  double wavelength_step_nm = 30.0;

  std::size_t metrics_window_samples = 64;
  std::size_t metrics_crop_samples = 288;
  std::vector<std::size_t> excluded_channels;

  RngSeed seed{1};

  std::vector<double> wavelengths() const;
  SinogramShape sinogram_shape() const;
  ForwardOperator make_operator() const;
  void validate() const;
};

// Desk-scale defaults (fits a single CPU); full-scale profile retains the
// scanner constants: 256 transducers, radius 6 cm, 145 degrees, 40 MHz,
// 1808 samples, 400x400 grid over 3.99 cm, input scale 0.004.
PipelineConfig desk_config();
PipelineConfig fullscale_config();

std::string serialize_config(const PipelineConfig& cfg);
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& cfg, const std::filesystem::path& path);

// "section.key=value" override on top of a loaded config.
void apply_override(PipelineConfig& cfg, const std::string& assignment);

std::uint64_t config_hash(const PipelineConfig& cfg);

}  // namespace oadn
