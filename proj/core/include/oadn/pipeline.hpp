#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "oadn/config.hpp"
#include "oadn/denoiser.hpp"

namespace oadn {

// Library-level implementations of the CLI subcommands. Every command
// writes a "manifest" key=value file into its output directory with the
// config hash, input hashes, toolkit version and wall-clock timings.

using ProgressFn = std::function<void(const std::string&)>;

// Builds train/val/test splits of noise-free, noise and composed noisy
// sinograms from a directory of 8-bit PGM feature images. Deterministic:
// identical config and images give byte-identical datasets.
void cmd_make_dataset(const PipelineConfig& cfg,
                      const std::filesystem::path& image_dir,
                      const std::filesystem::path& out_dir,
                      const ProgressFn& progress = {});

// Trains on the dataset's train split (fresh noise every step) with the
// val split as frozen validation pairs; writes model.oaml and
// train_log.csv (epoch, train_loss, val_loss, lr).
void cmd_train(const PipelineConfig& cfg, const std::filesystem::path& dataset_dir,
               const std::filesystem::path& out_dir,
               const ProgressFn& progress = {});

struct DenoiseSummary {
  std::size_t count = 0;
  double mean_gain_db = 0.0;    // only when ground truth was present
  double min_gain_db = 0.0;
  double mean_latency_s = 0.0;
  bool has_ground_truth = false;
};

// Denoises every sinogram in input_dir (a dataset split with noisy/ and
// optional noise/, or a flat directory of .oasg files). Emits denoised/
// and inferred_noise/ plus snr.csv when ground truth is available.
DenoiseSummary cmd_denoise(const PipelineConfig& cfg,
                           const std::filesystem::path& model_path,
                           const std::filesystem::path& input_dir,
                           const std::filesystem::path& out_dir,
                           const ProgressFn& progress = {});

// Model-based reconstruction of every .oasg in input_dir; emits OAIM
// images, 16-bit PGM previews and recon.csv (regularization weights used,
// iterations, final objective).
void cmd_reconstruct(const PipelineConfig& cfg,
                     const std::filesystem::path& input_dir,
                     const std::filesystem::path& out_dir,
                     const ProgressFn& progress = {});

// Blind spectral unmixing over one or more reconstructed stacks (each a
// cmd_reconstruct output directory). Emits spectra.csv (H), coefficient
// maps, correlations against the bundled synthetic reference spectra and
// depth_profiles.csv.
void cmd_unmix(const PipelineConfig& cfg,
               const std::vector<std::filesystem::path>& recon_dirs,
               const std::filesystem::path& out_dir,
               const ProgressFn& progress = {});

struct MetricsInputs {
  std::filesystem::path dataset_dir;   // required: dataset root
  std::filesystem::path denoised_dir;  // required: cmd_denoise output for test split
  // Optional image-domain inputs for contrast resolution:
  std::filesystem::path images_noisy_dir;
  std::filesystem::path images_denoised_dir;
  std::filesystem::path masks_dir;  // <stem>.vessels.pgm / <stem>.background.pgm
};

// Sinogram-domain metrics (per-scan SNR, SNR_mean curves, sigma sweep for
// gn datasets) and optional image-domain contrast resolution.
void cmd_metrics(const PipelineConfig& cfg, const MetricsInputs& in,
                 const std::filesystem::path& out_dir,
                 const ProgressFn& progress = {});

// Aggregates whatever metric CSVs exist under results_dir into the report
// bundle (histogram data, curves, CR table, depth contributions, PGM line
// plots) plus summary.txt with pass/fail verdicts; missing inputs are
// listed and the rest is still emitted.
void cmd_report(const std::filesystem::path& results_dir,
                const std::filesystem::path& out_dir,
                const ProgressFn& progress = {});

struct BenchResult {
  std::size_t n_transducers = 0;
  std::size_t n_samples = 0;
  int levels = 0;
  int base_channels = 0;
  double median_infer_s = 0.0;
  std::vector<double> runs_s;
};

// Per-sinogram inference latency at the full-scale sinogram shape
// (256 x 1808) for the configured architecture; written to bench.txt.
BenchResult cmd_bench(const PipelineConfig& cfg,
                      const std::optional<std::filesystem::path>& model_path,
                      const std::filesystem::path& out_dir,
                      const ProgressFn& progress = {});

// Shared helpers.
std::uint64_t file_hash(const std::filesystem::path& path);
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              const std::string& extension);
void render_curves_pgm(const std::vector<std::vector<double>>& series,
                       const std::filesystem::path& path, std::size_t width = 480,
                       std::size_t height = 320);

}  // namespace oadn
