// Pipeline driver: dataset generation, training, denoising, reconstruction,
// unmixing, evaluation and reporting for the sinogram-denoising toolkit.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "oadn/config.hpp"
#include "oadn/errors.hpp"
#include "oadn/io.hpp"
#include "oadn/pipeline.hpp"
#include "oadn/version.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::filesystem::path resolve_out(const std::string& out) {
  std::filesystem::path p(out);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("OADN_OUT_ROOT"))
    return std::filesystem::path(root) / p;
  return p;
}

oadn::PipelineConfig make_config(const std::string& config_path,
                                 const std::string& profile,
                                 const std::vector<std::string>& overrides) {
  oadn::PipelineConfig cfg;
  if (!config_path.empty()) {
    cfg = oadn::load_config(config_path);
  } else if (profile == "fullscale") {
    cfg = oadn::fullscale_config();
  } else {
    cfg = oadn::desk_config();
  }
  for (const auto& o : overrides) oadn::apply_override(cfg, o);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"optoacoustic sinogram denoising pipeline"};
  app.set_version_flag("--version", std::string(oadn::kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::string profile = "desk";
  std::vector<std::string> overrides;
  bool quiet = false;
  app.add_option("--config", config_path, "pipeline config file");
  app.add_option("--profile", profile, "built-in profile when no config given")
      ->check(CLI::IsMember({"desk", "fullscale"}));
  app.add_option("--set", overrides, "override: section.key=value");
  app.add_flag("--quiet", quiet, "suppress progress output");
  // Accepted for interface compatibility; work is sequential on one core.
  int jobs = 0;
  app.add_option("--jobs", jobs, "worker cap (informational)");

  std::string image_dir, dataset_dir, out_dir = "out", model_path, input_dir;
  std::vector<std::string> recon_dirs;
  std::string denoised_dir, images_noisy, images_denoised, masks_dir, results_dir;

  auto* mkds = app.add_subcommand("make-dataset", "build train/val/test splits");
  mkds->add_option("--images", image_dir, "directory of 8-bit PGM feature images")
      ->required();
  mkds->add_option("--out", out_dir, "output dataset directory")->required();

  auto* train = app.add_subcommand("train", "train the denoiser on a dataset");
  train->add_option("--dataset", dataset_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "output directory")->required();

  auto* den = app.add_subcommand("denoise", "apply a trained model");
  den->add_option("--model", model_path, "model file (.oaml)")->required();
  den->add_option("--input", input_dir, "dataset split or directory of .oasg")
      ->required();
  den->add_option("--out", out_dir, "output directory")->required();

  auto* rec = app.add_subcommand("reconstruct", "model-based image reconstruction");
  rec->add_option("--input", input_dir, "directory of .oasg sinograms")->required();
  rec->add_option("--out", out_dir, "output directory")->required();

  auto* unmix = app.add_subcommand("unmix", "blind spectral unmixing (NMF)");
  unmix->add_option("--recon", recon_dirs, "reconstruction output directories")
      ->required();
  unmix->add_option("--out", out_dir, "output directory")->required();

  auto* met = app.add_subcommand("metrics", "evaluation metrics as CSV");
  met->add_option("--dataset", dataset_dir, "dataset directory")->required();
  met->add_option("--denoised", denoised_dir, "cmd denoise output for the test split")
      ->required();
  met->add_option("--images-noisy", images_noisy, "reconstructions of noisy data");
  met->add_option("--images-denoised", images_denoised,
                  "reconstructions of denoised data");
  met->add_option("--masks", masks_dir, "ROI masks (<stem>.vessels.pgm / .background.pgm)");
  met->add_option("--out", out_dir, "output directory")->required();

  auto* rep = app.add_subcommand("report", "aggregate metric CSVs into a report");
  rep->add_option("--results", results_dir, "directory containing metric CSVs")
      ->required();
  rep->add_option("--out", out_dir, "output directory")->required();

  auto* bench = app.add_subcommand("bench", "inference latency at full-scale shape");
  bench->add_option("--model", model_path, "model file (optional)");
  bench->add_option("--out", out_dir, "output directory")->required();

  auto* dump = app.add_subcommand("dump-config", "write a profile config file");
  dump->add_option("--out", out_dir, "output config path")->required();

  CLI11_PARSE(app, argc, argv);

  oadn::ProgressFn progress;
  if (!quiet)
    progress = [](const std::string& msg) { std::cerr << msg << "\n"; };

  try {
    const oadn::PipelineConfig cfg = make_config(config_path, profile, overrides);
    const std::filesystem::path out = resolve_out(out_dir);
    if (mkds->parsed()) {
      oadn::cmd_make_dataset(cfg, image_dir, out, progress);
    } else if (train->parsed()) {
      oadn::cmd_train(cfg, dataset_dir, out, progress);
    } else if (den->parsed()) {
      const auto s = oadn::cmd_denoise(cfg, model_path, input_dir, out, progress);
      if (s.has_ground_truth)
        std::cout << "mean gain " << s.mean_gain_db << " dB, min gain "
                  << s.min_gain_db << " dB over " << s.count << " sinograms\n";
    } else if (rec->parsed()) {
      oadn::cmd_reconstruct(cfg, input_dir, out, progress);
    } else if (unmix->parsed()) {
      std::vector<std::filesystem::path> dirs(recon_dirs.begin(), recon_dirs.end());
      oadn::cmd_unmix(cfg, dirs, out, progress);
    } else if (met->parsed()) {
      oadn::MetricsInputs in;
      in.dataset_dir = dataset_dir;
      in.denoised_dir = denoised_dir;
      in.images_noisy_dir = images_noisy;
      in.images_denoised_dir = images_denoised;
      in.masks_dir = masks_dir;
      oadn::cmd_metrics(cfg, in, out, progress);
    } else if (rep->parsed()) {
      oadn::cmd_report(results_dir, out, progress);
    } else if (bench->parsed()) {
      std::optional<std::filesystem::path> model;
      if (!model_path.empty()) model = model_path;
      const auto r = oadn::cmd_bench(cfg, model, out, progress);
      std::cout << "median inference " << r.median_infer_s << " s for "
                << r.n_transducers << "x" << r.n_samples << " (levels "
                << r.levels << ", base " << r.base_channels << ")\n";
    } else if (dump->parsed()) {
      oadn::save_config(cfg, out);
    }
  } catch (const oadn::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const oadn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
