// Generates synthetic inputs for the pipeline: feature-image corpora for
// make-dataset, vessel phantoms with ground-truth ROI masks, and
// multispectral phantom sinogram stacks.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>

#include "oadn/config.hpp"
#include "oadn/errors.hpp"
#include "oadn/io.hpp"
#include "oadn/noise.hpp"
#include "oadn/phantom.hpp"

namespace fs = std::filesystem;

namespace {

void write_mask(const oadn::RoiMask& mask, const fs::path& path) {
  oadn::ImageGrid img(mask.n_x, mask.n_y, 1.0);
  for (std::size_t i = 0; i < img.size(); ++i)
    img.pixels[i] = mask.mask[i] ? 1.0 : 0.0;
  oadn::write_pgm8(img, path, 0.0, 1.0);
}

std::string zero_pad(std::size_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic feature images and phantoms"};
  app.require_subcommand(1);

  std::string out_dir = "phantoms", config_path;
  std::size_t count = 16, size = 128;
  std::uint64_t seed = 1;

  auto* images = app.add_subcommand("images", "feature-image corpus (PGM)");
  images->add_option("--out", out_dir)->required();
  images->add_option("--count", count, "number of images");
  images->add_option("--size", size, "image side length in pixels");
  images->add_option("--seed", seed);

  auto* vessels = app.add_subcommand(
      "vessels", "vessel phantom images with vessel/background ROI masks");
  vessels->add_option("--out", out_dir)->required();
  vessels->add_option("--count", count, "number of phantoms");
  vessels->add_option("--size", size, "image side length in pixels");
  vessels->add_option("--seed", seed);

  auto* stack = app.add_subcommand(
      "stack", "multispectral phantom sinogram stack (clean + noisy)");
  stack->add_option("--out", out_dir)->required();
  stack->add_option("--config", config_path, "pipeline config");
  stack->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    fs::create_directories(out_dir);
    if (images->parsed()) {
      for (std::size_t i = 0; i < count; ++i) {
        const auto img = oadn::make_feature_image(size, size, 1.0, {seed}, i);
        oadn::write_pgm8(img, fs::path(out_dir) / ("img_" + zero_pad(i, 5) + ".pgm"),
                         0.0, 1.0);
      }
      std::cout << count << " feature images in " << out_dir << "\n";
    } else if (vessels->parsed()) {
      for (std::size_t i = 0; i < count; ++i) {
        const auto ph = oadn::make_vessel_phantom(size, size, 1.0, {seed}, i);
        const std::string stem = "vessel_" + zero_pad(i, 4);
        oadn::write_pgm8(ph.p0, fs::path(out_dir) / (stem + ".pgm"), 0.0, 1.0);
        write_mask(ph.vessels, fs::path(out_dir) / (stem + ".vessels.pgm"));
        write_mask(ph.background, fs::path(out_dir) / (stem + ".background.pgm"));
      }
      std::cout << count << " vessel phantoms in " << out_dir << "\n";
    } else if (stack->parsed()) {
      oadn::PipelineConfig cfg =
          config_path.empty() ? oadn::desk_config() : oadn::load_config(config_path);
      const auto wl = cfg.wavelengths();
      const auto mp = oadn::make_multispectral_phantom(
          cfg.grid.n_x, cfg.grid.n_y, cfg.grid.extent_m, wl, {seed}, 0);
      const auto op = cfg.make_operator();
      oadn::SinogramStack clean, noisy;
      clean.wavelengths_nm = noisy.wavelengths_nm = wl;
      const oadn::CompositeNoiseSource noise(cfg.thermal, cfg.parasitic, {seed});
      for (std::size_t i = 0; i < wl.size(); ++i) {
        oadn::Sinogram s = op.apply_forward(mp.p0_stack.images[i]);
        double peak = 0.0;
        for (double v : s.data) peak = std::max(peak, std::abs(v));
        if (peak > 0.0)
          for (double& v : s.data) v *= cfg.signal_peak_target / peak;
        oadn::Sinogram n = noise.draw("stack", i, cfg.sinogram_shape());
        oadn::Sinogram sn = s;
        for (std::size_t j = 0; j < sn.size(); ++j) sn.data[j] += n.data[j];
        clean.scans.push_back(std::move(s));
        noisy.scans.push_back(std::move(sn));
      }
      oadn::KeyValueFile geo;
      geo.set("n_transducers",
              static_cast<std::uint64_t>(cfg.geometry.n_transducers));
      geo.set("radius_m", cfg.geometry.radius_m);
      geo.set("coverage_deg", cfg.geometry.coverage_deg);
      oadn::write_sinogram_stack(clean, fs::path(out_dir) / "clean", geo);
      oadn::write_sinogram_stack(noisy, fs::path(out_dir) / "noisy", geo);
      write_mask(mp.vessels, fs::path(out_dir) / "vessels.pgm");
      write_mask(mp.background, fs::path(out_dir) / "background.pgm");
      std::cout << wl.size() << "-wavelength stack in " << out_dir << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
