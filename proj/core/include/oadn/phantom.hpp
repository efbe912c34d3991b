#pragma once

#include <string>
#include <vector>

#include "oadn/image.hpp"
#include "oadn/metrics.hpp"
#include "oadn/rng.hpp"

namespace oadn {

// Random grayscale feature image in [0, 1]: soft blobs plus curved
// vessel-like strokes. Used to build simulation corpora.
ImageGrid make_feature_image(std::size_t n_x, std::size_t n_y, double extent_m,
                             RngSeed seed, std::uint64_t index);

// Vessel phantom with ground-truth ROI masks: bright strokes (vessel mask),
// faint texture, and a background ROI in a distance band around the vessels
// so the two masks never overlap.
struct VesselPhantom {
  ImageGrid p0;
  RoiMask vessels;
  RoiMask background;
};

VesselPhantom make_vessel_phantom(std::size_t n_x, std::size_t n_y, double extent_m,
                                  RngSeed seed, std::uint64_t index);

// Bundled synthetic absorber spectra over [700, 970] nm (smooth analytic
// stand-ins for hemoglobin, oxyhemoglobin, water and lipid; descriptive
// matching only, never an acceptance gate).
std::vector<std::string> synthetic_chromophores();
std::vector<double> synthetic_spectrum(const std::string& name,
                                       const std::vector<double>& wavelengths_nm);

struct SpectralComponent {
  ImageGrid map;                 // nonnegative abundance
  std::vector<double> spectrum;  // one value per wavelength
  std::string name;
};

// p0 per wavelength: sum over components of map * spectrum(wavelength).
ImageStack build_multispectral_p0(const std::vector<SpectralComponent>& components,
                                  const std::vector<double>& wavelengths_nm);

// Vessel phantom with per-component chromophore maps attached: vessels get
// hemoglobin-like spectra, texture gets water/lipid-like spectra.
struct MultispectralPhantom {
  ImageStack p0_stack;
  RoiMask vessels;
  RoiMask background;
  std::vector<SpectralComponent> components;
};

MultispectralPhantom make_multispectral_phantom(
    std::size_t n_x, std::size_t n_y, double extent_m,
    const std::vector<double>& wavelengths_nm, RngSeed seed, std::uint64_t index);

}  // namespace oadn
