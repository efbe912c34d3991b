#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "oadn/image.hpp"
#include "oadn/rng.hpp"

namespace oadn {

// Per-pixel spectra of a multispectral image stack: row i holds the values
// of pixel i across wavelengths. Negative reconstruction values are clamped
// to zero at assembly (count reported).
struct SpectraMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;  // wavelengths
  std::vector<double> s;  // row-major
  std::size_t clamped = 0;
  // rows per source image and grid dims, kept to re-render coefficient maps
  std::size_t n_x = 0, n_y = 0;
  std::size_t n_scans = 0;

  double at(std::size_t r, std::size_t c) const { return s[r * cols + c]; }
};

struct NmfConfig {
  std::size_t k = 10;
  double lambda_l1 = 50.1;
  double lambda_fro = 50.1;
  std::size_t max_iters = 500;
  double rel_tol = 1e-7;
  RngSeed seed{7};
  std::size_t n_restarts = 5;

  void validate() const;
};

struct NmfResult {
  std::size_t k = 0;
  std::vector<double> w;  // rows x k, row-major
  std::vector<double> h;  // k x cols, row-major
  std::vector<double> trace;  // objective per alternating pass (best restart)
  double relative_error = 0.0;  // ||S - WH||_F^2 / ||S||_F^2
  std::size_t restart_index = 0;
};

// Stacks reconstructed images (equal shapes, one per wavelength, any number
// of scans) into the spectra matrix; pixel i of scan j maps to row
// j*n_pixels + i.
SpectraMatrix assemble_spectra(const std::vector<ImageStack>& scans);

// 0.5||S - WH||_F^2 + l1 (||W||_1 + ||H||_1) + 0.5 lf (||W||_F^2 + ||H||_F^2)
// (entrywise L1). Throws on negative entries.
double nmf_objective(const SpectraMatrix& s, const std::vector<double>& w,
                     const std::vector<double>& h, const NmfConfig& cfg);

// Multiplicative updates extended for the L1 and Frobenius terms:
//   W <- W * (S H^T) / (W H H^T + l1 + lf W + eps)
// and symmetrically for H; best of n_restarts by final objective. The
// objective trace of the winning restart is checked non-increasing per pass.
NmfResult nmf_factorize(const SpectraMatrix& s, const NmfConfig& cfg);

// Renders column k of W for one scan back onto the image grid.
ImageGrid coefficient_map(const SpectraMatrix& s, const NmfResult& r,
                          std::size_t component, std::size_t scan,
                          double extent_m);

struct DepthProfileConfig {
  double bin_m = 1e-4;
  double smooth_halfwidth_m = 8e-4;
};

// Per depth bin: mean coefficient of each selected component, normalized
// across the selected set (relative contributions summing to 1), then a
// moving average over +-smooth_halfwidth. Bins with no pixels stay unset.
struct DepthProfiles {
  std::vector<double> depth_m;                        // bin centers
  std::vector<std::vector<double>> contributions;     // [component][bin]
  std::vector<bool> defined;                          // per bin
  std::vector<std::size_t> components;                // selected indices
};

DepthProfiles depth_profiles(const NmfResult& r, const SpectraMatrix& s,
                             const std::vector<std::size_t>& selected,
                             const std::vector<double>& pixel_depth_m,
                             const DepthProfileConfig& cfg);

// Depth of each row of the spectra matrix when depth is the vertical
// distance from the probe-side (top) image row.
std::vector<double> depth_map_from_grid(std::size_t n_x, std::size_t n_y,
                                        double extent_m, std::size_t n_scans);

}  // namespace oadn
