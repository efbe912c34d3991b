#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "oadn/geometry.hpp"
#include "oadn/image.hpp"
#include "oadn/rng.hpp"
#include "oadn/sinogram.hpp"

namespace oadn {

struct GridSpec {
  std::size_t n_x = 0;
  std::size_t n_y = 0;
  double extent_m = 0.0;
};

// Linear acoustic forward map for a circular array: s[d,t] is the centered
// time difference of the circular mean of p0 over the arc of radius
// c*(t + t_offset)/fs around transducer d, with bilinear interpolation at
// half-pixel arc spacing (arc_oversample samples per pixel). apply and
// apply_adjoint are exact transposes of the same sparse map.
//
// Arc interpolation tables are precomputed at construction when they fit
// table_mem_cap bytes; otherwise every apply recomputes the identical taps
// on the fly.
class ForwardOperator {
 public:
  ForwardOperator(const ArrayGeometry& geometry, const GridSpec& grid,
                  std::size_t n_samples, std::int64_t t_offset_samples,
                  double arc_oversample = 2.0,
                  std::size_t table_mem_cap = std::size_t{512} << 20);

  const ArrayGeometry& geometry() const { return geometry_; }
  const GridSpec& grid() const { return grid_; }
  std::size_t n_transducers() const { return geometry_.n_transducers; }
  std::size_t n_samples() const { return n_samples_; }
  std::int64_t t_offset_samples() const { return t_offset_; }
  std::size_t image_size() const { return grid_.n_x * grid_.n_y; }
  std::size_t sino_size() const { return n_transducers() * n_samples_; }
  bool has_table() const { return !row_offsets_.empty(); }

  // f64 paths used by the solver and the adjointness tests.
  void apply(std::span<const double> image, std::span<double> sino) const;
  void apply_adjoint(std::span<const double> sino, std::span<double> image) const;

  Sinogram apply_forward(const ImageGrid& p0) const;
  ImageGrid apply_adjoint(const Sinogram& s) const;

 private:
  struct ArcPoint {
    std::uint32_t base;  // pixel index of the (x, y) corner
    float ax, ay;        // fractional position inside the cell
  };

  void check_image(const ImageGrid& p0) const;
  double arc_radius(std::int64_t t) const;  // for mean-row index t in [-1, n]

  // Calls visit(base, ax, ay) for every in-grid arc point of mean-row (d, t).
  template <typename Visitor>
  void walk_arc(std::size_t d, std::int64_t t, Visitor&& visit) const;

  // Circular means for all rows (d, t in [-1, n]) of one transducer.
  void gather_means(std::size_t d, std::span<const double> image,
                    std::span<double> means) const;
  void scatter_means(std::size_t d, std::span<const double> means,
                     std::span<double> image) const;

  ArrayGeometry geometry_;
  GridSpec grid_;
  std::size_t n_samples_;
  std::int64_t t_offset_;
  double arc_oversample_;
  std::vector<Point2> positions_;
  double pixel_;    // pixel pitch
  double origin_x_, origin_y_;  // pixel (0,0) center
  double grid_cx_, grid_cy_, grid_circumradius_;

  std::size_t mean_rows_per_channel_;  // n_samples + 2
  // Table layout: rows indexed d*(n+2) + (t+1); per row a weight and a
  // contiguous run of arc points.
  std::vector<std::uint64_t> row_offsets_;
  std::vector<double> row_weights_;
  std::vector<ArcPoint> points_;
};

// Dense matrix of the operator (rows = sinogram entries, cols = pixels),
// built column by column. Guarded to small grids; oracle tests only.
std::vector<double> materialize_dense(const ForwardOperator& op,
                                      std::size_t max_pixels = 1024);

struct CorpusResult {
  std::vector<Sinogram> sinograms;
  std::vector<std::filesystem::path> sources;  // per sinogram, post-shuffle
  std::vector<bool> flipped;                   // horizontal flip applied
  std::vector<std::filesystem::path> skipped;  // undecodable inputs
};

// Simulates one noise-free sinogram per decodable feature image (8-bit PGM),
// resampled to the operator grid and linearly rescaled into [0, 1]. The seed
// controls only the processing order and the optional horizontal flips.
CorpusResult simulate_corpus(const std::vector<std::filesystem::path>& images,
                             const ForwardOperator& op, RngSeed seed,
                             bool augment_flips = false);

// Bilinear resample onto a target grid (used for corpus images).
ImageGrid resample_image(const ImageGrid& src, const GridSpec& grid);

// Linear map of pixel values into [0, 1]; identity if already inside.
void rescale_unit(ImageGrid& img);

}  // namespace oadn
