#include "oadn/forward.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "oadn/errors.hpp"
#include "oadn/io.hpp"

namespace oadn {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

ForwardOperator::ForwardOperator(const ArrayGeometry& geometry, const GridSpec& grid,
                                 std::size_t n_samples, std::int64_t t_offset_samples,
                                 double arc_oversample, std::size_t table_mem_cap)
    : geometry_(geometry),
      grid_(grid),
      n_samples_(n_samples),
      t_offset_(t_offset_samples),
      arc_oversample_(arc_oversample) {
  geometry_.validate("forward operator");
  if (grid_.n_x < 2 || grid_.n_y < 2)
    throw DataError("forward operator: grid must be at least 2x2");
  if (!(grid_.extent_m > 0.0))
    throw DataError("forward operator: grid extent must be positive");
  if (n_samples_ < 2) throw DataError("forward operator: need at least 2 samples");
  if (!(arc_oversample_ >= 0.5))
    throw DataError("forward operator: arc_oversample must be >= 0.5");

  positions_ = geometry_.transducer_positions();
  pixel_ = grid_.extent_m / static_cast<double>(grid_.n_x);
  grid_cx_ = geometry_.center.x;
  grid_cy_ = geometry_.center.y;
  origin_x_ = grid_cx_ - 0.5 * grid_.extent_m + 0.5 * pixel_;
  origin_y_ = grid_cy_ - 0.5 * grid_.extent_m * (static_cast<double>(grid_.n_y) /
                                                 static_cast<double>(grid_.n_x)) +
              0.5 * pixel_;
  // Circumradius of the pixel-center rectangle, plus one pixel of slack.
  const double hx = 0.5 * pixel_ * static_cast<double>(grid_.n_x - 1);
  const double hy = 0.5 * pixel_ * static_cast<double>(grid_.n_y - 1);
  grid_circumradius_ = std::hypot(hx, hy) + pixel_;

  mean_rows_per_channel_ = n_samples_ + 2;

  // Estimate table size from a coarse upper bound before building: every
  // mean row can hold at most (2 * circumradius / step) points.
  const std::size_t n_rows = n_transducers() * mean_rows_per_channel_;
  const double step = pixel_ / arc_oversample_;
  const double max_points_per_row = 2.5 * (2.0 * grid_circumradius_ / step);
  const std::size_t estimate =
      n_rows * (sizeof(std::uint64_t) + sizeof(double)) +
      static_cast<std::size_t>(max_points_per_row) * n_rows * sizeof(ArcPoint);
  if (estimate > table_mem_cap) return;  // matrix-free applies

  row_offsets_.reserve(n_rows + 1);
  row_weights_.reserve(n_rows);
  row_offsets_.push_back(0);
  for (std::size_t d = 0; d < n_transducers(); ++d) {
    for (std::int64_t t = -1; t <= static_cast<std::int64_t>(n_samples_); ++t) {
      const double rad = arc_radius(t);
      row_weights_.push_back(rad > 0.0 ? (pixel_ / arc_oversample_) / (kTwoPi * rad)
                                       : 0.0);
      walk_arc(d, t, [&](std::uint32_t base, float ax, float ay) {
        points_.push_back({base, ax, ay});
      });
      row_offsets_.push_back(points_.size());
    }
  }
  points_.shrink_to_fit();
}

double ForwardOperator::arc_radius(std::int64_t t) const {
  const double idx = static_cast<double>(t + t_offset_);
  return idx <= 0.0 ? 0.0
                    : geometry_.speed_of_sound_m_s * idx / geometry_.sample_rate_hz;
}

template <typename Visitor>
void ForwardOperator::walk_arc(std::size_t d, std::int64_t t, Visitor&& visit) const {
  const double rad = arc_radius(t);
  if (!(rad > 0.0)) return;
  const Point2 p = positions_[d];
  const double dx = grid_cx_ - p.x;
  const double dy = grid_cy_ - p.y;
  const double dist = std::hypot(dx, dy);
  if (rad > dist + grid_circumradius_ || rad < dist - grid_circumradius_) return;

  const double dtheta = (pixel_ / arc_oversample_) / rad;
  double half;
  if (dist <= grid_circumradius_) {
    half = std::numbers::pi;  // transducer inside the grid circumcircle
  } else {
    const double c = (rad * rad + dist * dist -
                      grid_circumradius_ * grid_circumradius_) /
                     (2.0 * rad * dist);
    half = std::acos(std::clamp(c, -1.0, 1.0));
  }
  const double theta_c = std::atan2(dy, dx);
  const auto k_max = static_cast<std::int64_t>(std::ceil(half / dtheta));

  const double fx_max = static_cast<double>(grid_.n_x - 1);
  const double fy_max = static_cast<double>(grid_.n_y - 1);
  for (std::int64_t k = -k_max; k <= k_max; ++k) {
    const double a = theta_c + static_cast<double>(k) * dtheta;
    const double qx = p.x + rad * std::cos(a);
    const double qy = p.y + rad * std::sin(a);
    const double fx = (qx - origin_x_) / pixel_;
    const double fy = (qy - origin_y_) / pixel_;
    if (fx < 0.0 || fx >= fx_max || fy < 0.0 || fy >= fy_max) continue;
    const auto ix = static_cast<std::size_t>(fx);
    const auto iy = static_cast<std::size_t>(fy);
    visit(static_cast<std::uint32_t>(iy * grid_.n_x + ix),
          static_cast<float>(fx - static_cast<double>(ix)),
          static_cast<float>(fy - static_cast<double>(iy)));
  }
}

void ForwardOperator::gather_means(std::size_t d, std::span<const double> image,
                                   std::span<double> means) const {
  const std::size_t nx = grid_.n_x;
  if (has_table()) {
    const std::size_t row0 = d * mean_rows_per_channel_;
    for (std::size_t r = 0; r < mean_rows_per_channel_; ++r) {
      const std::uint64_t begin = row_offsets_[row0 + r];
      const std::uint64_t end = row_offsets_[row0 + r + 1];
      double acc = 0.0;
      for (std::uint64_t i = begin; i < end; ++i) {
        const ArcPoint& pt = points_[i];
        const double ax = pt.ax, ay = pt.ay;
        acc += (1.0 - ax) * (1.0 - ay) * image[pt.base] +
               ax * (1.0 - ay) * image[pt.base + 1] +
               (1.0 - ax) * ay * image[pt.base + nx] +
               ax * ay * image[pt.base + nx + 1];
      }
      means[r] = acc * row_weights_[row0 + r];
    }
  } else {
    for (std::int64_t t = -1; t <= static_cast<std::int64_t>(n_samples_); ++t) {
      const double rad = arc_radius(t);
      const double w = rad > 0.0 ? (pixel_ / arc_oversample_) / (kTwoPi * rad) : 0.0;
      double acc = 0.0;
      walk_arc(d, t, [&](std::uint32_t base, float axf, float ayf) {
        const double ax = axf, ay = ayf;
        acc += (1.0 - ax) * (1.0 - ay) * image[base] +
               ax * (1.0 - ay) * image[base + 1] +
               (1.0 - ax) * ay * image[base + nx] +
               ax * ay * image[base + nx + 1];
      });
      means[static_cast<std::size_t>(t + 1)] = acc * w;
    }
  }
}

void ForwardOperator::scatter_means(std::size_t d, std::span<const double> means,
                                    std::span<double> image) const {
  const std::size_t nx = grid_.n_x;
  if (has_table()) {
    const std::size_t row0 = d * mean_rows_per_channel_;
    for (std::size_t r = 0; r < mean_rows_per_channel_; ++r) {
      const double v = means[r] * row_weights_[row0 + r];
      if (v == 0.0) continue;
      const std::uint64_t begin = row_offsets_[row0 + r];
      const std::uint64_t end = row_offsets_[row0 + r + 1];
      for (std::uint64_t i = begin; i < end; ++i) {
        const ArcPoint& pt = points_[i];
        const double ax = pt.ax, ay = pt.ay;
        image[pt.base] += (1.0 - ax) * (1.0 - ay) * v;
        image[pt.base + 1] += ax * (1.0 - ay) * v;
        image[pt.base + nx] += (1.0 - ax) * ay * v;
        image[pt.base + nx + 1] += ax * ay * v;
      }
    }
  } else {
    for (std::int64_t t = -1; t <= static_cast<std::int64_t>(n_samples_); ++t) {
      const double rad = arc_radius(t);
      const double w = rad > 0.0 ? (pixel_ / arc_oversample_) / (kTwoPi * rad) : 0.0;
      const double v = means[static_cast<std::size_t>(t + 1)] * w;
      if (v == 0.0) continue;
      walk_arc(d, t, [&](std::uint32_t base, float axf, float ayf) {
        const double ax = axf, ay = ayf;
        image[base] += (1.0 - ax) * (1.0 - ay) * v;
        image[base + 1] += ax * (1.0 - ay) * v;
        image[base + nx] += (1.0 - ax) * ay * v;
        image[base + nx + 1] += ax * ay * v;
      });
    }
  }
}

void ForwardOperator::apply(std::span<const double> image,
                            std::span<double> sino) const {
  if (image.size() != image_size() || sino.size() != sino_size())
    throw DataError("apply: buffer size mismatch");
  std::vector<double> means(mean_rows_per_channel_);
  for (std::size_t d = 0; d < n_transducers(); ++d) {
    gather_means(d, image, means);
    double* out = sino.data() + d * n_samples_;
    for (std::size_t t = 0; t < n_samples_; ++t)
      out[t] = 0.5 * (means[t + 2] - means[t]);
  }
}

void ForwardOperator::apply_adjoint(std::span<const double> sino,
                                    std::span<double> image) const {
  if (image.size() != image_size() || sino.size() != sino_size())
    throw DataError("apply_adjoint: buffer size mismatch");
  std::fill(image.begin(), image.end(), 0.0);
  std::vector<double> means(mean_rows_per_channel_);
  for (std::size_t d = 0; d < n_transducers(); ++d) {
    const double* in = sino.data() + d * n_samples_;
    // Transpose of the centered difference: mean row u receives
    // 0.5*in[u-1] - 0.5*in[u+1] (mean rows are offset by one).
    for (std::size_t r = 0; r < mean_rows_per_channel_; ++r) {
      const std::int64_t u = static_cast<std::int64_t>(r) - 1;
      double v = 0.0;
      if (u - 1 >= 0 && u - 1 < static_cast<std::int64_t>(n_samples_))
        v += 0.5 * in[u - 1];
      if (u + 1 >= 0 && u + 1 < static_cast<std::int64_t>(n_samples_))
        v -= 0.5 * in[u + 1];
      means[r] = v;
    }
    scatter_means(d, means, image);
  }
}

void ForwardOperator::check_image(const ImageGrid& p0) const {
  if (p0.n_x != grid_.n_x || p0.n_y != grid_.n_y)
    throw DataError("apply_forward: image " + std::to_string(p0.n_x) + "x" +
                    std::to_string(p0.n_y) + " does not match operator grid " +
                    std::to_string(grid_.n_x) + "x" + std::to_string(grid_.n_y));
}

Sinogram ForwardOperator::apply_forward(const ImageGrid& p0) const {
  check_image(p0);
  p0.validate("apply_forward");
  Sinogram s(n_transducers(), n_samples_, geometry_.sample_rate_hz);
  apply(p0.pixels, s.data);
  return s;
}

ImageGrid ForwardOperator::apply_adjoint(const Sinogram& s) const {
  if (s.n_transducers != n_transducers() || s.n_samples != n_samples_)
    throw DataError("apply_adjoint: sinogram shape does not match operator");
  ImageGrid img(grid_.n_x, grid_.n_y, grid_.extent_m);
  apply_adjoint(s.data, img.pixels);
  return img;
}

std::vector<double> materialize_dense(const ForwardOperator& op,
                                      std::size_t max_pixels) {
  const std::size_t np = op.image_size();
  if (np > max_pixels)
    throw DataError("materialize_dense: grid too large (" + std::to_string(np) +
                    " pixels, cap " + std::to_string(max_pixels) + ")");
  const std::size_t rows = op.sino_size();
  std::vector<double> dense(rows * np, 0.0);
  std::vector<double> basis(np, 0.0), col(rows);
  for (std::size_t p = 0; p < np; ++p) {
    basis[p] = 1.0;
    op.apply(basis, col);
    basis[p] = 0.0;
    for (std::size_t r = 0; r < rows; ++r) dense[r * np + p] = col[r];
  }
  return dense;
}

ImageGrid resample_image(const ImageGrid& src, const GridSpec& grid) {
  ImageGrid dst(grid.n_x, grid.n_y, grid.extent_m);
  const double sx = static_cast<double>(src.n_x) / static_cast<double>(grid.n_x);
  const double sy = static_cast<double>(src.n_y) / static_cast<double>(grid.n_y);
  for (std::size_t y = 0; y < grid.n_y; ++y) {
    for (std::size_t x = 0; x < grid.n_x; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
      const double cx = std::clamp(fx, 0.0, static_cast<double>(src.n_x - 1));
      const double cy = std::clamp(fy, 0.0, static_cast<double>(src.n_y - 1));
      const auto ix = std::min(static_cast<std::size_t>(cx), src.n_x - 2);
      const auto iy = std::min(static_cast<std::size_t>(cy), src.n_y - 2);
      const double ax = cx - static_cast<double>(ix);
      const double ay = cy - static_cast<double>(iy);
      dst.at(x, y) = (1.0 - ax) * (1.0 - ay) * src.at(ix, iy) +
                     ax * (1.0 - ay) * src.at(ix + 1, iy) +
                     (1.0 - ax) * ay * src.at(ix, iy + 1) +
                     ax * ay * src.at(ix + 1, iy + 1);
    }
  }
  return dst;
}

void rescale_unit(ImageGrid& img) {
  const auto [mn_it, mx_it] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const double mn = *mn_it, mx = *mx_it;
  if (mn >= 0.0 && mx <= 1.0) return;
  if (mx > mn) {
    const double inv = 1.0 / (mx - mn);
    for (double& v : img.pixels) v = (v - mn) * inv;
  } else {
    for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  }
}

CorpusResult simulate_corpus(const std::vector<std::filesystem::path>& images,
                             const ForwardOperator& op, RngSeed seed,
                             bool augment_flips) {
  CorpusResult result;
  Rng rng(seed, "simulate_corpus");
  const auto order = rng.permutation(images.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& path = images[order[k]];
    ImageGrid img;
    try {
      img = read_pgm(path, op.grid().extent_m);
    } catch (const DataError&) {
      result.skipped.push_back(path);
      continue;
    }
    const bool flip = augment_flips && rng.uniform() < 0.5;
    if (flip) {
      for (std::size_t y = 0; y < img.n_y; ++y)
        for (std::size_t x = 0; x < img.n_x / 2; ++x)
          std::swap(img.at(x, y), img.at(img.n_x - 1 - x, y));
    }
    ImageGrid p0 = resample_image(img, op.grid());
    rescale_unit(p0);
    result.sinograms.push_back(op.apply_forward(p0));
    result.sources.push_back(path);
    result.flipped.push_back(flip);
  }
  return result;
}

}  // namespace oadn
