#include "oadn/unmix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "oadn/errors.hpp"

namespace oadn {

namespace {
constexpr double kEpsGuard = 1e-12;
}

void NmfConfig::validate() const {
  if (k < 1) throw DataError("nmf: k must be >= 1");
  if (lambda_l1 < 0.0 || lambda_fro < 0.0)
    throw DataError("nmf: lambdas must be >= 0");
  if (max_iters < 1) throw DataError("nmf: max_iters must be >= 1");
  if (!(rel_tol > 0.0)) throw DataError("nmf: rel_tol must be positive");
  if (n_restarts < 1) throw DataError("nmf: n_restarts must be >= 1");
}

SpectraMatrix assemble_spectra(const std::vector<ImageStack>& scans) {
  if (scans.empty()) throw DataError("assemble_spectra: no scans");
  SpectraMatrix out;
  for (const auto& st : scans) st.validate("assemble_spectra");
  const auto& first = scans[0];
  if (first.images.empty()) throw DataError("assemble_spectra: empty stack");
  out.cols = first.images.size();
  out.n_x = first.images[0].n_x;
  out.n_y = first.images[0].n_y;
  out.n_scans = scans.size();
  const std::size_t npix = out.n_x * out.n_y;
  out.rows = npix * scans.size();
  out.s.assign(out.rows * out.cols, 0.0);
  for (std::size_t j = 0; j < scans.size(); ++j) {
    const auto& st = scans[j];
    if (st.images.size() != out.cols ||
        st.images[0].n_x != out.n_x || st.images[0].n_y != out.n_y)
      throw DataError("assemble_spectra: scan " + std::to_string(j) +
                      " shape differs");
    for (std::size_t c = 0; c < out.cols; ++c) {
      const auto& img = st.images[c];
      for (std::size_t p = 0; p < npix; ++p) {
        double v = img.pixels[p];
        if (v < 0.0) {
          v = 0.0;
          ++out.clamped;
        }
        out.s[(j * npix + p) * out.cols + c] = v;
      }
    }
  }
  return out;
}

namespace {

void check_nonneg(const std::vector<double>& m, const char* what) {
  for (double v : m)
    if (v < 0.0) throw DataError(std::string(what) + ": negative entry");
}

double frob2(const std::vector<double>& m) {
  double acc = 0.0;
  for (double v : m) acc += v * v;
  return acc;
}

double entry_l1(const std::vector<double>& m) {
  double acc = 0.0;
  for (double v : m) acc += std::abs(v);
  return acc;
}

// residual2 = ||S - WH||_F^2
double residual2(const SpectraMatrix& s, const std::vector<double>& w,
                 const std::vector<double>& h, std::size_t k) {
  double acc = 0.0;
  for (std::size_t r = 0; r < s.rows; ++r) {
    const double* wr = w.data() + r * k;
    for (std::size_t c = 0; c < s.cols; ++c) {
      double wh = 0.0;
      for (std::size_t j = 0; j < k; ++j) wh += wr[j] * h[j * s.cols + c];
      const double d = s.s[r * s.cols + c] - wh;
      acc += d * d;
    }
  }
  return acc;
}

}  // namespace

double nmf_objective(const SpectraMatrix& s, const std::vector<double>& w,
                     const std::vector<double>& h, const NmfConfig& cfg) {
  if (w.size() != s.rows * cfg.k || h.size() != cfg.k * s.cols)
    throw DataError("nmf_objective: factor shapes do not match");
  check_nonneg(w, "nmf_objective W");
  check_nonneg(h, "nmf_objective H");
  return 0.5 * residual2(s, w, h, cfg.k) +
         cfg.lambda_l1 * (entry_l1(w) + entry_l1(h)) +
         0.5 * cfg.lambda_fro * (frob2(w) + frob2(h));
}

NmfResult nmf_factorize(const SpectraMatrix& s, const NmfConfig& cfg) {
  cfg.validate();
  if (s.rows == 0 || s.cols == 0) throw DataError("nmf: empty spectra matrix");
  check_nonneg(s.s, "nmf S");
  const std::size_t k = cfg.k;
  const std::size_t n = s.rows, m = s.cols;

  double s_mean = 0.0;
  for (double v : s.s) s_mean += v;
  s_mean /= static_cast<double>(s.s.size());

  NmfResult best;
  double best_obj = std::numeric_limits<double>::infinity();

  std::vector<double> w(n * k), h(k * m);
  std::vector<double> hht(k * k), sht(n * k), wtw(k * k), wts(k * m);
  for (std::size_t restart = 0; restart < cfg.n_restarts; ++restart) {
    // |N(0,1)| init, scaled so mean(WH) is near mean(S).
    Rng rng(cfg.seed, "nmf/init/" + std::to_string(restart));
    for (auto& v : w) v = std::abs(rng.gaussian());
    for (auto& v : h) v = std::abs(rng.gaussian());
    double wh_mean = 0.0;
    {
      double wm = 0.0, hm = 0.0;
      for (double v : w) wm += v;
      for (double v : h) hm += v;
      wm /= static_cast<double>(w.size());
      hm /= static_cast<double>(h.size());
      wh_mean = wm * hm * static_cast<double>(k);
    }
    if (s_mean > 0.0 && wh_mean > 0.0) {
      const double a = std::sqrt(s_mean / wh_mean);
      for (auto& v : w) v *= a;
      for (auto& v : h) v *= a;
    }

    std::vector<double> trace;
    double prev = nmf_objective(s, w, h, cfg);
    trace.push_back(prev);
    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
      // W update: W = W * (S H^T) / (W H H^T + l1 + lf W + eps)
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) {
          double acc = 0.0;
          for (std::size_t c = 0; c < m; ++c) acc += h[a * m + c] * h[b * m + c];
          hht[a * k + b] = acc;
        }
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t a = 0; a < k; ++a) {
          double acc = 0.0;
          const double* sr = s.s.data() + r * m;
          for (std::size_t c = 0; c < m; ++c) acc += sr[c] * h[a * m + c];
          sht[r * k + a] = acc;
        }
      for (std::size_t r = 0; r < n; ++r) {
        double* wr = w.data() + r * k;
        for (std::size_t a = 0; a < k; ++a) {
          double whht = 0.0;
          for (std::size_t b = 0; b < k; ++b) whht += wr[b] * hht[b * k + a];
          wr[a] *= sht[r * k + a] /
                   (whht + cfg.lambda_l1 + cfg.lambda_fro * wr[a] + kEpsGuard);
        }
      }
      // H update: H = H * (W^T S) / (W^T W H + l1 + lf H + eps)
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) {
          double acc = 0.0;
          for (std::size_t r = 0; r < n; ++r) acc += w[r * k + a] * w[r * k + b];
          wtw[a * k + b] = acc;
        }
      std::fill(wts.begin(), wts.end(), 0.0);
      for (std::size_t r = 0; r < n; ++r) {
        const double* sr = s.s.data() + r * m;
        const double* wr = w.data() + r * k;
        for (std::size_t a = 0; a < k; ++a) {
          const double wv = wr[a];
          if (wv == 0.0) continue;
          double* dst = wts.data() + a * m;
          for (std::size_t c = 0; c < m; ++c) dst[c] += wv * sr[c];
        }
      }
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t c = 0; c < m; ++c) {
          double wtwh = 0.0;
          for (std::size_t b = 0; b < k; ++b) wtwh += wtw[a * k + b] * h[b * m + c];
          h[a * m + c] *= wts[a * m + c] /
                          (wtwh + cfg.lambda_l1 + cfg.lambda_fro * h[a * m + c] +
                           kEpsGuard);
        }
      }

      const double obj = nmf_objective(s, w, h, cfg);
      if (!std::isfinite(obj))
        throw NumericError("nmf: non-finite objective at pass " +
                           std::to_string(it) + " (restart " +
                           std::to_string(restart) + ")");
      trace.push_back(obj);
      const double drop = prev - obj;
      prev = obj;
      if (std::abs(drop) <= cfg.rel_tol * std::max(1.0, std::abs(obj))) break;
    }

    if (prev < best_obj) {
      best_obj = prev;
      best.k = k;
      best.w = w;
      best.h = h;
      best.trace = std::move(trace);
      best.restart_index = restart;
    }
  }

  const double s2 = frob2(s.s);
  best.relative_error =
      s2 > 0.0 ? residual2(s, best.w, best.h, k) / s2 : 0.0;
  return best;
}

ImageGrid coefficient_map(const SpectraMatrix& s, const NmfResult& r,
                          std::size_t component, std::size_t scan,
                          double extent_m) {
  if (component >= r.k) throw DataError("coefficient_map: component out of range");
  if (scan >= s.n_scans) throw DataError("coefficient_map: scan out of range");
  const std::size_t npix = s.n_x * s.n_y;
  ImageGrid img(s.n_x, s.n_y, extent_m);
  for (std::size_t p = 0; p < npix; ++p)
    img.pixels[p] = r.w[(scan * npix + p) * r.k + component];
  return img;
}

std::vector<double> depth_map_from_grid(std::size_t n_x, std::size_t n_y,
                                        double extent_m, std::size_t n_scans) {
  const double pitch = extent_m / static_cast<double>(n_x);
  std::vector<double> depth(n_x * n_y * n_scans);
  std::size_t i = 0;
  for (std::size_t scan = 0; scan < n_scans; ++scan)
    for (std::size_t y = 0; y < n_y; ++y)
      for (std::size_t x = 0; x < n_x; ++x)
        depth[i++] = (static_cast<double>(y) + 0.5) * pitch;
  return depth;
}

DepthProfiles depth_profiles(const NmfResult& r, const SpectraMatrix& s,
                             const std::vector<std::size_t>& selected,
                             const std::vector<double>& pixel_depth_m,
                             const DepthProfileConfig& cfg) {
  if (selected.empty()) throw DataError("depth_profiles: no components selected");
  for (std::size_t c : selected)
    if (c >= r.k) throw DataError("depth_profiles: component index out of range");
  if (pixel_depth_m.size() != s.rows)
    throw DataError("depth_profiles: depth map does not match spectra rows");
  if (!(cfg.bin_m > 0.0)) throw DataError("depth_profiles: bin must be positive");

  double max_depth = 0.0;
  for (double d : pixel_depth_m) max_depth = std::max(max_depth, d);
  const auto n_bins = static_cast<std::size_t>(std::floor(max_depth / cfg.bin_m)) + 1;
  const std::size_t nc = selected.size();

  // Mean coefficient per (component, bin).
  std::vector<double> sums(nc * n_bins, 0.0);
  std::vector<std::size_t> counts(n_bins, 0);
  for (std::size_t row = 0; row < s.rows; ++row) {
    const auto bin = static_cast<std::size_t>(pixel_depth_m[row] / cfg.bin_m);
    ++counts[bin];
    for (std::size_t ci = 0; ci < nc; ++ci)
      sums[ci * n_bins + bin] += r.w[row * r.k + selected[ci]];
  }

  DepthProfiles out;
  out.components = selected;
  out.depth_m.resize(n_bins);
  out.defined.assign(n_bins, false);
  std::vector<std::vector<double>> rel(nc, std::vector<double>(n_bins, 0.0));
  for (std::size_t b = 0; b < n_bins; ++b) {
    out.depth_m[b] = (static_cast<double>(b) + 0.5) * cfg.bin_m;
    if (counts[b] == 0) continue;  // empty bins stay undefined, not interpolated
    double total = 0.0;
    for (std::size_t ci = 0; ci < nc; ++ci)
      total += sums[ci * n_bins + b] / static_cast<double>(counts[b]);
    if (total <= 0.0) continue;
    out.defined[b] = true;
    for (std::size_t ci = 0; ci < nc; ++ci)
      rel[ci][b] = (sums[ci * n_bins + b] / static_cast<double>(counts[b])) / total;
  }

  // Moving average over defined bins within +-smooth_halfwidth.
  const auto halfw = static_cast<std::size_t>(
      std::floor(cfg.smooth_halfwidth_m / cfg.bin_m + 0.5));
  out.contributions.assign(nc, std::vector<double>(n_bins, 0.0));
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (!out.defined[b]) continue;
    const std::size_t lo = b >= halfw ? b - halfw : 0;
    const std::size_t hi = std::min(n_bins - 1, b + halfw);
    std::size_t used = 0;
    for (std::size_t q = lo; q <= hi; ++q)
      if (out.defined[q]) ++used;
    for (std::size_t ci = 0; ci < nc; ++ci) {
      double acc = 0.0;
      for (std::size_t q = lo; q <= hi; ++q)
        if (out.defined[q]) acc += rel[ci][q];
      out.contributions[ci][b] = acc / static_cast<double>(used);
    }
  }
  return out;
}

}  // namespace oadn
