#include "oadn/recon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "oadn/errors.hpp"
#include "oadn/rng.hpp"

namespace oadn {

void IdentityOperator::apply(std::span<const double> x, std::span<double> y) const {
  std::copy(x.begin(), x.end(), y.begin());
}
void IdentityOperator::apply_adjoint(std::span<const double> y,
                                     std::span<double> x) const {
  std::copy(y.begin(), y.end(), x.begin());
}

DenseOperator::DenseOperator(std::vector<double> matrix, std::size_t rows,
                             std::size_t cols)
    : m_(std::move(matrix)), rows_(rows), cols_(cols) {
  if (m_.size() != rows_ * cols_) throw DataError("dense operator: size mismatch");
}

void DenseOperator::apply(std::span<const double> x, std::span<double> y) const {
  for (std::size_t r = 0; r < rows_; ++r) {
    double acc = 0.0;
    const double* row = m_.data() + r * cols_;
    for (std::size_t c = 0; c < cols_; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void DenseOperator::apply_adjoint(std::span<const double> y,
                                  std::span<double> x) const {
  std::fill(x.begin(), x.end(), 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    const double v = y[r];
    if (v == 0.0) continue;
    const double* row = m_.data() + r * cols_;
    for (std::size_t c = 0; c < cols_; ++c) x[c] += row[c] * v;
  }
}

void ReconConfig::validate() const {
  if (lambda_tikhonov < 0.0 || lambda_laplacian < 0.0)
    throw DataError("recon: lambdas must be >= 0");
  if (!(rel_tol > 0.0)) throw DataError("recon: rel_tol must be positive");
  if (max_iters < 1) throw DataError("recon: max_iters must be >= 1");
}

void laplacian_apply(std::size_t n_x, std::size_t n_y, std::span<const double> in,
                     std::span<double> out) {
  if (in.size() != n_x * n_y || out.size() != n_x * n_y)
    throw DataError("laplacian: size mismatch");
  for (std::size_t y = 0; y < n_y; ++y) {
    for (std::size_t x = 0; x < n_x; ++x) {
      const std::size_t i = y * n_x + x;
      // Reflective (Neumann) boundaries: out-of-range neighbor = center.
      const double c = in[i];
      const double l = x > 0 ? in[i - 1] : c;
      const double r = x + 1 < n_x ? in[i + 1] : c;
      const double u = y > 0 ? in[i - n_x] : c;
      const double d = y + 1 < n_y ? in[i + n_x] : c;
      out[i] = l + r + u + d - 4.0 * c;
    }
  }
}

ImageGrid laplacian_apply(const ImageGrid& p) {
  ImageGrid out(p.n_x, p.n_y, p.extent_m);
  laplacian_apply(p.n_x, p.n_y, p.pixels, out.pixels);
  return out;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) { return dot(a, a); }

// Shared scratch for objective/gradient evaluations.
struct Work {
  std::vector<double> mp;    // M p (range)
  std::vector<double> lap;   // laplacian p
  std::vector<double> lap2;  // laplacian(laplacian p)
  std::vector<double> adj;   // M^T r (domain)
};

double eval_objective(std::span<const double> p, std::span<const double> s,
                      const LinearOperator& op, std::size_t n_x, std::size_t n_y,
                      const ReconConfig& cfg, Work& w) {
  op.apply(p, w.mp);
  double fid = 0.0;
  for (std::size_t i = 0; i < w.mp.size(); ++i) {
    const double r = w.mp[i] - s[i];
    fid += r * r;
  }
  double val = fid + cfg.lambda_tikhonov * norm2(p);
  if (cfg.lambda_laplacian > 0.0) {
    laplacian_apply(n_x, n_y, p, w.lap);
    val += cfg.lambda_laplacian * norm2(w.lap);
  }
  return val;
}

// grad = 2 (M^T(Mp - s) + lambda1 p + lambda2 laplacian^2 p)
void eval_gradient(std::span<const double> p, std::span<const double> s,
                   const LinearOperator& op, std::size_t n_x, std::size_t n_y,
                   const ReconConfig& cfg, Work& w, std::span<double> grad) {
  op.apply(p, w.mp);
  for (std::size_t i = 0; i < w.mp.size(); ++i) w.mp[i] -= s[i];
  op.apply_adjoint(w.mp, grad);
  if (cfg.lambda_laplacian > 0.0) {
    laplacian_apply(n_x, n_y, p, w.lap);
    laplacian_apply(n_x, n_y, w.lap, w.lap2);
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    double g = grad[i] + cfg.lambda_tikhonov * p[i];
    if (cfg.lambda_laplacian > 0.0) g += cfg.lambda_laplacian * w.lap2[i];
    grad[i] = 2.0 * g;
  }
}

// Largest eigenvalue of M^T M + lambda1 I + lambda2 laplacian^2 by power
// iteration from a seeded start.
double estimate_spectral_bound(const LinearOperator& op, std::size_t n_x,
                               std::size_t n_y, const ReconConfig& cfg, Work& w) {
  const std::size_t n = op.domain_size();
  std::vector<double> v(n), qv(n);
  Rng rng({12345}, "recon/power");
  for (auto& x : v) x = rng.gaussian();
  double lam = 0.0;
  for (std::size_t it = 0; it < cfg.power_iters; ++it) {
    const double nv = std::sqrt(norm2(v));
    if (!(nv > 0.0)) break;
    for (auto& x : v) x /= nv;
    op.apply(v, w.mp);
    op.apply_adjoint(w.mp, qv);
    if (cfg.lambda_laplacian > 0.0) {
      laplacian_apply(n_x, n_y, v, w.lap);
      laplacian_apply(n_x, n_y, w.lap, w.lap2);
    }
    for (std::size_t i = 0; i < n; ++i) {
      qv[i] += cfg.lambda_tikhonov * v[i];
      if (cfg.lambda_laplacian > 0.0) qv[i] += cfg.lambda_laplacian * w.lap2[i];
    }
    lam = dot(v, qv);
    v.swap(qv);
  }
  return lam;
}

}  // namespace

double objective(std::span<const double> p, std::span<const double> s,
                 const LinearOperator& op, std::size_t n_x, std::size_t n_y,
                 const ReconConfig& cfg) {
  if (p.size() != op.domain_size() || s.size() != op.range_size())
    throw DataError("objective: shape mismatch");
  Work w;
  w.mp.resize(op.range_size());
  w.lap.resize(p.size());
  return eval_objective(p, s, op, n_x, n_y, cfg, w);
}

double objective(const ImageGrid& p, const Sinogram& s, const ForwardOperator& op,
                 const ReconConfig& cfg) {
  ForwardOperatorRef ref(op);
  return objective(p.pixels, s.data, ref, p.n_x, p.n_y, cfg);
}

double lambda_scale(const LinearOperator& op, std::span<const double> s) {
  std::vector<double> adj(op.domain_size());
  op.apply_adjoint(s, adj);
  double m = 0.0;
  for (double v : adj) m = std::max(m, std::abs(v));
  return m;
}

ReconResult reconstruct(std::span<const double> s, const LinearOperator& op,
                        std::size_t n_x, std::size_t n_y, double extent_m,
                        const ReconConfig& cfg) {
  cfg.validate();
  const std::size_t n = op.domain_size();
  if (n != n_x * n_y) throw DataError("reconstruct: grid does not match operator");
  if (s.size() != op.range_size())
    throw DataError("reconstruct: sinogram does not match operator");

  Work w;
  w.mp.resize(op.range_size());
  w.lap.resize(n);
  w.lap2.resize(n);

  const double lam_max = estimate_spectral_bound(op, n_x, n_y, cfg, w);
  // Gradient Lipschitz constant is 2*lam_max; 5% headroom for the estimate.
  const double L = std::max(2.0 * lam_max * 1.05, 1e-300);

  std::vector<double> x(n, 0.0), x_prev(n, 0.0), y(n, 0.0), z(n), grad(n);
  double f_x = eval_objective(x, s, op, n_x, n_y, cfg, w);

  ReconResult result;
  result.lambda_tikhonov = cfg.lambda_tikhonov;
  result.lambda_laplacian = cfg.lambda_laplacian;
  result.trace.push_back(f_x);

  double t = 1.0;
  bool converged = false;
  std::size_t it = 0;
  for (; it < cfg.max_iters; ++it) {
    eval_gradient(y, s, op, n_x, n_y, cfg, w, grad);
    for (std::size_t i = 0; i < n; ++i)
      z[i] = std::max(0.0, y[i] - grad[i] / L);
    double f_z = eval_objective(z, s, op, n_x, n_y, cfg, w);
    if (!std::isfinite(f_z))
      throw NumericError("reconstruct: non-finite objective at iteration " +
                         std::to_string(it));

    x_prev.swap(x);
    const double f_prev = f_x;
    if (f_z <= f_prev) {
      x.swap(z);
      f_x = f_z;
    } else {
      // Fall back to a plain projected-gradient step from the last iterate.
      eval_gradient(x_prev, s, op, n_x, n_y, cfg, w, grad);
      for (std::size_t i = 0; i < n; ++i)
        x[i] = std::max(0.0, x_prev[i] - grad[i] / L);
      f_x = eval_objective(x, s, op, n_x, n_y, cfg, w);
      if (!std::isfinite(f_x))
        throw NumericError("reconstruct: non-finite objective at iteration " +
                           std::to_string(it));
    }
    if (f_x > f_prev + 1e-10)
      throw NumericError("reconstruct: objective increased at iteration " +
                         std::to_string(it));
    result.trace.push_back(f_x);

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    for (std::size_t i = 0; i < n; ++i)
      y[i] = x[i] + beta * (x[i] - x_prev[i]);
    t = t_next;

    if (std::abs(f_prev - f_x) <= cfg.rel_tol * std::max(1.0, std::abs(f_x))) {
      converged = true;
      ++it;
      break;
    }
  }

  result.image = ImageGrid(n_x, n_y, extent_m);
  result.image.pixels.assign(x.begin(), x.end());
  result.iterations = it;
  result.converged = converged;
  return result;
}

ReconResult reconstruct(const Sinogram& s, const ForwardOperator& op,
                        const ReconConfig& cfg) {
  if (s.n_transducers != op.n_transducers() || s.n_samples != op.n_samples())
    throw DataError("reconstruct: sinogram shape does not match operator");
  ForwardOperatorRef ref(op);
  return reconstruct(s.data, ref, op.grid().n_x, op.grid().n_y,
                     op.grid().extent_m, cfg);
}

KktReport kkt_report(std::span<const double> p, std::span<const double> s,
                     const LinearOperator& op, std::size_t n_x, std::size_t n_y,
                     const ReconConfig& cfg, double activity_tol) {
  Work w;
  w.mp.resize(op.range_size());
  w.lap.resize(p.size());
  w.lap2.resize(p.size());
  std::vector<double> grad(p.size());
  eval_gradient(p, s, op, n_x, n_y, cfg, w, grad);

  KktReport rep;
  rep.min_grad_at_bound = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) {
    rep.grad_scale = std::max(rep.grad_scale, std::abs(grad[i]));
    if (p[i] > activity_tol)
      rep.max_abs_grad_active = std::max(rep.max_abs_grad_active, std::abs(grad[i]));
    else
      rep.min_grad_at_bound = std::min(rep.min_grad_at_bound, grad[i]);
  }
  if (!std::isfinite(rep.min_grad_at_bound)) rep.min_grad_at_bound = 0.0;
  return rep;
}

}  // namespace oadn
