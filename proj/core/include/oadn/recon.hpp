#pragma once

#include <span>
#include <vector>

#include "oadn/forward.hpp"
#include "oadn/image.hpp"
#include "oadn/sinogram.hpp"

namespace oadn {

// Abstract linear map so the solver can run against the acoustic operator,
// an identity (test hook) or a dense oracle matrix.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual std::size_t domain_size() const = 0;  // image pixels
  virtual std::size_t range_size() const = 0;   // sinogram entries
  virtual void apply(std::span<const double> x, std::span<double> y) const = 0;
  virtual void apply_adjoint(std::span<const double> y,
                             std::span<double> x) const = 0;
};

class ForwardOperatorRef final : public LinearOperator {
 public:
  explicit ForwardOperatorRef(const ForwardOperator& op) : op_(op) {}
  std::size_t domain_size() const override { return op_.image_size(); }
  std::size_t range_size() const override { return op_.sino_size(); }
  void apply(std::span<const double> x, std::span<double> y) const override {
    op_.apply(x, y);
  }
  void apply_adjoint(std::span<const double> y, std::span<double> x) const override {
    op_.apply_adjoint(y, x);
  }

 private:
  const ForwardOperator& op_;
};

class IdentityOperator final : public LinearOperator {
 public:
  explicit IdentityOperator(std::size_t n) : n_(n) {}
  std::size_t domain_size() const override { return n_; }
  std::size_t range_size() const override { return n_; }
  void apply(std::span<const double> x, std::span<double> y) const override;
  void apply_adjoint(std::span<const double> y, std::span<double> x) const override;

 private:
  std::size_t n_;
};

class DenseOperator final : public LinearOperator {
 public:
  DenseOperator(std::vector<double> matrix, std::size_t rows, std::size_t cols);
  std::size_t domain_size() const override { return cols_; }
  std::size_t range_size() const override { return rows_; }
  void apply(std::span<const double> x, std::span<double> y) const override;
  void apply_adjoint(std::span<const double> y, std::span<double> x) const override;

 private:
  std::vector<double> m_;
  std::size_t rows_, cols_;
};

struct ReconConfig {
  double lambda_tikhonov = 0.0;
  double lambda_laplacian = 0.0;
  std::size_t max_iters = 200;
  double rel_tol = 1e-6;
  std::size_t power_iters = 40;  // Lipschitz estimate for the 1/L step

  void validate() const;
};

// 5-point Laplacian (-4 center, +1 neighbors) with reflective boundaries;
// self-adjoint, annihilates constants.
void laplacian_apply(std::size_t n_x, std::size_t n_y, std::span<const double> in,
                     std::span<double> out);
ImageGrid laplacian_apply(const ImageGrid& p);

// ||Mp - s||^2 + lambda1 ||p||^2 + lambda2 ||laplacian p||^2
double objective(std::span<const double> p, std::span<const double> s,
                 const LinearOperator& op, std::size_t n_x, std::size_t n_y,
                 const ReconConfig& cfg);
double objective(const ImageGrid& p, const Sinogram& s, const ForwardOperator& op,
                 const ReconConfig& cfg);

// Data-driven default: lambda = rel * ||M^T s||_inf (reported with results).
double lambda_scale(const LinearOperator& op, std::span<const double> s);

struct ReconResult {
  ImageGrid image;
  std::vector<double> trace;  // objective value per accepted iterate
  std::size_t iterations = 0;
  bool converged = false;
  double lambda_tikhonov = 0.0;
  double lambda_laplacian = 0.0;
};

// Nonnegative minimizer of the regularized objective via monotone
// accelerated projected gradient: an accelerated step is taken only if it
// does not increase the objective, else the plain projected-gradient step
// from the previous iterate is used. Step size 1/L with L from power
// iteration on M^T M + lambda1 I + lambda2 (laplacian)^2.
ReconResult reconstruct(std::span<const double> s, const LinearOperator& op,
                        std::size_t n_x, std::size_t n_y, double extent_m,
                        const ReconConfig& cfg);
ReconResult reconstruct(const Sinogram& s, const ForwardOperator& op,
                        const ReconConfig& cfg);

// First-order optimality measures at p for the KKT test: the largest
// |gradient| over clearly-positive pixels and the most negative gradient
// over pixels at the bound.
struct KktReport {
  double max_abs_grad_active = 0.0;  // pixels with p > activity_tol
  double min_grad_at_bound = 0.0;    // pixels with p <= activity_tol
  double grad_scale = 0.0;           // ||grad at p = 0||_inf reference
};
KktReport kkt_report(std::span<const double> p, std::span<const double> s,
                     const LinearOperator& op, std::size_t n_x, std::size_t n_y,
                     const ReconConfig& cfg, double activity_tol);

}  // namespace oadn
