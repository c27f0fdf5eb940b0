#pragma once

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "tlmest/core.hpp"

// Reusable optimization kernels: the l1/nuclear proximal maps, cyclic
// coordinate-descent lasso (Gram form, so ADMM callers can refresh only the
// linear term between sweeps), a PD linear solver, and the quadratic
// approximation ADMM for nuclear-norm penalized GLM trace regression.

namespace tlmest {

struct SolverOptions {
  int max_iterations = 1000;
  double tolerance = 1e-8;        // KKT stopping scale for coordinate descent
  double outer_tolerance = 1e-6;  // relative parameter-change for outer loops
  double admm_rho = 1.0;          // rho for single-consensus ADMM
  double admm_rho1 = 1.0;         // rho1/rho2 for the two-constraint trace ADMM
  double admm_rho2 = 1.0;
  double residual_abs = 1e-6;
  double residual_rel = 1e-4;

  void validate() const {
    if (max_iterations < 1 || tolerance <= 0 || outer_tolerance <= 0 || admm_rho <= 0 ||
        admm_rho1 <= 0 || admm_rho2 <= 0 || residual_abs <= 0 || residual_rel <= 0)
      throw std::invalid_argument("SolverOptions: all fields must be positive");
  }
};

inline Eigen::VectorXd prox_l1(const Eigen::VectorXd& b, double a) {
  if (a < 0) throw std::invalid_argument("prox_l1: threshold must be >= 0");
  Eigen::VectorXd out(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    double m = std::abs(b[i]) - a;
    out[i] = m > 0 ? (b[i] > 0 ? m : -m) : 0.0;
  }
  return out;
}

// Singular value shrinkage S_lambda(Y) = U diag{(sigma_i - lambda)_+} V^T,
// the proximal map of the nuclear norm.
inline Eigen::MatrixXd svd_shrink(const Eigen::MatrixXd& Y, double lambda) {
  if (lambda < 0) throw std::invalid_argument("svd_shrink: threshold must be >= 0");
  if (!Y.allFinite()) throw std::invalid_argument("svd_shrink: non-finite input");
  if (lambda == 0) return Y;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd sv = svd.singularValues();
  for (Eigen::Index i = 0; i < sv.size(); ++i) sv[i] = std::max(sv[i] - lambda, 0.0);
  return svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
}

struct LassoResult {
  Eigen::VectorXd coef;
  int sweeps = 0;
  bool converged = false;
};

// Cached quadratic form for argmin theta^T G theta - 2 c^T theta + a ||theta||_1.
// G stays fixed across the ADMM sweeps of the selection solver; only c moves.
struct LassoGram {
  Eigen::MatrixXd gram;    // G, symmetric PSD
  Eigen::VectorXd linear;  // c

  // KKT residual of 2(G theta - c) against the subgradient of a||.||_1.
  double kkt_residual(const Eigen::VectorXd& theta, double a) const {
    Eigen::VectorXd g = 2.0 * (gram * theta - linear);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      double v = theta[j] == 0.0 ? std::max(std::abs(g[j]) - a, 0.0)
                                 : std::abs(g[j] + a * (theta[j] > 0 ? 1.0 : -1.0));
      worst = std::max(worst, v);
    }
    return worst;
  }

  LassoResult solve(double a, Eigen::VectorXd init, const SolverOptions& opts) const {
    if (a < 0) throw std::invalid_argument("lasso: penalty must be >= 0");
    const Eigen::Index p = gram.rows();
    if (init.size() != p) throw std::invalid_argument("lasso: init dimension mismatch");
    Eigen::VectorXd theta = std::move(init);
    Eigen::VectorXd grad = gram * theta - linear;  // (1/2) gradient of smooth part
    double tol = opts.tolerance * std::max(1.0, a);
    LassoResult out;
    for (out.sweeps = 1; out.sweeps <= opts.max_iterations; ++out.sweeps) {
      for (Eigen::Index j = 0; j < p; ++j) {
        double gjj = gram(j, j);
        if (gjj <= 0.0) {
          theta[j] = 0.0;
          continue;
        }
        double old = theta[j];
        double z = gjj * old - grad[j];  // c_j - sum_{i!=j} G_ji theta_i
        double zs = std::abs(z) - 0.5 * a;
        double next = zs > 0 ? (z > 0 ? zs : -zs) / gjj : 0.0;
        if (next != old) {
          grad += gram.col(j) * (next - old);
          theta[j] = next;
        }
      }
      double worst = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        double g = 2.0 * grad[j];
        double v = theta[j] == 0.0 ? std::max(std::abs(g) - a, 0.0)
                                   : std::abs(g + a * (theta[j] > 0 ? 1.0 : -1.0));
        worst = std::max(worst, v);
      }
      if (worst <= tol) {
        out.converged = true;
        break;
      }
    }
    out.sweeps = std::min(out.sweeps, opts.max_iterations);
    out.coef = std::move(theta);
    return out;
  }
};

// argmin ||y - X theta||_2^2 + n lambda ||theta||_1 by cyclic coordinate descent.
inline LassoResult lasso_cd(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                            const Eigen::VectorXd& init, const SolverOptions& opts = {}) {
  if (X.rows() != y.size()) throw std::invalid_argument("lasso_cd: dimension mismatch");
  if (lambda < 0) throw std::invalid_argument("lasso_cd: lambda must be >= 0");
  opts.validate();
  LassoGram g{X.transpose() * X, X.transpose() * y};
  return g.solve(static_cast<double>(X.rows()) * lambda, init, opts);
}

inline LassoResult lasso_cd(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                            const SolverOptions& opts = {}) {
  return lasso_cd(X, y, lambda, Eigen::VectorXd::Zero(X.cols()), opts);
}

// Symmetric positive-definite solve via Cholesky with one refinement step.
inline Eigen::VectorXd solve_pd(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  if (A.rows() != A.cols() || A.rows() != b.size())
    throw std::invalid_argument("solve_pd: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw std::runtime_error("solve_pd: matrix not positive definite");
  Eigen::VectorXd x = llt.solve(b);
  x += llt.solve(b - A * x);
  return x;
}

// A smooth GLM objective: either a single dataset or a weighted pool
// sum_k alpha_k n_k L_k / n_P over datasets sharing one covariate shape.
class GlmObjective {
 public:
  explicit GlmObjective(const Dataset& d) : data_{&d} { init_weights(); }
  explicit GlmObjective(const std::vector<const Dataset*>& datasets) : data_(datasets) {
    if (data_.empty()) throw std::invalid_argument("GlmObjective: empty pool");
    for (const Dataset* d : data_) {
      if (d->d1 != data_[0]->d1 || d->d2 != data_[0]->d2 ||
          d->family.kind != data_[0]->family.kind)
        throw std::invalid_argument("GlmObjective: datasets must share shape and family");
    }
    init_weights();
  }

  Eigen::Index d1() const { return data_[0]->d1; }
  Eigen::Index d2() const { return data_[0]->d2; }
  Eigen::Index dim() const { return data_[0]->dim(); }
  const LossFamily& family() const { return data_[0]->family; }

  double loss(const Parameter& theta) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < data_.size(); ++k) acc += w_[k] * glm_loss(*data_[k], theta);
    return acc;
  }

  Eigen::VectorXd gradient_vec(const Parameter& theta) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
    for (std::size_t k = 0; k < data_.size(); ++k)
      g += w_[k] * glm_gradient(*data_[k], theta).vec();
    return g;
  }

  Eigen::MatrixXd hessian_vec(const Parameter& theta) const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim(), dim());
    for (std::size_t k = 0; k < data_.size(); ++k)
      h += w_[k] * glm_hessian_vec(*data_[k], theta);
    return h;
  }

  Parameter zero() const {
    return d2() == 1 ? Parameter::zero_vector(d1()) : Parameter::zero_matrix(d1(), d2());
  }

 private:
  void init_weights() {
    double n_total = 0.0;
    for (const Dataset* d : data_) n_total += static_cast<double>(d->n());
    w_.resize(data_.size());
    for (std::size_t k = 0; k < data_.size(); ++k)
      w_[k] = data_[k]->weight * static_cast<double>(data_[k]->n()) / n_total;
  }

  std::vector<const Dataset*> data_;
  std::vector<double> w_;
};

struct NuclearFitResult {
  Parameter estimate;  // the penalized variable (exactly shrunk)
  int outer_iterations = 0;
  int admm_sweeps = 0;
  bool converged = false;
  double final_consensus_residual = 0.0;
};

// Approximate minimizer over delta of  L(offset + delta) + lambda ||delta||_N.
// Outer loop: quadratic model of L around the current iterate; inner loop:
// scaled ADMM alternating svd_shrink with the PD gamma-system. With
// offset = 0 this is the plain nuclear-norm penalized GLM fit.
inline NuclearFitResult quad_admm_nuclear(const GlmObjective& obj, double lambda,
                                          const Parameter& offset, const Parameter& init,
                                          const SolverOptions& opts = {}) {
  opts.validate();
  if (lambda < 0) throw std::invalid_argument("quad_admm_nuclear: lambda must be >= 0");
  const Eigen::Index d1 = obj.d1(), d2 = obj.d2(), dim = obj.dim();
  const double rho = opts.admm_rho;
  const int max_outer = 100;
  const int max_inner = 500;

  Eigen::MatrixXd delta = init.values();
  NuclearFitResult out;
  for (int m = 0; m < max_outer; ++m) {
    Parameter center = Parameter::like(offset, offset.values() + delta);
    Eigen::VectorXd grad = obj.gradient_vec(center);
    Eigen::MatrixXd A = obj.hessian_vec(center);
    A.diagonal().array() += rho;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("quad_admm_nuclear: gamma system not PD");

    Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(d1, d2);
    Eigen::MatrixXd nu = Eigen::MatrixXd::Zero(d1, d2);
    Eigen::MatrixXd delta_in = delta;
    double primal = 0.0;
    for (int l = 0; l < max_inner; ++l) {
      Eigen::MatrixXd delta_prev = delta_in;
      delta_in = svd_shrink(gamma + delta + nu, lambda / rho);
      Eigen::VectorXd rhs =
          rho * Eigen::Map<const Eigen::VectorXd>(
                    Eigen::MatrixXd(delta_in - delta - nu).data(), dim) -
          grad;
      Eigen::VectorXd gvec = llt.solve(rhs);
      gamma = Eigen::Map<const Eigen::MatrixXd>(gvec.data(), d1, d2);
      nu += gamma - delta_in + delta;
      ++out.admm_sweeps;

      primal = (gamma - delta_in + delta).norm();
      double dual = rho * (delta_in - delta_prev).norm();
      double scale = std::max({delta_in.norm(), gamma.norm(), 1e-12});
      double eps_pri = opts.residual_abs * std::sqrt(static_cast<double>(dim)) +
                       opts.residual_rel * scale;
      double eps_dual = opts.residual_abs * std::sqrt(static_cast<double>(dim)) +
                        opts.residual_rel * rho * nu.norm();
      if (primal <= eps_pri && dual <= eps_dual) break;
    }
    out.final_consensus_residual = primal;

    double step = (delta_in - delta).norm();
    delta = delta_in;
    ++out.outer_iterations;
    if (step <= opts.outer_tolerance * (1.0 + delta.norm())) {
      out.converged = true;
      break;
    }
  }
  out.estimate = Parameter::like(offset, delta);
  return out;
}

struct SingleFitResult {
  Parameter estimate;
  bool converged = false;
  int iterations = 0;
};

// Penalized single-study fit: argmin L_k(theta) + lambda R(theta).
// Dispatches to lasso_cd (after rescaling the public 1/n-averaged penalty)
// or to the nuclear-norm ADMM.
inline SingleFitResult fit_single_result(const Dataset& d, const Regularizer& r, double lambda,
                                         const SolverOptions& opts = {}) {
  opts.validate();
  if (lambda < 0) throw std::invalid_argument("fit_single: lambda must be >= 0");
  if (r.kind == RegKind::L1) {
    if (d.family.kind != LossKind::SquaredIdentity || !d.vector_shape())
      throw std::invalid_argument("fit_single: L1 requires squared loss on vector covariates");
    // glm_loss = ||y - X theta||^2 / (2n) + const, so the lasso penalty is 2 n lambda.
    LassoResult res = lasso_cd(d.covariates, d.responses, 2.0 * lambda, opts);
    return {Parameter::vector(res.coef), res.converged, res.sweeps};
  }
  if (d.vector_shape())
    throw std::invalid_argument("fit_single: nuclear regularizer requires matrix covariates");
  GlmObjective obj(d);
  NuclearFitResult res = quad_admm_nuclear(obj, lambda, obj.zero(), obj.zero(), opts);
  return {res.estimate, res.converged, res.outer_iterations};
}

inline Parameter fit_single(const Dataset& d, const Regularizer& r, double lambda,
                            const SolverOptions& opts = {}) {
  return fit_single_result(d, r, lambda, opts).estimate;
}

}  // namespace tlmest
