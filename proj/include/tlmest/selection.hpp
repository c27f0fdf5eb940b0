#pragma once

#include <vector>

#include "tlmest/transfer.hpp"

// Joint estimation of the target and all source parameters under a truncated
// contrast penalty: an outer difference-of-convex loop freezes the truncation
// indicators, and an inner consensus ADMM solves each convex surrogate.

namespace tlmest {

struct SelectionConfig {
  double lambda_pool = 0.0;
  std::vector<double> lambda_q;  // length K, one per source
  double tau = 1.0;
  Regularizer regularizer;
  SolverOptions solver;
  int max_dc_iterations = 50;

  void validate(std::size_t n_sources) const {
    solver.validate();
    if (lambda_pool < 0) throw std::invalid_argument("SelectionConfig: lambda_pool >= 0");
    if (tau <= 0) throw std::invalid_argument("SelectionConfig: tau must be > 0");
    if (max_dc_iterations < 1)
      throw std::invalid_argument("SelectionConfig: max_dc_iterations >= 1");
    if (lambda_q.size() != n_sources)
      throw std::invalid_argument("SelectionConfig: lambda_q size must match source count");
    for (double l : lambda_q)
      if (l < 0) throw std::invalid_argument("SelectionConfig: lambda_q >= 0");
  }
};

struct SelectionFit {
  Parameter primal;                  // theta_0
  std::vector<Parameter> estimates;  // K+1 entries, index 0 = target
  std::vector<bool> informative_flags;
  std::vector<bool> truncation_indicators;  // last DC iteration's I(||delta|| >= tau)
  std::vector<double> objective_trace;
  double consensus_residual = 0.0;
  int dc_iterations = 0;
  bool converged = false;
};

// flag[k] = informative iff the contrast norm is within tau.
inline std::vector<bool> identify_informative(const std::vector<Parameter>& thetas, double tau,
                                              const Regularizer& reg) {
  if (tau <= 0) throw std::invalid_argument("identify_informative: tau must be > 0");
  if (thetas.empty()) throw std::invalid_argument("identify_informative: empty input");
  std::vector<bool> flags;
  for (std::size_t k = 1; k < thetas.size(); ++k)
    flags.push_back(reg.norm(thetas[k] - thetas[0]) <= tau);
  return flags;
}

namespace detail {

inline void check_selection_pool(const std::vector<const Dataset*>& ds) {
  if (ds.size() < 2)
    throw std::invalid_argument("selection: need a target and at least one source");
  for (const Dataset* d : ds)
    if (d->d1 != ds[0]->d1 || d->d2 != ds[0]->d2 || d->family.kind != ds[0]->family.kind)
      throw std::invalid_argument("selection: datasets must share shape and family");
}

}  // namespace detail

// Sparse linear case. Works on the N-rescaled objective
//   sum_k alpha_k ||y_k - X_k theta_k||^2 + sum_k n_k lp ||theta_k||_1
//     + sum_{k>=1} n_k lq_k min(||theta_0 - theta_k||_1, tau)
// where lp = 2 lambda_pool and lq = 2 lambda_q translate the averaged-loss
// convention into the squared-residual form.
inline SelectionFit dc_truncated_sparse(const std::vector<const Dataset*>& datasets,
                                        const SelectionConfig& cfg) {
  detail::check_selection_pool(datasets);
  const std::size_t K = datasets.size() - 1;
  cfg.validate(K);
  for (const Dataset* d : datasets)
    if (d->family.kind != LossKind::SquaredIdentity || !d->vector_shape())
      throw std::invalid_argument("dc_truncated_sparse: squared loss on vectors only");
  if (cfg.regularizer.kind != RegKind::L1)
    throw std::invalid_argument("dc_truncated_sparse: L1 regularizer only");

  const Eigen::Index p = datasets[0]->dim();
  const double rho = cfg.solver.admm_rho;
  const double lp = 2.0 * cfg.lambda_pool;
  std::vector<double> lq(K);
  for (std::size_t k = 0; k < K; ++k) lq[k] = 2.0 * cfg.lambda_q[k];

  // Fixed Gram matrices: data part plus the augmented-Lagrangian diagonal.
  std::vector<LassoGram> grams(K + 1);
  std::vector<Eigen::VectorXd> xty(K + 1);
  std::vector<double> a_pen(K + 1);
  for (std::size_t k = 0; k <= K; ++k) {
    const Dataset& d = *datasets[k];
    grams[k].gram = d.weight * (d.covariates.transpose() * d.covariates);
    double diag = (k == 0 ? static_cast<double>(K) : 1.0) * rho / 2.0;
    grams[k].gram.diagonal().array() += diag;
    xty[k] = d.weight * (d.covariates.transpose() * d.responses);
    a_pen[k] = static_cast<double>(d.n()) * lp;
  }

  // Initial per-dataset lasso fits (no consensus terms).
  std::vector<Eigen::VectorXd> theta(K + 1);
  for (std::size_t k = 0; k <= K; ++k) {
    const Dataset& d = *datasets[k];
    LassoGram g{d.weight * (d.covariates.transpose() * d.covariates), xty[k]};
    theta[k] = g.solve(a_pen[k], Eigen::VectorXd::Zero(p), cfg.solver).coef;
  }
  std::vector<Eigen::VectorXd> delta(K), nu(K, Eigen::VectorXd::Zero(p));
  for (std::size_t k = 0; k < K; ++k) delta[k] = theta[0] - theta[k + 1];

  auto objective = [&](const std::vector<Eigen::VectorXd>& th) {
    double s = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
      const Dataset& d = *datasets[k];
      s += d.weight * (d.responses - d.covariates * th[k]).squaredNorm();
      s += a_pen[k] * th[k].lpNorm<1>();
    }
    for (std::size_t k = 0; k < K; ++k)
      s += static_cast<double>(datasets[k + 1]->n()) * lq[k] *
           std::min((th[0] - th[k + 1]).lpNorm<1>(), cfg.tau);
    return s;
  };
  auto contrast_indicators = [&](const std::vector<Eigen::VectorXd>& th) {
    std::vector<bool> ind(K);
    for (std::size_t k = 0; k < K; ++k)
      ind[k] = (th[0] - th[k + 1]).lpNorm<1>() >= cfg.tau;
    return ind;
  };

  SelectionFit fit;
  fit.objective_trace.push_back(objective(theta));
  std::vector<bool> indicators = contrast_indicators(theta);
  const int max_inner = 500;

  for (int m = 0; m < cfg.max_dc_iterations; ++m) {
    std::vector<Eigen::VectorXd> theta_prev = theta;
    double primal = 0.0;
    for (int l = 0; l < max_inner; ++l) {
      std::vector<Eigen::VectorXd> delta_old = delta;
      for (std::size_t k = 0; k < K; ++k) {
        grams[k + 1].linear = xty[k + 1] - 0.5 * rho * (delta[k] - theta[0] + nu[k]);
        theta[k + 1] = grams[k + 1].solve(a_pen[k + 1], theta[k + 1], cfg.solver).coef;
      }
      Eigen::VectorXd consensus = Eigen::VectorXd::Zero(p);
      for (std::size_t k = 0; k < K; ++k) consensus += delta[k] + theta[k + 1] + nu[k];
      grams[0].linear = xty[0] + 0.5 * rho * consensus;
      theta[0] = grams[0].solve(a_pen[0], theta[0], cfg.solver).coef;
      for (std::size_t k = 0; k < K; ++k) {
        Eigen::VectorXd v = -theta[k + 1] + theta[0] - nu[k];
        delta[k] = indicators[k]
                       ? v
                       : prox_l1(v, static_cast<double>(datasets[k + 1]->n()) * lq[k] / rho);
        nu[k] += delta[k] + theta[k + 1] - theta[0];
      }
      primal = 0.0;
      double dual = 0.0, nu_norm = 0.0, scale = theta[0].norm();
      for (std::size_t k = 0; k < K; ++k) {
        primal += (delta[k] + theta[k + 1] - theta[0]).squaredNorm();
        dual += (delta[k] - delta_old[k]).squaredNorm();
        nu_norm += nu[k].squaredNorm();
        scale = std::max({scale, delta[k].norm(), theta[k + 1].norm()});
      }
      primal = std::sqrt(primal);
      dual = rho * std::sqrt(dual);
      double root_kp = std::sqrt(static_cast<double>(K) * static_cast<double>(p));
      double eps_pri = cfg.solver.residual_abs * root_kp + cfg.solver.residual_rel * scale;
      double eps_dual = cfg.solver.residual_abs * root_kp +
                        cfg.solver.residual_rel * rho * std::sqrt(nu_norm);
      if (primal <= eps_pri && dual <= eps_dual) break;
    }
    fit.consensus_residual = primal;
    ++fit.dc_iterations;

    double obj = objective(theta);
    if (obj > fit.objective_trace.back() + 1e-8) {
      theta = theta_prev;  // descent safeguard: keep the better iterate and stop
      fit.converged = true;
      break;
    }
    std::vector<bool> next = contrast_indicators(theta);
    bool stable = next == indicators;
    double rel_drop = (fit.objective_trace.back() - obj) /
                      std::max(1.0, std::abs(fit.objective_trace.back()));
    fit.objective_trace.push_back(obj);
    indicators = next;
    if (stable && rel_drop < 1e-6) {
      fit.converged = true;
      break;
    }
  }

  fit.truncation_indicators = indicators;
  for (std::size_t k = 0; k <= K; ++k) fit.estimates.push_back(Parameter::vector(theta[k]));
  fit.primal = fit.estimates[0];
  fit.informative_flags = identify_informative(fit.estimates, cfg.tau, cfg.regularizer);
  return fit;
}

// GLM low-rank trace case: the smooth loss is replaced by its quadratic model
// around the previous DC iterate; theta and delta updates are singular value
// shrinkages, gamma solves a ridge system per study.
inline SelectionFit dc_truncated_trace(const std::vector<const Dataset*>& datasets,
                                       const SelectionConfig& cfg) {
  detail::check_selection_pool(datasets);
  const std::size_t K = datasets.size() - 1;
  cfg.validate(K);
  for (const Dataset* d : datasets)
    if (d->vector_shape())
      throw std::invalid_argument("dc_truncated_trace: matrix covariates only");
  if (cfg.regularizer.kind != RegKind::Nuclear)
    throw std::invalid_argument("dc_truncated_trace: nuclear regularizer only");

  const Eigen::Index d1 = datasets[0]->d1, d2 = datasets[0]->d2, dim = datasets[0]->dim();
  const double rho1 = cfg.solver.admm_rho1, rho2 = cfg.solver.admm_rho2;
  const Regularizer nuc{RegKind::Nuclear};

  auto as_mat = [&](const Eigen::VectorXd& v) {
    return Eigen::MatrixXd(Eigen::Map<const Eigen::MatrixXd>(v.data(), d1, d2));
  };
  auto nk = [&](std::size_t k) { return static_cast<double>(datasets[k]->n()); };

  // Initial per-dataset nuclear-penalized fits.
  std::vector<Eigen::MatrixXd> theta(K + 1);
  for (std::size_t k = 0; k <= K; ++k) {
    GlmObjective obj(*datasets[k]);
    theta[k] =
        quad_admm_nuclear(obj, cfg.lambda_pool, obj.zero(), obj.zero(), cfg.solver)
            .estimate.values();
  }
  std::vector<Eigen::MatrixXd> delta(K), nu(K, Eigen::MatrixXd::Zero(d1, d2));
  std::vector<Eigen::MatrixXd> gamma(K + 1, Eigen::MatrixXd::Zero(d1, d2));
  std::vector<Eigen::MatrixXd> mu(K + 1, Eigen::MatrixXd::Zero(d1, d2));
  for (std::size_t k = 0; k < K; ++k) delta[k] = theta[0] - theta[k + 1];

  auto objective = [&](const std::vector<Eigen::MatrixXd>& th) {
    double s = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
      const Dataset& d = *datasets[k];
      Parameter t = Parameter::matrix(th[k]);
      s += nk(k) * d.weight * glm_loss(d, t);
      s += nk(k) * cfg.lambda_pool * nuc.norm(t);
    }
    for (std::size_t k = 0; k < K; ++k)
      s += nk(k + 1) * cfg.lambda_q[k] *
           std::min(nuc.norm(Parameter::matrix(th[0] - th[k + 1])), cfg.tau);
    return s;
  };
  auto contrast_indicators = [&](const std::vector<Eigen::MatrixXd>& th) {
    std::vector<bool> ind(K);
    for (std::size_t k = 0; k < K; ++k)
      ind[k] = nuc.norm(Parameter::matrix(th[0] - th[k + 1])) >= cfg.tau;
    return ind;
  };

  SelectionFit fit;
  fit.objective_trace.push_back(objective(theta));
  std::vector<bool> indicators = contrast_indicators(theta);
  const int max_inner = 500;

  for (int m = 0; m < cfg.max_dc_iterations; ++m) {
    std::vector<Eigen::MatrixXd> anchor = theta;  // theta^(m), quadratic model center
    std::vector<Eigen::VectorXd> grad(K + 1);
    std::vector<Eigen::LLT<Eigen::MatrixXd>> llt(K + 1);
    for (std::size_t k = 0; k <= K; ++k) {
      const Dataset& d = *datasets[k];
      Parameter c = Parameter::matrix(anchor[k]);
      grad[k] = d.weight * nk(k) * glm_gradient(d, c).vec();
      Eigen::MatrixXd A = d.weight * nk(k) * glm_hessian_vec(d, c);
      A.diagonal().array() += rho2;
      llt[k].compute(A);
      if (llt[k].info() != Eigen::Success)
        throw std::runtime_error("dc_truncated_trace: gamma system not PD");
    }

    double primal = 0.0;
    for (int l = 0; l < max_inner; ++l) {
      std::vector<Eigen::MatrixXd> delta_old = delta, gamma_old = gamma;
      for (std::size_t k = 0; k < K; ++k) {
        Eigen::MatrixXd blend =
            (rho1 * (-delta[k] + theta[0] - nu[k]) +
             rho2 * (gamma[k + 1] + anchor[k + 1] + mu[k + 1])) /
            (rho1 + rho2);
        theta[k + 1] = svd_shrink(blend, nk(k + 1) * cfg.lambda_pool / (rho1 + rho2));
      }
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d1, d2);
      for (std::size_t k = 0; k < K; ++k) acc += delta[k] + theta[k + 1] + nu[k];
      double denom = static_cast<double>(K) * rho1 + rho2;
      theta[0] = svd_shrink((rho1 * acc + rho2 * (gamma[0] + anchor[0] + mu[0])) / denom,
                            nk(0) * cfg.lambda_pool / denom);
      for (std::size_t k = 0; k < K; ++k) {
        Eigen::MatrixXd v = -theta[k + 1] + theta[0] - nu[k];
        delta[k] = indicators[k] ? v : svd_shrink(v, nk(k + 1) * cfg.lambda_q[k] / rho1);
      }
      for (std::size_t k = 0; k <= K; ++k) {
        Eigen::VectorXd rhs =
            rho2 * Eigen::Map<const Eigen::VectorXd>(
                       Eigen::MatrixXd(theta[k] - anchor[k] - mu[k]).data(), dim) -
            grad[k];
        gamma[k] = as_mat(llt[k].solve(rhs));
      }
      for (std::size_t k = 0; k < K; ++k) nu[k] += delta[k] + theta[k + 1] - theta[0];
      for (std::size_t k = 0; k <= K; ++k) mu[k] += gamma[k] - theta[k] + anchor[k];

      primal = 0.0;
      double dual = 0.0, dual_ref = 0.0, scale = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        primal += (delta[k] + theta[k + 1] - theta[0]).squaredNorm();
        dual += (delta[k] - delta_old[k]).squaredNorm();
        dual_ref += nu[k].squaredNorm();
        scale = std::max({scale, delta[k].norm(), theta[k + 1].norm()});
      }
      for (std::size_t k = 0; k <= K; ++k) {
        primal += (gamma[k] - theta[k] + anchor[k]).squaredNorm();
        dual += (gamma[k] - gamma_old[k]).squaredNorm();
        dual_ref += mu[k].squaredNorm();
        scale = std::max(scale, gamma[k].norm());
      }
      scale = std::max({scale, theta[0].norm(), 1e-12});
      primal = std::sqrt(primal);
      double rho_max = std::max(rho1, rho2);
      dual = rho_max * std::sqrt(dual);
      double root = std::sqrt(static_cast<double>(2 * K + 1) * static_cast<double>(dim));
      double eps_pri = cfg.solver.residual_abs * root + cfg.solver.residual_rel * scale;
      double eps_dual = cfg.solver.residual_abs * root +
                        cfg.solver.residual_rel * rho_max * std::sqrt(dual_ref);
      if (primal <= eps_pri && dual <= eps_dual) break;
    }
    fit.consensus_residual = primal;
    ++fit.dc_iterations;

    double obj = objective(theta);
    if (obj > fit.objective_trace.back() + 1e-8) {
      theta = anchor;  // quadratic model overshot; keep the previous iterate
      fit.converged = true;
      break;
    }
    std::vector<bool> next = contrast_indicators(theta);
    bool stable = next == indicators;
    double rel_drop = (fit.objective_trace.back() - obj) /
                      std::max(1.0, std::abs(fit.objective_trace.back()));
    fit.objective_trace.push_back(obj);
    indicators = next;
    if (stable && rel_drop < 1e-6) {
      fit.converged = true;
      break;
    }
  }

  fit.truncation_indicators = indicators;
  for (std::size_t k = 0; k <= K; ++k) fit.estimates.push_back(Parameter::matrix(theta[k]));
  fit.primal = fit.estimates[0];
  fit.informative_flags = identify_informative(fit.estimates, cfg.tau, cfg.regularizer);
  return fit;
}

inline SelectionFit dc_truncated_sparse(const std::vector<Dataset>& datasets,
                                        const SelectionConfig& cfg) {
  std::vector<const Dataset*> ptrs;
  for (const Dataset& d : datasets) ptrs.push_back(&d);
  return dc_truncated_sparse(ptrs, cfg);
}

inline SelectionFit dc_truncated_trace(const std::vector<Dataset>& datasets,
                                       const SelectionConfig& cfg) {
  std::vector<const Dataset*> ptrs;
  for (const Dataset& d : datasets) ptrs.push_back(&d);
  return dc_truncated_trace(ptrs, cfg);
}

}  // namespace tlmest
