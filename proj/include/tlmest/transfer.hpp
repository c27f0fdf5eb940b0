#pragma once

#include <vector>

#include "tlmest/solvers.hpp"

// Two-step transfer estimation: a weighted pooled fit across all studies
// followed by a fine-tuning correction on the target study alone, with the
// correction penalized in Lagrangian or constrained form.

namespace tlmest {

enum class FinetuneKind { None, Lagrangian, Constrained };

struct TransferConfig {
  double lambda_pool = 0.0;
  FinetuneKind finetune = FinetuneKind::None;
  double finetune_level = 0.0;  // zeta_d (Lagrangian) or r_d (Constrained)
  Regularizer regularizer;
  SolverOptions solver;

  void validate() const {
    solver.validate();
    if (lambda_pool < 0) throw std::invalid_argument("TransferConfig: lambda_pool >= 0");
    if (finetune != FinetuneKind::None && finetune_level < 0)
      throw std::invalid_argument("TransferConfig: finetune level must be >= 0");
  }
};

struct TransferFit {
  Parameter primal;     // pooled estimate
  Parameter finetuned;  // primal + delta, exactly
  Parameter delta;
  bool pool_converged = false;
  bool finetune_converged = true;
  bool bracket_ok = true;  // constrained variant only
  int pool_iterations = 0;
  int finetune_iterations = 0;
  double pool_objective = 0.0;
  double finetune_objective = 0.0;
};

struct FinetuneResult {
  Parameter delta;
  Parameter estimate;  // theta_P + delta
  bool converged = true;
  bool bracket_ok = true;
  int iterations = 0;
};

namespace detail {

inline bool all_sparse_linear(const std::vector<const Dataset*>& ds) {
  for (const Dataset* d : ds)
    if (d->family.kind != LossKind::SquaredIdentity || !d->vector_shape()) return false;
  return true;
}

}  // namespace detail

// argmin over theta of  sum_k (alpha_k n_k / n_P) L_k(theta) + lambda R(theta).
inline Parameter pooled_estimate(const std::vector<const Dataset*>& datasets,
                                 const Regularizer& reg, double lambda,
                                 const SolverOptions& opts = {}, bool* converged = nullptr,
                                 int* iterations = nullptr) {
  if (datasets.empty()) throw std::invalid_argument("pooled_estimate: empty pool");
  opts.validate();
  if (lambda < 0) throw std::invalid_argument("pooled_estimate: lambda must be >= 0");
  GlmObjective pool(datasets);  // validates shared shape/family
  if (reg.kind == RegKind::L1) {
    if (!detail::all_sparse_linear(datasets))
      throw std::invalid_argument("pooled_estimate: L1 requires squared loss on vectors");
    // Row-stack sqrt(alpha_k)-scaled studies: the pooled objective times 2 n_P
    // becomes one lasso problem with penalty 2 n_P lambda.
    Eigen::Index n_total = 0;
    for (const Dataset* d : datasets) n_total += d->n();
    Eigen::MatrixXd X(n_total, datasets[0]->dim());
    Eigen::VectorXd y(n_total);
    Eigen::Index at = 0;
    for (const Dataset* d : datasets) {
      double s = std::sqrt(d->weight);
      X.middleRows(at, d->n()) = s * d->covariates;
      y.segment(at, d->n()) = s * d->responses;
      at += d->n();
    }
    LassoResult res = lasso_cd(X, y, 2.0 * lambda, opts);
    if (converged) *converged = res.converged;
    if (iterations) *iterations = res.sweeps;
    return Parameter::vector(res.coef);
  }
  if (datasets[0]->vector_shape())
    throw std::invalid_argument("pooled_estimate: nuclear regularizer requires matrices");
  NuclearFitResult res = quad_admm_nuclear(pool, lambda, pool.zero(), pool.zero(), opts);
  if (converged) *converged = res.converged;
  if (iterations) *iterations = res.outer_iterations;
  return res.estimate;
}

inline Parameter pooled_estimate(const std::vector<Dataset>& datasets, const Regularizer& reg,
                                 double lambda, const SolverOptions& opts = {}) {
  std::vector<const Dataset*> ptrs;
  for (const Dataset& d : datasets) ptrs.push_back(&d);
  return pooled_estimate(ptrs, reg, lambda, opts);
}

// delta-hat = argmin L_0(theta_P + delta) + zeta R(delta); estimate = theta_P + delta.
inline FinetuneResult fine_tune_lagrangian(const Dataset& target, const Parameter& theta_P,
                                           double zeta, const Regularizer& reg,
                                           const SolverOptions& opts = {}) {
  opts.validate();
  if (zeta < 0) throw std::invalid_argument("fine_tune: zeta must be >= 0");
  target.require_matches(theta_P);
  FinetuneResult out;
  if (reg.kind == RegKind::L1) {
    if (target.family.kind != LossKind::SquaredIdentity || !target.vector_shape())
      throw std::invalid_argument("fine_tune: L1 requires squared loss on vectors");
    Eigen::VectorXd resid = target.responses - target.covariates * theta_P.vec();
    LassoResult res = lasso_cd(target.covariates, resid, 2.0 * zeta, opts);
    out.delta = Parameter::vector(res.coef);
    out.converged = res.converged;
    out.iterations = res.sweeps;
  } else {
    if (target.vector_shape())
      throw std::invalid_argument("fine_tune: nuclear regularizer requires matrices");
    GlmObjective obj(target);
    NuclearFitResult res = quad_admm_nuclear(obj, zeta, theta_P, obj.zero(), opts);
    out.delta = res.estimate;
    out.converged = res.converged;
    out.iterations = res.outer_iterations;
  }
  out.estimate = theta_P + out.delta;
  return out;
}

// Constrained form R(delta) <= radius, solved by bisection on the Lagrangian
// multiplier; the smallest multiplier whose solution is feasible wins.
inline FinetuneResult fine_tune_constrained(const Dataset& target, const Parameter& theta_P,
                                            double radius, const Regularizer& reg,
                                            const SolverOptions& opts = {}) {
  if (radius < 0) throw std::invalid_argument("fine_tune: radius must be >= 0");
  target.require_matches(theta_P);
  if (radius == 0) {
    FinetuneResult out;
    out.delta = theta_P * 0.0;
    out.estimate = theta_P;
    return out;
  }
  FinetuneResult lo = fine_tune_lagrangian(target, theta_P, 0.0, reg, opts);
  if (reg.norm(lo.delta) <= radius) return lo;
  double zeta_hi = reg.dual_norm(glm_gradient(target, theta_P));
  FinetuneResult best = fine_tune_lagrangian(target, theta_P, zeta_hi, reg, opts);
  if (reg.norm(best.delta) > radius * (1.0 + 1e-6)) {
    best.bracket_ok = false;  // zero should be feasible at zeta_hi; flag and return
    return best;
  }
  double zeta_lo = 0.0;
  for (int it = 0; it < 20; ++it) {
    double mid = 0.5 * (zeta_lo + zeta_hi);
    FinetuneResult cand = fine_tune_lagrangian(target, theta_P, mid, reg, opts);
    if (reg.norm(cand.delta) <= radius) {
      best = cand;
      zeta_hi = mid;
    } else {
      zeta_lo = mid;
    }
  }
  return best;
}

inline TransferFit oracle_transfer(const std::vector<const Dataset*>& datasets,
                                   std::size_t target_index, const TransferConfig& cfg) {
  cfg.validate();
  if (target_index >= datasets.size())
    throw std::invalid_argument("oracle_transfer: target index out of range");
  TransferFit fit;
  fit.primal = pooled_estimate(datasets, cfg.regularizer, cfg.lambda_pool, cfg.solver,
                               &fit.pool_converged, &fit.pool_iterations);
  GlmObjective pool(datasets);
  fit.pool_objective = pool.loss(fit.primal) + cfg.lambda_pool * cfg.regularizer.norm(fit.primal);

  const Dataset& target = *datasets[target_index];
  if (cfg.finetune == FinetuneKind::None) {
    fit.delta = fit.primal * 0.0;
    fit.finetuned = fit.primal;
  } else {
    FinetuneResult ft =
        cfg.finetune == FinetuneKind::Lagrangian
            ? fine_tune_lagrangian(target, fit.primal, cfg.finetune_level, cfg.regularizer,
                                   cfg.solver)
            : fine_tune_constrained(target, fit.primal, cfg.finetune_level, cfg.regularizer,
                                    cfg.solver);
    fit.delta = ft.delta;
    fit.finetuned = ft.estimate;
    fit.finetune_converged = ft.converged;
    fit.bracket_ok = ft.bracket_ok;
    fit.finetune_iterations = ft.iterations;
  }
  double zeta = cfg.finetune == FinetuneKind::Lagrangian ? cfg.finetune_level : 0.0;
  fit.finetune_objective =
      glm_loss(target, fit.finetuned) + zeta * cfg.regularizer.norm(fit.delta);
  return fit;
}

inline TransferFit oracle_transfer(const std::vector<Dataset>& datasets,
                                   std::size_t target_index, const TransferConfig& cfg) {
  std::vector<const Dataset*> ptrs;
  for (const Dataset& d : datasets) ptrs.push_back(&d);
  return oracle_transfer(ptrs, target_index, cfg);
}

}  // namespace tlmest
