#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tlmest/rng.hpp"
#include "tlmest/solvers.hpp"

// Tuning-parameter selection: k-fold cross validation over a penalty grid and
// exhaustive grid search for the clustering penalty pair (lambda_Q, tau).

namespace tlmest {

enum class CvCriterion { PredictionError, Deviance };

struct TuningGrid {
  std::vector<double> values;  // strictly increasing, positive
  int folds = 5;
  CvCriterion criterion = CvCriterion::PredictionError;

  void validate(Eigen::Index n) const {
    if (values.empty()) throw std::invalid_argument("TuningGrid: empty grid");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] <= 0) throw std::invalid_argument("TuningGrid: values must be positive");
      if (i > 0 && values[i] <= values[i - 1])
        throw std::invalid_argument("TuningGrid: values must be strictly increasing");
    }
    if (folds < 2 || folds > n) throw std::invalid_argument("TuningGrid: need 2 <= folds <= n");
  }
};

struct CvResult {
  double best_lambda = 0.0;
  std::vector<double> curve;  // mean held-out criterion per grid value
};

// A fitter factory binds a training set once (so it can cache Gram matrices)
// and returns the map lambda -> estimate.
using Fitter = std::function<Parameter(double)>;
using FitterFactory = std::function<Fitter(const Dataset&)>;

// Smallest penalty that zeroes the estimate: dual norm of the gradient at 0.
inline double lambda_max(const Dataset& d, const Regularizer& reg) {
  Parameter zero = d.vector_shape() ? Parameter::zero_vector(d.d1)
                                    : Parameter::zero_matrix(d.d1, d.d2);
  return reg.dual_norm(glm_gradient(d, zero));
}

// 50 log-spaced values spanning [1e-3, 1] * lambda_max.
inline std::vector<double> default_lambda_grid(double lmax, int count = 50) {
  if (lmax <= 0 || count < 1) throw std::invalid_argument("default_lambda_grid: bad inputs");
  std::vector<double> grid(count);
  if (count == 1) {
    grid[0] = lmax;
    return grid;
  }
  for (int i = 0; i < count; ++i)
    grid[i] = lmax * std::pow(10.0, -3.0 + 3.0 * i / (count - 1.0));
  return grid;
}

// Seeded disjoint fold assignment covering every index.
inline std::vector<int> cv_fold_ids(Eigen::Index n, int folds, std::uint64_t seed) {
  if (folds < 2 || folds > n) throw std::invalid_argument("cv_fold_ids: need 2 <= folds <= n");
  std::vector<Eigen::Index> idx(n);
  for (Eigen::Index i = 0; i < n; ++i) idx[i] = i;
  auto rng = substream(seed, 0xcf01);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Eigen::Index> pick(0, i);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<int> fold(n);
  for (Eigen::Index i = 0; i < n; ++i) fold[idx[i]] = static_cast<int>(i % folds);
  return fold;
}

namespace detail {

inline Dataset subset_rows(const Dataset& d, const std::vector<Eigen::Index>& rows) {
  Dataset out;
  out.covariates.resize(static_cast<Eigen::Index>(rows.size()), d.dim());
  out.responses.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.covariates.row(static_cast<Eigen::Index>(i)) = d.covariates.row(rows[i]);
    out.responses[static_cast<Eigen::Index>(i)] = d.responses[rows[i]];
  }
  out.d1 = d.d1;
  out.d2 = d.d2;
  out.family = d.family;
  out.weight = d.weight;
  out.validate();
  return out;
}

inline double heldout_criterion(const Dataset& test, const Parameter& theta,
                                CvCriterion criterion) {
  if (criterion == CvCriterion::Deviance) return glm_loss(test, theta);
  Eigen::VectorXd eta = test.covariates * theta.vec();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < test.n(); ++i) {
    double r = test.responses[i] - test.family.mean(eta[i]);
    acc += r * r;
  }
  return acc / static_cast<double>(test.n());
}

}  // namespace detail

// Ties broken toward the larger penalty (sparser model).
inline CvResult cv_select(const Dataset& d, const FitterFactory& make_fitter,
                          const TuningGrid& grid, std::uint64_t seed) {
  grid.validate(d.n());
  std::vector<int> fold = cv_fold_ids(d.n(), grid.folds, seed);
  std::vector<double> curve(grid.values.size(), 0.0);
  for (int f = 0; f < grid.folds; ++f) {
    std::vector<Eigen::Index> train_rows, test_rows;
    for (Eigen::Index i = 0; i < d.n(); ++i)
      (fold[i] == f ? test_rows : train_rows).push_back(i);
    Dataset train = detail::subset_rows(d, train_rows);
    Dataset test = detail::subset_rows(d, test_rows);
    Fitter fit = make_fitter(train);
    for (std::size_t j = 0; j < grid.values.size(); ++j)
      curve[j] += detail::heldout_criterion(test, fit(grid.values[j]), grid.criterion);
  }
  for (double& c : curve) {
    c /= grid.folds;
    if (!std::isfinite(c)) throw std::runtime_error("cv_select: non-finite fold criterion");
  }
  CvResult out;
  out.curve = curve;
  std::size_t best = 0;
  for (std::size_t j = 1; j < curve.size(); ++j)
    if (curve[j] <= curve[best]) best = j;  // equal scores move to the larger lambda
  out.best_lambda = grid.values[best];
  return out;
}

// Penalized single-study fitter with a per-training-set Gram cache and warm
// starts along the lambda path.
inline FitterFactory single_fitter_factory(const Regularizer& reg,
                                           const SolverOptions& opts = {}) {
  return [reg, opts](const Dataset& train) -> Fitter {
    if (reg.kind == RegKind::L1) {
      if (train.family.kind != LossKind::SquaredIdentity || !train.vector_shape())
        throw std::invalid_argument("single_fitter_factory: L1 needs squared loss vectors");
      auto gram = std::make_shared<LassoGram>(
          LassoGram{train.covariates.transpose() * train.covariates,
                    train.covariates.transpose() * train.responses});
      auto warm = std::make_shared<Eigen::VectorXd>(Eigen::VectorXd::Zero(train.dim()));
      double n = static_cast<double>(train.n());
      return [gram, warm, n, opts](double lambda) {
        LassoResult res = gram->solve(2.0 * n * lambda, *warm, opts);
        *warm = res.coef;
        return Parameter::vector(res.coef);
      };
    }
    auto train_copy = std::make_shared<Dataset>(train);
    auto warm = std::make_shared<Parameter>(Parameter::zero_matrix(train.d1, train.d2));
    return [train_copy, warm, opts](double lambda) {
      GlmObjective obj(*train_copy);
      NuclearFitResult res = quad_admm_nuclear(obj, lambda, obj.zero(), *warm, opts);
      *warm = res.estimate;
      return res.estimate;
    };
  };
}

enum class LambdaPolicy { Cv, Stronger, HalfVanilla };

// "stronger" adds a quarter of the vanilla penalty to the pooled CV choice;
// "half-vanilla" ignores the pooled CV value entirely.
inline double apply_policy(LambdaPolicy policy, double pooled_cv, double vanilla_cv) {
  switch (policy) {
    case LambdaPolicy::Cv:
      return pooled_cv;
    case LambdaPolicy::Stronger:
      return pooled_cv + 0.25 * vanilla_cv;
    case LambdaPolicy::HalfVanilla:
      return 0.5 * vanilla_cv;
  }
  throw std::invalid_argument("apply_policy: unknown policy");
}

struct GridChoice {
  double lambda_q = 0.0;
  double tau = 0.0;
  double score = 0.0;
};

// Exhaustive search over the (lambda_Q, tau) grid; ties prefer the larger tau,
// then the larger lambda_Q.
inline GridChoice grid_select(const std::vector<double>& lambda_q_grid,
                              const std::vector<double>& tau_grid,
                              const std::function<double(double, double)>& score) {
  if (lambda_q_grid.empty() || tau_grid.empty())
    throw std::invalid_argument("grid_select: empty grid");
  GridChoice best;
  bool first = true;
  for (double lq : lambda_q_grid) {
    for (double tau : tau_grid) {
      double s = score(lq, tau);
      bool better = first || s < best.score ||
                    (s == best.score &&
                     (tau > best.tau || (tau == best.tau && lq > best.lambda_q)));
      if (better) {
        best = {lq, tau, s};
        first = false;
      }
    }
  }
  return best;
}

}  // namespace tlmest
