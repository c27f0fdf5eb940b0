#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "tlmest/selection.hpp"
#include "tlmest/tuning.hpp"

using namespace tlmest;

namespace {

Dataset noise_study(std::uint64_t seed, Eigen::Index n, Eigen::Index p,
                    const Eigen::VectorXd& truth, double sigma = 1.0) {
  auto rng = substream(seed, 900);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < n; ++i) X(i, j) = gauss(rng);
  Eigen::VectorXd y = X * truth;
  for (Eigen::Index i = 0; i < n; ++i) y[i] += sigma * gauss(rng);
  return Dataset::from_vectors(std::move(X), std::move(y));
}

Eigen::Index l0_norm(const Eigen::VectorXd& v) {
  Eigen::Index c = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] != 0.0) ++c;
  return c;
}

}  // namespace

TEST_CASE("fold assignment is a seeded disjoint cover") {
  std::vector<int> fold = cv_fold_ids(53, 5, 17);
  REQUIRE(fold.size() == 53);
  std::vector<int> counts(5, 0);
  for (int f : fold) {
    REQUIRE(f >= 0);
    REQUIRE(f < 5);
    ++counts[f];
  }
  for (int c : counts) REQUIRE(c >= 10);  // balanced partition of 53 into 5
  REQUIRE(cv_fold_ids(53, 5, 17) == fold);
  REQUIRE(cv_fold_ids(53, 5, 18) != fold);
  REQUIRE_THROWS_AS(cv_fold_ids(4, 5, 0), std::invalid_argument);
}

TEST_CASE("lambda_max zeroes the fit exactly at the boundary") {
  Eigen::VectorXd truth = Eigen::VectorXd::Zero(12);
  truth[0] = 1.0;
  Dataset d = noise_study(1, 60, 12, truth, 0.5);
  Regularizer l1{RegKind::L1};
  double lmax = lambda_max(d, l1);
  REQUIRE(fit_single(d, l1, lmax * 1.0001).vec().norm() == 0.0);
  REQUIRE(fit_single(d, l1, lmax * 0.9).vec().norm() > 0.0);
}

TEST_CASE("default grid spans three decades below lambda_max") {
  std::vector<double> grid = default_lambda_grid(2.0);
  REQUIRE(grid.size() == 50);
  REQUIRE(grid.front() == Catch::Approx(2e-3));
  REQUIRE(grid.back() == Catch::Approx(2.0));
  for (std::size_t i = 1; i < grid.size(); ++i) REQUIRE(grid[i] > grid[i - 1]);
  REQUIRE_THROWS_AS(default_lambda_grid(-1.0), std::invalid_argument);
}

TEST_CASE("cv with a singleton grid returns that value") {
  Eigen::VectorXd truth = Eigen::VectorXd::Zero(8);
  Dataset d = noise_study(2, 40, 8, truth);
  TuningGrid grid;
  grid.values = {0.3};
  CvResult res = cv_select(d, single_fitter_factory(Regularizer{RegKind::L1}), grid, 5);
  REQUIRE(res.best_lambda == 0.3);
  REQUIRE(res.curve.size() == 1);
  REQUIRE(std::isfinite(res.curve[0]));
}

TEST_CASE("cv is deterministic given the seed") {
  Eigen::VectorXd truth = Eigen::VectorXd::Zero(10);
  truth.head(2).setConstant(0.8);
  Dataset d = noise_study(3, 50, 10, truth);
  TuningGrid grid;
  grid.values = default_lambda_grid(lambda_max(d, Regularizer{RegKind::L1}), 20);
  FitterFactory factory = single_fitter_factory(Regularizer{RegKind::L1});
  CvResult a = cv_select(d, factory, grid, 9);
  CvResult b = cv_select(d, factory, grid, 9);
  REQUIRE(a.best_lambda == b.best_lambda);
  REQUIRE(a.curve == b.curve);
}

TEST_CASE("cv on pure noise keeps the selected model very sparse") {
  const Eigen::Index p = 40, n = 100;
  Regularizer l1{RegKind::L1};
  double total_support = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    Dataset d = noise_study(100 + seed, n, p, Eigen::VectorXd::Zero(p));
    TuningGrid grid;
    grid.values = default_lambda_grid(lambda_max(d, l1), 30);
    CvResult res = cv_select(d, single_fitter_factory(l1), grid, seed);
    total_support += static_cast<double>(l0_norm(fit_single(d, l1, res.best_lambda).vec()));
  }
  REQUIRE(total_support / 20.0 <= 0.05 * static_cast<double>(p));
}

TEST_CASE("cv recovers a sensible penalty for a sparse signal") {
  Eigen::VectorXd truth = Eigen::VectorXd::Zero(30);
  truth.head(3).setConstant(1.0);
  Dataset d = noise_study(4, 120, 30, truth, 0.5);
  Regularizer l1{RegKind::L1};
  TuningGrid grid;
  grid.values = default_lambda_grid(lambda_max(d, l1), 30);
  CvResult res = cv_select(d, single_fitter_factory(l1), grid, 7);
  Parameter est = fit_single(d, l1, res.best_lambda);
  REQUIRE((est.vec() - truth).norm() < 0.5);
  // deviance criterion agrees closely for squared loss
  grid.criterion = CvCriterion::Deviance;
  CvResult dev = cv_select(d, single_fitter_factory(l1), grid, 7);
  Parameter dest = fit_single(d, l1, dev.best_lambda);
  REQUIRE((dest.vec() - truth).norm() < 0.5);
}

TEST_CASE("grid validation rejects malformed grids") {
  Dataset d = noise_study(5, 20, 4, Eigen::VectorXd::Zero(4));
  TuningGrid grid;
  REQUIRE_THROWS_AS(grid.validate(d.n()), std::invalid_argument);  // empty
  grid.values = {0.2, 0.1};
  REQUIRE_THROWS_AS(grid.validate(d.n()), std::invalid_argument);  // not increasing
  grid.values = {-0.1, 0.2};
  REQUIRE_THROWS_AS(grid.validate(d.n()), std::invalid_argument);  // not positive
  grid.values = {0.1, 0.2};
  grid.folds = 1;
  REQUIRE_THROWS_AS(grid.validate(d.n()), std::invalid_argument);
}

TEST_CASE("lambda policies") {
  REQUIRE(apply_policy(LambdaPolicy::Cv, 0.3, 0.8) == 0.3);
  REQUIRE(apply_policy(LambdaPolicy::Stronger, 0.3, 0.8) == Catch::Approx(0.5));
  REQUIRE(apply_policy(LambdaPolicy::HalfVanilla, 0.3, 0.8) == Catch::Approx(0.4));
}

TEST_CASE("grid_select ties prefer larger tau then larger lambda_q") {
  GridChoice single = grid_select({0.2}, {1.0}, [](double, double) { return 1.0; });
  REQUIRE(single.lambda_q == 0.2);
  REQUIRE(single.tau == 1.0);
  GridChoice flat =
      grid_select({0.1, 0.2, 0.3}, {1.0, 2.0}, [](double, double) { return 5.0; });
  REQUIRE(flat.tau == 2.0);
  REQUIRE(flat.lambda_q == 0.3);
  GridChoice planted = grid_select({0.1, 0.2}, {1.0, 2.0}, [](double lq, double tau) {
    return std::abs(lq - 0.2) + std::abs(tau - 1.0);
  });
  REQUIRE(planted.lambda_q == 0.2);
  REQUIRE(planted.tau == 1.0);
  REQUIRE_THROWS_AS(grid_select({}, {1.0}, [](double, double) { return 0.0; }),
                    std::invalid_argument);
}

TEST_CASE("grid_select picks no clustering when all sources are adversarial") {
  auto make = [&](std::uint64_t seed, const Eigen::VectorXd& truth) {
    return noise_study(seed, 80, 15, truth, 0.5);
  };
  Eigen::VectorXd t0 = Eigen::VectorXd::Zero(15);
  t0.head(3).setConstant(0.8);
  Eigen::VectorXd adv1 = -t0, adv2 = 3.0 * t0;
  std::vector<Dataset> studies = {make(200, t0), make(201, adv1), make(202, adv2)};
  Eigen::VectorXd truth = t0;
  auto score = [&](double lq, double tau) {
    SelectionConfig cfg;
    cfg.lambda_pool = 0.1;
    cfg.lambda_q = {lq, lq};
    cfg.tau = tau;
    SelectionFit fit = dc_truncated_sparse(studies, cfg);
    return (fit.primal.vec() - truth).norm();
  };
  GridChoice best = grid_select({1e-4, 0.5, 2.0}, {5.0}, score);
  REQUIRE(best.lambda_q == 1e-4);
}
