#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include "tlmest/datagen.hpp"

using namespace tlmest;

namespace {

ScenarioConfig small_linear_config() {
  ScenarioConfig cfg;
  cfg.design = Design::HomoIdentity;
  cfg.coeff_family = CoeffFamily::L0Sparse;
  cfg.p = 100;
  cfg.s = 4;
  cfg.sample_sizes = {50, 50, 50, 50};
  cfg.informative_count = 2;
  cfg.seed = 7;
  return cfg;
}

Eigen::Index l0_norm(const Eigen::VectorXd& v) {
  Eigen::Index c = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] != 0.0) ++c;
  return c;
}

}  // namespace

TEST_CASE("GOE matrix is exactly symmetric with the right entry moments") {
  const Eigen::Index p = 500;
  Eigen::MatrixXd Z = gen_goe(p, 3);
  REQUIRE((Z - Z.transpose()).norm() == 0.0);
  double dvar = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) dvar += Z(i, i) * Z(i, i);
  dvar /= static_cast<double>(p);
  REQUIRE(dvar > 2.0 / p * 0.65);
  REQUIRE(dvar < 2.0 / p * 1.35);
  double ovar = 0.0;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = i + 1; j < p; ++j) ovar += Z(i, j) * Z(i, j);
  ovar /= static_cast<double>(p * (p - 1) / 2);
  REQUIRE(ovar > 1.0 / p * 0.9);
  REQUIRE(ovar < 1.0 / p * 1.1);
  Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Z).eigenvalues();
  REQUIRE(eig.cwiseAbs().maxCoeff() <= 2.5);
  REQUIRE((gen_goe(p, 3) - Z).norm() == 0.0);   // seeded determinism
  REQUIRE((gen_goe(p, 4) - Z).norm() > 0.0);
}

TEST_CASE("homogeneous design rows have near-identity covariance") {
  ScenarioConfig cfg = small_linear_config();
  cfg.p = 20;
  cfg.s = 2;
  cfg.sample_sizes = {100000};
  cfg.informative_count = 0;
  GeneratedStudy study = gen_linear_scenario(cfg);
  const Eigen::MatrixXd& X = study.datasets[0].covariates;
  Eigen::MatrixXd cov = X.transpose() * X / static_cast<double>(X.rows());
  REQUIRE((cov - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("l0 coefficient recipe matches the printed construction") {
  ScenarioConfig cfg = small_linear_config();
  GeneratedStudy study = gen_linear_scenario(cfg);
  const Eigen::VectorXd theta0 = study.true_coeffs[0].vec();
  REQUIRE(l0_norm(theta0) == cfg.s);
  for (Eigen::Index j = 0; j < cfg.s; ++j) REQUIRE(theta0[j] == 0.4);
  REQUIRE(study.true_informative == std::vector<bool>{true, true, false});
  for (std::size_t k = 1; k <= 3; ++k) {
    Eigen::VectorXd delta = study.true_coeffs[k].vec() - theta0;
    REQUIRE(study.true_coeffs[k].vec()[0] == -0.4);
    if (study.true_informative[k - 1])
      REQUIRE(l0_norm(delta) <= 4);  // three offsets (minus possible index-0 hit) plus j=1
    else
      REQUIRE(l0_norm(delta) >= 2 * cfg.s - 1);
  }
}

TEST_CASE("l1 Laplace recipe perturbs half the coordinates") {
  ScenarioConfig cfg = small_linear_config();
  cfg.coeff_family = CoeffFamily::L1Laplace;
  GeneratedStudy study = gen_linear_scenario(cfg);
  for (std::size_t k = 1; k <= 3; ++k) {
    Eigen::VectorXd delta = study.true_coeffs[k].vec() - study.true_coeffs[0].vec();
    REQUIRE(study.true_coeffs[k].vec()[0] == -0.4);
    REQUIRE(l0_norm(delta) <= cfg.p / 2 + 1);
    REQUIRE(l0_norm(delta) >= cfg.p / 2 - 1);
  }
  // non-informative contrasts are drawn at a five-times-larger scale
  double inf_l1 = (study.true_coeffs[1].vec() - study.true_coeffs[0].vec()).lpNorm<1>();
  double non_l1 = (study.true_coeffs[3].vec() - study.true_coeffs[0].vec()).lpNorm<1>();
  REQUIRE(non_l1 > inf_l1);
}

TEST_CASE("h-sweep recipe scales contrasts with h") {
  ScenarioConfig cfg = small_linear_config();
  cfg.coeff_family = CoeffFamily::HSweepLaplace;
  cfg.s = 3;  // 0.03 p
  cfg.informative_count = 3;
  cfg.contrast_level = 0.1;
  GeneratedStudy lo = gen_linear_scenario(cfg);
  cfg.contrast_level = 10.0;
  GeneratedStudy hi = gen_linear_scenario(cfg);
  REQUIRE(lo.true_coeffs[0].vec().head(3).isConstant(0.5));
  REQUIRE(lo.true_coeffs[1].vec()[0] == Catch::Approx(std::max(0.5 - 0.1 * 3, -1.0)));
  double lo_c = (lo.true_coeffs[1].vec() - lo.true_coeffs[0].vec()).lpNorm<1>();
  double hi_c = (hi.true_coeffs[1].vec() - hi.true_coeffs[0].vec()).lpNorm<1>();
  REQUIRE(hi_c > 5.0 * lo_c);
}

TEST_CASE("heterogeneous covariances are positive definite") {
  ScenarioConfig cfg = small_linear_config();
  cfg.design = Design::HeteroWishart;
  cfg.p = 40;
  cfg.sample_sizes = {30, 30};
  cfg.informative_count = 1;
  GeneratedStudy study = gen_linear_scenario(cfg);
  for (const Eigen::MatrixXd& sigma : study.covariances) {
    Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sigma).eigenvalues();
    REQUIRE(eig.minCoeff() > 0.0);
  }
  // two studies differ in their design draw
  REQUIRE((study.covariances[0] - study.covariances[1]).norm() > 1e-3);
}

TEST_CASE("linear scenarios are bit-identical under the same seed") {
  ScenarioConfig cfg = small_linear_config();
  cfg.design = Design::HeteroWishart;
  GeneratedStudy a = gen_linear_scenario(cfg);
  GeneratedStudy b = gen_linear_scenario(cfg);
  for (std::size_t k = 0; k < a.datasets.size(); ++k) {
    REQUIRE((a.datasets[k].covariates - b.datasets[k].covariates).norm() == 0.0);
    REQUIRE((a.datasets[k].responses - b.datasets[k].responses).norm() == 0.0);
    REQUIRE((a.true_coeffs[k].vec() - b.true_coeffs[k].vec()).norm() == 0.0);
  }
  cfg.seed += 1;
  GeneratedStudy c = gen_linear_scenario(cfg);
  REQUIRE((a.datasets[0].responses - c.datasets[0].responses).norm() > 0.0);
}

TEST_CASE("scenario config validation") {
  ScenarioConfig cfg = small_linear_config();
  cfg.sample_sizes.clear();
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_linear_config();
  cfg.informative_count = 9;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_linear_config();
  cfg.s = cfg.p + 1;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_linear_config();
  cfg.design = Design::GoePerturbed;  // needs exactly two sources
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("trace scenario produces exact-rank Haar coefficients") {
  ScenarioConfig cfg;
  cfg.coeff_family = CoeffFamily::LowRankHaar;
  cfg.d1 = 12;
  cfg.d2 = 10;
  cfg.r = 3;
  cfg.sample_sizes = {40, 40, 40};
  cfg.informative_count = 1;
  cfg.seed = 11;
  GeneratedStudy study = gen_trace_scenario(cfg);
  Eigen::VectorXd sv = detail::singular_values(study.true_coeffs[0].values());
  for (Eigen::Index i = 0; i < cfg.r; ++i) REQUIRE(sv[i] == Catch::Approx(1.0).margin(1e-10));
  for (Eigen::Index i = cfg.r; i < sv.size(); ++i) REQUIRE(sv[i] < 1e-10);
  REQUIRE(study.true_informative == std::vector<bool>{true, false});
  // informative contrast is smaller by construction (low-rank part divided by r)
  double inf_n = (study.true_coeffs[1] - study.true_coeffs[0]).frobenius();
  double non_n = (study.true_coeffs[2] - study.true_coeffs[0]).frobenius();
  REQUIRE(inf_n < non_n);
  GeneratedStudy again = gen_trace_scenario(cfg);
  REQUIRE((again.datasets[0].covariates - study.datasets[0].covariates).norm() == 0.0);
}

TEST_CASE("logit trace responses are calibrated to the link") {
  ScenarioConfig cfg;
  cfg.coeff_family = CoeffFamily::LowRankHaar;
  cfg.family = LossKind::LogisticLogit;
  cfg.d1 = 4;
  cfg.d2 = 4;
  cfg.r = 2;
  cfg.sample_sizes = {10000};
  cfg.informative_count = 0;
  cfg.seed = 13;
  GeneratedStudy study = gen_trace_scenario(cfg);
  const Dataset& d = study.datasets[0];
  Eigen::VectorXd eta = d.covariates * study.true_coeffs[0].vec();
  LossFamily fam{LossKind::LogisticLogit};
  // bin eta and compare empirical frequencies with the link mean
  for (double lo : {-1.5, -0.5, 0.5}) {
    double hi = lo + 1.0;
    double sum_y = 0.0, sum_m = 0.0;
    int count = 0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      if (eta[i] >= lo && eta[i] < hi) {
        sum_y += d.responses[i];
        sum_m += fam.mean(eta[i]);
        ++count;
      }
    }
    REQUIRE(count > 200);
    REQUIRE(std::abs(sum_y / count - sum_m / count) < 0.05);
  }
}

TEST_CASE("population pooled parameter closed forms") {
  Eigen::MatrixXd I3 = Eigen::MatrixXd::Identity(3, 3);
  Parameter t = Parameter::vector(Eigen::Vector3d(1.0, -2.0, 0.5));
  Parameter same = population_pooled_linear({I3, I3}, {t, t}, {10, 30});
  REQUIRE((same.vec() - t.vec()).norm() < 1e-12);

  Parameter u = Parameter::vector(Eigen::Vector3d(0.0, 0.0, 0.0));
  Parameter avg = population_pooled_linear({I3, I3}, {t, u}, {10, 30});
  REQUIRE((avg.vec() - 0.25 * t.vec()).norm() < 1e-12);

  REQUIRE_THROWS_AS(population_pooled_linear({I3}, {t, u}, {10}), std::invalid_argument);
}

TEST_CASE("GOE perturbed designs break the pooled parameter; identical designs do not") {
  const Eigen::Index p = 500;
  const double c = 0.2, h = 0.5;
  Eigen::MatrixXd Z = gen_goe(p, 21);
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
  Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(p);
  theta0.head(20).setConstant(0.4);
  Eigen::VectorXd d1 = Eigen::VectorXd::Zero(p);
  d1[0] = h;  // delta_1 = -delta_2 = (h, 0, ..., 0)
  std::vector<Parameter> thetas = {Parameter::vector(theta0),
                                   Parameter::vector(theta0 - d1),
                                   Parameter::vector(theta0 + d1)};
  std::vector<Eigen::Index> ns = {100, 100, 100};
  Parameter homo = population_pooled_linear({I, I, I}, thetas, ns);
  Parameter goe = population_pooled_linear({I, I + c * Z, I - c * Z}, thetas, ns);
  double homo_err = (homo.vec() - theta0).lpNorm<1>();
  double goe_err = (goe.vec() - theta0).lpNorm<1>();
  REQUIRE(homo_err < 1e-10);  // the two contrasts cancel under equal designs
  REQUIRE(goe_err > 0.5);
  REQUIRE(goe_err >= 5.0 * homo_err);
}

TEST_CASE("hetero designs push the pooled parameter further than homo designs") {
  ScenarioConfig cfg;
  cfg.coeff_family = CoeffFamily::L0Sparse;
  cfg.p = 500;
  cfg.s = 20;
  cfg.sample_sizes = {500, 500, 500, 500, 500, 500};
  cfg.informative_count = 5;
  cfg.seed = 23;
  cfg.design = Design::HomoIdentity;
  GeneratedStudy homo = gen_linear_scenario(cfg);
  cfg.design = Design::HeteroWishart;
  GeneratedStudy hetero = gen_linear_scenario(cfg);
  std::vector<Eigen::Index> ns(cfg.sample_sizes.begin(), cfg.sample_sizes.end());
  Parameter ph = population_pooled_linear(homo.covariances, homo.true_coeffs, ns);
  Parameter pw = population_pooled_linear(hetero.covariances, hetero.true_coeffs, ns);
  double homo_err = (ph.vec() - homo.true_coeffs[0].vec()).lpNorm<1>();
  double hetero_err = (pw.vec() - hetero.true_coeffs[0].vec()).lpNorm<1>();
  REQUIRE(hetero_err >= 2.0 * homo_err);
}
