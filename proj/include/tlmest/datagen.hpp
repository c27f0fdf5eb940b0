#pragma once

#include <Eigen/QR>
#include <vector>

#include "tlmest/core.hpp"
#include "tlmest/rng.hpp"

// Seeded simulation designs: Gaussian and Wishart-type covariate ensembles,
// GOE-perturbed almost-homogeneous covariances, sparse and low-rank
// coefficient recipes, and the closed-form population pooled parameter.

namespace tlmest {

enum class Design { HomoIdentity, HeteroWishart, GoePerturbed };
enum class CoeffFamily { L0Sparse, L1Laplace, HSweepLaplace, LowRankHaar };

struct ScenarioConfig {
  Design design = Design::HomoIdentity;
  CoeffFamily coeff_family = CoeffFamily::L0Sparse;
  Eigen::Index p = 100;      // vector dimension
  Eigen::Index d1 = 0, d2 = 0, r = 1;  // matrix shape and rank
  Eigen::Index s = 4;        // target support size
  std::vector<Eigen::Index> sample_sizes;  // K+1 entries, index 0 = target
  int informative_count = 0;               // first |A| sources are informative
  double contrast_level = 0.0;             // h, used by the h-sweep recipe
  double goe_c = 0.2;
  LossKind family = LossKind::SquaredIdentity;
  std::uint64_t seed = 1;

  std::size_t sources() const { return sample_sizes.empty() ? 0 : sample_sizes.size() - 1; }

  void validate() const {
    if (sample_sizes.empty()) throw std::invalid_argument("ScenarioConfig: no sample sizes");
    for (Eigen::Index n : sample_sizes)
      if (n < 1) throw std::invalid_argument("ScenarioConfig: sizes must be >= 1");
    if (informative_count < 0 || static_cast<std::size_t>(informative_count) > sources())
      throw std::invalid_argument("ScenarioConfig: informative_count out of range");
    if (coeff_family == CoeffFamily::LowRankHaar) {
      if (d1 < 1 || d2 < 1 || r < 1 || r > std::min(d1, d2))
        throw std::invalid_argument("ScenarioConfig: need 1 <= r <= min(d1, d2)");
    } else {
      if (p < 1 || s < 0 || s > p) throw std::invalid_argument("ScenarioConfig: need s <= p");
    }
    if (design == Design::GoePerturbed && sources() != 2)
      throw std::invalid_argument("ScenarioConfig: GOE design uses exactly two sources");
    if (contrast_level < 0) throw std::invalid_argument("ScenarioConfig: h must be >= 0");
    if (goe_c < 0) throw std::invalid_argument("ScenarioConfig: goe_c must be >= 0");
  }
};

struct GeneratedStudy {
  std::vector<Dataset> datasets;      // K+1 studies, index 0 = target
  std::vector<Parameter> true_coeffs;
  std::vector<bool> true_informative;               // per source, from the recipe
  std::vector<Eigen::MatrixXd> covariances;         // population Sigma_k (vector designs)
};

namespace detail {

// rng stream tags so each random ingredient has its own substream
inline constexpr std::uint64_t kTagDesign = 101, kTagCoeff = 102, kTagX = 103, kTagNoise = 104,
                               kTagGoe = 105, kTagShared = 106;

inline Eigen::MatrixXd gauss_matrix(std::mt19937_64& rng, Eigen::Index rows,
                                    Eigen::Index cols) {
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = gauss(rng);
  return m;
}

// Haar column-orthogonal matrix: QR of a Gaussian matrix with the R diagonal
// signs folded into Q.
inline Eigen::MatrixXd haar_orthonormal(std::mt19937_64& rng, Eigen::Index n,
                                        Eigen::Index k) {
  Eigen::MatrixXd G = gauss_matrix(rng, n, k);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = Eigen::MatrixXd(qr.householderQ()).leftCols(k);
  Eigen::MatrixXd R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < k; ++j)
    if (R(j, j) < 0) Q.col(j) = -Q.col(j);
  return Q;
}

inline Eigen::VectorXd unit_vector(std::mt19937_64& rng, Eigen::Index n) {
  Eigen::VectorXd v = gauss_matrix(rng, n, 1);
  return v / v.norm();
}

// Sample without replacement: a size-m subset of {0, ..., p-1}.
inline std::vector<Eigen::Index> random_subset(std::mt19937_64& rng, Eigen::Index p,
                                               Eigen::Index m) {
  std::vector<Eigen::Index> idx(p);
  for (Eigen::Index i = 0; i < p; ++i) idx[i] = i;
  for (Eigen::Index i = 0; i < m; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, p - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(m);
  return idx;
}

inline Eigen::MatrixXd chol_factor(const Eigen::MatrixXd& sigma, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error(std::string(what) + ": covariance not positive definite");
  return llt.matrixL();
}

}  // namespace detail

// Symmetric matrix with diagonal N(0, 2/p) and off-diagonal N(0, 1/p).
inline Eigen::MatrixXd gen_goe(Eigen::Index p, std::uint64_t seed) {
  if (p < 1) throw std::invalid_argument("gen_goe: p must be >= 1");
  auto rng = substream(seed, detail::kTagGoe);
  std::normal_distribution<double> diag(0.0, std::sqrt(2.0 / static_cast<double>(p)));
  std::normal_distribution<double> off(0.0, std::sqrt(1.0 / static_cast<double>(p)));
  Eigen::MatrixXd Z(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    Z(i, i) = diag(rng);
    for (Eigen::Index j = i + 1; j < p; ++j) Z(i, j) = Z(j, i) = off(rng);
  }
  return Z;
}

inline GeneratedStudy gen_linear_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  if (cfg.coeff_family == CoeffFamily::LowRankHaar)
    throw std::invalid_argument("gen_linear_scenario: use gen_trace_scenario for LowRankHaar");
  if (cfg.family != LossKind::SquaredIdentity)
    throw std::invalid_argument("gen_linear_scenario: linear responses only");
  const Eigen::Index p = cfg.p;
  const std::size_t K = cfg.sources();
  GeneratedStudy out;

  // target coefficient
  Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(p);
  double base = cfg.coeff_family == CoeffFamily::HSweepLaplace ? 0.5 : 0.4;
  theta0.head(cfg.s).setConstant(base);
  out.true_coeffs.push_back(Parameter::vector(theta0));

  // per-source coefficients from the recipe
  for (std::size_t k = 1; k <= K; ++k) {
    auto rng = substream(cfg.seed, detail::kTagCoeff, k);
    bool informative = static_cast<int>(k) <= cfg.informative_count;
    Eigen::VectorXd theta = theta0;
    if (cfg.coeff_family == CoeffFamily::L0Sparse) {
      Eigen::Index m = informative ? 3 : 2 * cfg.s;
      double offset = informative ? -0.4 : -0.6;
      for (Eigen::Index j : detail::random_subset(rng, p, std::min(m, p)))
        if (j != 0) theta[j] += offset;
      theta[0] = -0.4;
    } else if (cfg.coeff_family == CoeffFamily::L1Laplace) {
      double scale = informative ? 0.04 : 0.2;
      for (Eigen::Index j : detail::random_subset(rng, p, p / 2))
        theta[j] += laplace_draw(rng, scale);
      theta[0] = -0.4;
    } else {  // HSweepLaplace
      double scale = 0.06 * cfg.contrast_level;
      for (Eigen::Index j : detail::random_subset(rng, p, p / 2))
        if (j != 0) theta[j] += scale > 0 ? laplace_draw(rng, scale) : 0.0;
      theta[0] = std::max(0.5 - 0.1 * static_cast<double>(cfg.s), -1.0);
    }
    out.true_coeffs.push_back(Parameter::vector(theta));
    out.true_informative.push_back(informative);
  }

  // population covariances
  Eigen::MatrixXd Z;
  if (cfg.design == Design::GoePerturbed) Z = gen_goe(p, cfg.seed);
  for (std::size_t k = 0; k <= K; ++k) {
    Eigen::MatrixXd sigma;
    if (cfg.design == Design::HomoIdentity) {
      sigma = Eigen::MatrixXd::Identity(p, p);
    } else if (cfg.design == Design::HeteroWishart) {
      auto rng = substream(cfg.seed, detail::kTagDesign, k);
      Eigen::MatrixXd lam = detail::gauss_matrix(rng, 3 * p / 2, p);
      sigma = 2.0 * lam.transpose() * lam / (3.0 * static_cast<double>(p));
    } else {
      sigma = Eigen::MatrixXd::Identity(p, p);
      if (k == 1) sigma += cfg.goe_c * Z;
      if (k == 2) sigma -= cfg.goe_c * Z;
    }
    out.covariances.push_back(sigma);
  }

  // draw covariates and responses
  for (std::size_t k = 0; k <= K; ++k) {
    const Eigen::Index n = cfg.sample_sizes[k];
    auto xrng = substream(cfg.seed, detail::kTagX, k);
    auto erng = substream(cfg.seed, detail::kTagNoise, k);
    Eigen::MatrixXd X = detail::gauss_matrix(xrng, n, p);
    if (cfg.design != Design::HomoIdentity) {
      Eigen::MatrixXd L = detail::chol_factor(out.covariances[k], "gen_linear_scenario");
      X = X * L.transpose();
    }
    Eigen::VectorXd y = X * out.true_coeffs[k].vec();
    std::normal_distribution<double> gauss;
    for (Eigen::Index i = 0; i < n; ++i) y[i] += gauss(erng);
    out.datasets.push_back(Dataset::from_vectors(std::move(X), std::move(y)));
  }
  return out;
}

inline GeneratedStudy gen_trace_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  if (cfg.coeff_family != CoeffFamily::LowRankHaar)
    throw std::invalid_argument("gen_trace_scenario: LowRankHaar coefficients only");
  const Eigen::Index d1 = cfg.d1, d2 = cfg.d2, r = cfg.r;
  const std::size_t K = cfg.sources();
  const double cov_scale = cfg.family == LossKind::SquaredIdentity ? 1.0 : 2.0 / 3.0;
  GeneratedStudy out;

  // theta*_0 = U0 V0^T with unit singular values; shared rank-one bump u v^T
  auto crng = substream(cfg.seed, detail::kTagShared);
  Eigen::MatrixXd theta0 = detail::haar_orthonormal(crng, d1, r) *
                           detail::haar_orthonormal(crng, d2, r).transpose();
  Eigen::MatrixXd bump =
      detail::unit_vector(crng, d1) * detail::unit_vector(crng, d2).transpose();
  out.true_coeffs.push_back(Parameter::matrix(theta0));
  for (std::size_t k = 1; k <= K; ++k) {
    auto rng = substream(cfg.seed, detail::kTagCoeff, k);
    bool informative = static_cast<int>(k) <= cfg.informative_count;
    Eigen::MatrixXd low = detail::haar_orthonormal(rng, d1, 2 * r) *
                          detail::haar_orthonormal(rng, d2, 2 * r).transpose();
    double scale = informative ? 1.0 / static_cast<double>(r) : 1.0;
    out.true_coeffs.push_back(Parameter::matrix(theta0 + scale * low + bump));
    out.true_informative.push_back(informative);
  }

  for (std::size_t k = 0; k <= K; ++k) {
    const Eigen::Index n = cfg.sample_sizes[k];
    auto drng = substream(cfg.seed, detail::kTagDesign, k);
    Eigen::MatrixXd lam = detail::gauss_matrix(drng, 3 * d1 / 2, d1);
    Eigen::MatrixXd omg = detail::gauss_matrix(drng, 3 * d2 / 2, d2);
    Eigen::MatrixXd s1 = cov_scale * lam.transpose() * lam / static_cast<double>(d1);
    Eigen::MatrixXd s2 = cov_scale * omg.transpose() * omg / static_cast<double>(d2);
    Eigen::MatrixXd l1 = detail::chol_factor(s1, "gen_trace_scenario");
    Eigen::MatrixXd l2 = detail::chol_factor(s2, "gen_trace_scenario");

    auto xrng = substream(cfg.seed, detail::kTagX, k);
    auto erng = substream(cfg.seed, detail::kTagNoise, k);
    std::vector<Eigen::MatrixXd> Xs;
    Eigen::VectorXd y(n);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif;
    LossFamily fam{cfg.family};
    const Eigen::MatrixXd& truth = out.true_coeffs[k].values();
    for (Eigen::Index i = 0; i < n; ++i) {
      Xs.push_back(l1 * detail::gauss_matrix(xrng, d1, d2) * l2.transpose());
      double eta = (Xs.back().array() * truth.array()).sum();
      y[i] = cfg.family == LossKind::SquaredIdentity
                 ? eta + gauss(erng)
                 : (unif(erng) < fam.mean(eta) ? 1.0 : 0.0);
    }
    out.datasets.push_back(Dataset::from_matrices(Xs, std::move(y), fam));
  }
  return out;
}

// theta*_P = (sum n_k Sigma_k)^{-1} sum n_k Sigma_k theta*_k, the population
// minimizer of the weighted expected squared loss.
inline Parameter population_pooled_linear(const std::vector<Eigen::MatrixXd>& sigmas,
                                          const std::vector<Parameter>& thetas,
                                          const std::vector<Eigen::Index>& sizes) {
  if (sigmas.empty() || sigmas.size() != thetas.size() || sigmas.size() != sizes.size())
    throw std::invalid_argument("population_pooled_linear: length mismatch");
  const Eigen::Index p = sigmas[0].rows();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  for (std::size_t k = 0; k < sigmas.size(); ++k) {
    if (sigmas[k].rows() != p || sigmas[k].cols() != p || thetas[k].size() != p)
      throw std::invalid_argument("population_pooled_linear: dimension mismatch");
    double n = static_cast<double>(sizes[k]);
    A += n * sigmas[k];
    b += n * sigmas[k] * thetas[k].vec();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("population_pooled_linear: singular aggregate covariance");
  return Parameter::vector(llt.solve(b));
}

}  // namespace tlmest
