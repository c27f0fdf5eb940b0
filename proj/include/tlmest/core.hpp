#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Domain types shared by every solver: coefficient objects that are either
// sparse vectors or low-rank matrices, per-study datasets, norm regularizers
// with their duals and proximal maps, and GLM loss families.

namespace tlmest {

inline constexpr const char* kVersion = "0.1.0";

// Hessians are materialized densely on vec coordinates; refuse anything that
// would allocate more than kMaxHessianDim^2 doubles.
inline constexpr int kMaxHessianDim = 4096;

class Parameter {
 public:
  Parameter() : values_(Eigen::MatrixXd::Zero(0, 1)), vector_shape_(true) {}

  static Parameter vector(Eigen::VectorXd v) {
    Parameter p;
    p.values_ = std::move(v);
    p.vector_shape_ = true;
    p.check_finite();
    return p;
  }

  static Parameter matrix(Eigen::MatrixXd m) {
    Parameter p;
    p.values_ = std::move(m);
    p.vector_shape_ = false;
    p.check_finite();
    return p;
  }

  static Parameter zero_vector(Eigen::Index p) { return vector(Eigen::VectorXd::Zero(p)); }
  static Parameter zero_matrix(Eigen::Index d1, Eigen::Index d2) {
    return matrix(Eigen::MatrixXd::Zero(d1, d2));
  }

  static Parameter like(const Parameter& other, Eigen::MatrixXd values) {
    if (values.rows() != other.rows() || values.cols() != other.cols())
      throw std::invalid_argument("Parameter::like: shape mismatch");
    Parameter p;
    p.values_ = std::move(values);
    p.vector_shape_ = other.vector_shape_;
    p.check_finite();
    return p;
  }

  bool is_vector() const { return vector_shape_; }
  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  Eigen::Index size() const { return values_.size(); }

  const Eigen::MatrixXd& values() const { return values_; }

  // Column-major flattening; the same convention as the vec-based Hessians.
  Eigen::Map<const Eigen::VectorXd> vec() const {
    return Eigen::Map<const Eigen::VectorXd>(values_.data(), values_.size());
  }

  bool same_shape(const Parameter& o) const {
    return vector_shape_ == o.vector_shape_ && rows() == o.rows() && cols() == o.cols();
  }

  Parameter operator+(const Parameter& o) const {
    require_same_shape(o);
    return like(*this, values_ + o.values_);
  }
  Parameter operator-(const Parameter& o) const {
    require_same_shape(o);
    return like(*this, values_ - o.values_);
  }
  Parameter operator*(double c) const { return like(*this, values_ * c); }

  double frobenius() const { return values_.norm(); }

  void require_same_shape(const Parameter& o) const {
    if (!same_shape(o)) throw std::invalid_argument("Parameter: shape mismatch");
  }

 private:
  void check_finite() const {
    if (!values_.allFinite()) throw std::invalid_argument("Parameter: non-finite entries");
  }

  Eigen::MatrixXd values_;
  bool vector_shape_;
};

enum class LossKind { SquaredIdentity, LogisticLogit };

struct LossFamily {
  LossKind kind = LossKind::SquaredIdentity;

  // Cumulant b and its first two derivatives. The logistic branch is written
  // to avoid overflow for large |x|.
  double cumulant(double x) const {
    if (kind == LossKind::SquaredIdentity) return 0.5 * x * x;
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  double mean(double x) const {  // b'
    if (kind == LossKind::SquaredIdentity) return x;
    return x > 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  double variance(double x) const {  // b''
    if (kind == LossKind::SquaredIdentity) return 1.0;
    double m = mean(x);
    return m * (1.0 - m);
  }
};

// One study: n_k observations with Parameter-shaped covariates stored as
// vec(X_i) rows, responses, a pooling weight alpha_k and the loss family.
struct Dataset {
  Eigen::MatrixXd covariates;  // n x (d1*d2), row i = vec(X_i)
  Eigen::VectorXd responses;
  Eigen::Index d1 = 0, d2 = 1;  // d2 == 1 means vector-shaped covariates
  double weight = 1.0;          // alpha_k
  LossFamily family;

  Eigen::Index n() const { return covariates.rows(); }
  Eigen::Index dim() const { return covariates.cols(); }
  bool vector_shape() const { return d2 == 1; }

  static Dataset from_vectors(Eigen::MatrixXd X, Eigen::VectorXd y,
                              LossFamily fam = {}, double alpha = 1.0) {
    Dataset d;
    d.d1 = X.cols();
    d.d2 = 1;
    d.covariates = std::move(X);
    d.responses = std::move(y);
    d.family = fam;
    d.weight = alpha;
    d.validate();
    return d;
  }

  static Dataset from_matrices(const std::vector<Eigen::MatrixXd>& Xs, Eigen::VectorXd y,
                               LossFamily fam = {}, double alpha = 1.0) {
    if (Xs.empty()) throw std::invalid_argument("Dataset: need at least one observation");
    Dataset d;
    d.d1 = Xs[0].rows();
    d.d2 = Xs[0].cols();
    d.covariates.resize(static_cast<Eigen::Index>(Xs.size()), d.d1 * d.d2);
    for (std::size_t i = 0; i < Xs.size(); ++i) {
      if (Xs[i].rows() != d.d1 || Xs[i].cols() != d.d2)
        throw std::invalid_argument("Dataset: covariate shape differs across rows");
      d.covariates.row(static_cast<Eigen::Index>(i)) =
          Eigen::Map<const Eigen::VectorXd>(Xs[i].data(), Xs[i].size());
    }
    d.responses = std::move(y);
    d.family = fam;
    d.weight = alpha;
    d.validate();
    return d;
  }

  Eigen::MatrixXd observation(Eigen::Index i) const {
    Eigen::VectorXd row = covariates.row(i);
    return Eigen::Map<const Eigen::MatrixXd>(row.data(), d1, d2);
  }

  void validate() const {
    if (n() < 1) throw std::invalid_argument("Dataset: n must be >= 1");
    if (responses.size() != n()) throw std::invalid_argument("Dataset: |y| != n");
    if (covariates.cols() != d1 * d2) throw std::invalid_argument("Dataset: dim != d1*d2");
    if (weight < 0) throw std::invalid_argument("Dataset: weight must be >= 0");
    if (!covariates.allFinite() || !responses.allFinite())
      throw std::invalid_argument("Dataset: non-finite data");
    if (family.kind == LossKind::LogisticLogit) {
      for (Eigen::Index i = 0; i < n(); ++i)
        if (responses[i] != 0.0 && responses[i] != 1.0)
          throw std::invalid_argument("Dataset: logit responses must be 0/1");
    }
  }

  void require_matches(const Parameter& theta) const {
    bool ok = theta.is_vector() ? (d2 == 1 && theta.size() == d1)
                                : (theta.rows() == d1 && theta.cols() == d2);
    if (!ok) throw std::invalid_argument("Dataset/Parameter shape mismatch");
  }
};

enum class RegKind { L1, Nuclear };

namespace detail {

inline Eigen::VectorXd singular_values(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) throw std::invalid_argument("singular_values: non-finite input");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues();
}

}  // namespace detail

struct Regularizer {
  RegKind kind = RegKind::L1;

  double norm(const Parameter& theta) const {
    if (kind == RegKind::L1) return theta.vec().lpNorm<1>();
    return detail::singular_values(theta.values()).sum();
  }

  double dual_norm(const Parameter& v) const {
    if (kind == RegKind::L1) return v.vec().lpNorm<Eigen::Infinity>();
    Eigen::VectorXd sv = detail::singular_values(v.values());
    return sv.size() == 0 ? 0.0 : sv[0];
  }
};

inline double regularizer_norm(const Regularizer& r, const Parameter& theta) {
  return r.norm(theta);
}
inline double regularizer_dual_norm(const Regularizer& r, const Parameter& v) {
  return r.dual_norm(v);
}

// L_k(theta) = (1/n_k) sum_i [ -y_i <theta, X_i> + b(<theta, X_i>) ]
inline double glm_loss(const Dataset& d, const Parameter& theta) {
  d.require_matches(theta);
  Eigen::VectorXd eta = d.covariates * theta.vec();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < d.n(); ++i)
    acc += -d.responses[i] * eta[i] + d.family.cumulant(eta[i]);
  return acc / static_cast<double>(d.n());
}

inline Parameter glm_gradient(const Dataset& d, const Parameter& theta) {
  d.require_matches(theta);
  Eigen::VectorXd eta = d.covariates * theta.vec();
  Eigen::VectorXd resid(d.n());
  for (Eigen::Index i = 0; i < d.n(); ++i)
    resid[i] = d.family.mean(eta[i]) - d.responses[i];
  Eigen::VectorXd g = d.covariates.transpose() * resid / static_cast<double>(d.n());
  return Parameter::like(theta, Eigen::Map<const Eigen::MatrixXd>(g.data(), theta.rows(), theta.cols()));
}

// Dense Hessian on vec coordinates: (1/n) sum_i b''(eta_i) vec(X_i) vec(X_i)^T.
inline Eigen::MatrixXd glm_hessian_vec(const Dataset& d, const Parameter& theta) {
  d.require_matches(theta);
  if (d.dim() > kMaxHessianDim)
    throw std::runtime_error("glm_hessian_vec: vec dimension exceeds dense cap");
  Eigen::VectorXd eta = d.covariates * theta.vec();
  Eigen::VectorXd w(d.n());
  for (Eigen::Index i = 0; i < d.n(); ++i) w[i] = d.family.variance(eta[i]);
  return d.covariates.transpose() * w.asDiagonal() * d.covariates / static_cast<double>(d.n());
}

}  // namespace tlmest
