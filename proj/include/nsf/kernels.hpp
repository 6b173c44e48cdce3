#ifndef NSF_KERNELS_HPP_
#define NSF_KERNELS_HPP_

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "nsf/errors.hpp"

namespace nsf {

enum class KernelKind { matern32, squared_exponential };

inline std::string_view to_string(KernelKind kind) {
  return kind == KernelKind::matern32 ? "matern32" : "sqexp";
}

inline KernelKind kernel_kind_from_string(std::string_view s) {
  if (s == "matern32") return KernelKind::matern32;
  if (s == "sqexp" || s == "squared_exponential") return KernelKind::squared_exponential;
  throw ArgumentError("unknown kernel kind: " + std::string(s));
}

/// Isotropic stationary kernel. The lengthscale is shared across input
/// dimensions; coordinates are expected to be rescaled beforehand.
template <typename Scalar>
struct KernelParams {
  KernelKind kind = KernelKind::matern32;
  Scalar amplitude = Scalar(1);
  Scalar lengthscale = Scalar(1);

  void validate() const {
    if (!(amplitude > Scalar(0)) || !(lengthscale > Scalar(0))) {
      throw ParameterDomainError("kernel amplitude and lengthscale must be positive");
    }
  }
};

namespace detail {

inline constexpr double kSqrt3 = 1.7320508075688772935;

/// Kernel value and its derivative with respect to log(lengthscale), as a
/// function of the Euclidean distance.
template <typename Scalar>
inline Scalar kernel_of_distance(const KernelParams<Scalar>& p, Scalar r) {
  const Scalar a2 = p.amplitude * p.amplitude;
  if (p.kind == KernelKind::matern32) {
    const Scalar u = Scalar(kSqrt3) * r / p.lengthscale;
    return a2 * (Scalar(1) + u) * std::exp(-u);
  }
  const Scalar q = r / p.lengthscale;
  return a2 * std::exp(Scalar(-0.5) * q * q);
}

template <typename Scalar>
inline Scalar kernel_dlog_lengthscale(const KernelParams<Scalar>& p, Scalar r) {
  const Scalar a2 = p.amplitude * p.amplitude;
  if (p.kind == KernelKind::matern32) {
    const Scalar u = Scalar(kSqrt3) * r / p.lengthscale;
    return a2 * u * u * std::exp(-u);
  }
  const Scalar q = r / p.lengthscale;
  return a2 * q * q * std::exp(Scalar(-0.5) * q * q);
}

}  // namespace detail

/// k(x1, x2). Matern-3/2: a^2 (1 + sqrt3 r/l) exp(-sqrt3 r/l);
/// squared exponential: a^2 exp(-r^2 / (2 l^2)).
template <typename Scalar, typename Derived1, typename Derived2>
Scalar kernel_eval(const KernelParams<Scalar>& params, const Eigen::MatrixBase<Derived1>& x1,
                   const Eigen::MatrixBase<Derived2>& x2) {
  params.validate();
  if (x1.size() != x2.size()) throw ShapeError("kernel_eval: input dimension mismatch");
  const Scalar r = (x1.derived().reshaped() - x2.derived().reshaped()).norm();
  return detail::kernel_of_distance(params, r);
}

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Pairwise distances between rows of A (n x D) and rows of B (m x D).
template <typename Scalar>
MatrixX<Scalar> pairwise_distances(const Eigen::Ref<const MatrixX<Scalar>>& A,
                                   const Eigen::Ref<const MatrixX<Scalar>>& B) {
  if (A.cols() != B.cols()) throw ShapeError("pairwise_distances: coordinate dimension mismatch");
  MatrixX<Scalar> out(A.rows(), B.rows());
  for (Eigen::Index q = 0; q < B.rows(); ++q) {
    for (Eigen::Index p = 0; p < A.rows(); ++p) {
      out(p, q) = (A.row(p) - B.row(q)).norm();
    }
  }
  return out;
}

/// Covariance block with entry (p, q) = k(A_p, B_q).
template <typename Scalar>
MatrixX<Scalar> cross_cov(const KernelParams<Scalar>& params,
                          const Eigen::Ref<const MatrixX<Scalar>>& A,
                          const Eigen::Ref<const MatrixX<Scalar>>& B) {
  params.validate();
  return pairwise_distances<Scalar>(A, B).unaryExpr(
      [&](Scalar r) { return detail::kernel_of_distance(params, r); });
}

/// Derivative of cross_cov with respect to log(lengthscale), from precomputed distances.
template <typename Scalar>
MatrixX<Scalar> cross_cov_dlog_lengthscale(const KernelParams<Scalar>& params,
                                           const MatrixX<Scalar>& distances) {
  return distances.unaryExpr(
      [&](Scalar r) { return detail::kernel_dlog_lengthscale(params, r); });
}

template <typename Scalar>
struct JitteredCholesky {
  MatrixX<Scalar> factor;  // lower triangular
  Scalar jitter = Scalar(0);
};

/// Relative jitter levels, multiplied by the mean diagonal of K.
inline constexpr std::array<double, 6> kJitterSchedule = {0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2};

/// Cholesky of K + jI for the first j in the schedule that factorizes.
template <typename Scalar>
JitteredCholesky<Scalar> chol_with_jitter(const Eigen::Ref<const MatrixX<Scalar>>& K) {
  if (K.rows() != K.cols()) throw ShapeError("chol_with_jitter: matrix must be square");
  const Eigen::Index n = K.rows();
  const Scalar scale = n > 0 ? K.diagonal().mean() : Scalar(1);
  MatrixX<Scalar> work(n, n);
  for (double rel : kJitterSchedule) {
    const Scalar j = Scalar(rel) * scale;
    work = K;
    work.diagonal().array() += j;
    Eigen::LLT<MatrixX<Scalar>> llt(work);
    if (llt.info() != Eigen::Success) continue;
    MatrixX<Scalar> L = llt.matrixL();
    if ((L.diagonal().array() > Scalar(0)).all() && L.allFinite()) {
      return {std::move(L), j};
    }
  }
  throw SingularMatrixError("chol_with_jitter: factorization failed at maximum jitter");
}

}  // namespace nsf

#endif  // NSF_KERNELS_HPP_
