#ifndef NSF_SVGP_HPP_
#define NSF_SVGP_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

#include "nsf/errors.hpp"
#include "nsf/kernels.hpp"
#include "nsf/kmeans.hpp"

namespace nsf {

/// Variational state of one GP-distributed factor: q(u) = N(delta, Omega)
/// at frozen inducing locations Z, with linear prior mean beta0 + x'beta1.
template <typename Scalar>
struct SpatialComponentState {
  MatrixX<Scalar> Z;           // M x D
  VectorX<Scalar> delta;       // M
  MatrixX<Scalar> omega_chol;  // M x M, lower triangular, positive diagonal
  Scalar beta0 = Scalar(0);
  VectorX<Scalar> beta1;  // D
  KernelParams<Scalar> kernel;

  Eigen::Index inducing_count() const { return Z.rows(); }

  VectorX<Scalar> prior_mean(const Eigen::Ref<const MatrixX<Scalar>>& X) const {
    return (X * beta1).array() + beta0;
  }

  void validate() const {
    const Eigen::Index m = Z.rows();
    if (delta.size() != m || omega_chol.rows() != m || omega_chol.cols() != m ||
        beta1.size() != Z.cols()) {
      throw ShapeError("SpatialComponentState: inconsistent dimensions");
    }
    if (!(omega_chol.diagonal().array() > Scalar(0)).all()) {
      throw ParameterDomainError("SpatialComponentState: Omega factor needs a positive diagonal");
    }
    kernel.validate();
  }
};

/// Diagonal marginals of q(f) at a batch of locations.
template <typename Scalar>
struct MarginalPosterior {
  VectorX<Scalar> mean;
  VectorX<Scalar> variance;
};

/// Gradient with respect to the natural parameters of one spatial component.
/// Kernel hyperparameters are differentiated on log scale; omega_chol is the
/// gradient with respect to the raw lower-triangular entries.
template <typename Scalar>
struct SpatialComponentGradient {
  Scalar beta0 = Scalar(0);
  VectorX<Scalar> beta1;
  Scalar log_amplitude = Scalar(0);
  Scalar log_lengthscale = Scalar(0);
  VectorX<Scalar> delta;
  MatrixX<Scalar> omega_chol;
};

/// Inducing locations: X itself when M = N, otherwise k-means centroids.
template <typename Scalar>
MatrixX<Scalar> choose_inducing_points(const Eigen::Ref<const MatrixX<Scalar>>& X, Eigen::Index M,
                                       std::uint64_t seed) {
  if (M < 1 || M > X.rows()) throw ArgumentError("choose_inducing_points: need 1 <= M <= N");
  if (M == X.rows()) return X;
  return kmeans<Scalar>(X, M, seed).centroids;
}

/// Cached forward pass of the marginalized variational posterior for one
/// component at a batch of locations, with the matching reverse pass.
///
///   A      = Kuu^{-1} Kuf
///   mean_i = mu(x_i) + A_i' (delta - mu(Z))
///   var_i  = k(x_i, x_i) - A_i' (Kuu - Omega) A_i
///
/// Kuu carries whatever jitter chol_with_jitter needed; the jitter is
/// proportional to amplitude^2 so it is differentiated consistently.
///
/// When the batch locations are exactly the inducing points, f at the batch
/// is u itself: A = I, mean = mu(x) + delta - mu(Z), var = diag(Omega), and
/// no solves are needed in the forward pass.
template <typename Scalar>
class ComponentPosterior {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  ComponentPosterior(const SpatialComponentState<Scalar>& state,
                     const Eigen::Ref<const Matrix>& Xb)
      : state_(state), Xb_(Xb) {
    state.validate();
    if (Xb.cols() != state.Z.cols()) throw ShapeError("marginal_posterior: coordinate dimension mismatch");
    const Scalar a2 = state.kernel.amplitude * state.kernel.amplitude;

    dist_uu_ = pairwise_distances<Scalar>(state.Z, state.Z);
    Matrix Kuu = dist_uu_.unaryExpr([&](Scalar r) { return detail::kernel_of_distance(state.kernel, r); });
    auto chol = chol_with_jitter<Scalar>(Kuu);
    L_ = std::move(chol.factor);
    jitter_ = chol.jitter;
    Kuu.diagonal().array() += jitter_;
    Kuu_ = std::move(Kuu);

    d_ = state.delta - state.prior_mean(state.Z);
    b_ = solve(d_);
    const auto Lw = state.omega_chol.template triangularView<Eigen::Lower>();
    T_ = Lw;
    L_.template triangularView<Eigen::Lower>().solveInPlace(T_);

    identity_ = Xb.rows() == state.Z.rows() && Xb == state.Z;
    if (identity_) {
      post_.mean = state.prior_mean(Xb) + d_;
      post_.variance = state.omega_chol.rowwise().squaredNorm();
      return;
    }

    dist_uf_ = pairwise_distances<Scalar>(state.Z, Xb);
    Kuf_ = dist_uf_.unaryExpr([&](Scalar r) { return detail::kernel_of_distance(state.kernel, r); });
    A_ = solve(Kuf_);
    Y_.noalias() = Lw.transpose() * A_;
    R_ = Kuf_;
    R_.noalias() -= Lw * Y_;

    post_.mean = state.prior_mean(Xb);
    post_.mean.noalias() += A_.transpose() * d_;
    post_.variance = (Scalar(a2) - (A_.array() * R_.array()).colwise().sum().transpose()).max(Scalar(0));
  }

  const MarginalPosterior<Scalar>& posterior() const { return post_; }
  Scalar jitter() const { return jitter_; }

  /// KL(q(u) || p(u)) in closed form.
  Scalar kl() const {
    const Eigen::Index M = L_.rows();
    const Scalar logdet_k = Scalar(2) * L_.diagonal().array().log().sum();
    const Scalar logdet_w = Scalar(2) * state_.omega_chol.diagonal().array().log().sum();
    const Scalar trace = T_.squaredNorm();
    const Scalar quad = d_.dot(b_);
    return Scalar(0.5) * (logdet_k - logdet_w - Scalar(M) + trace + quad);
  }

  /// Reverse pass. g_mean and g_var are derivatives of an objective with
  /// respect to the batch marginal means and variances; kl_weight multiplies
  /// the KL term added to that objective (use -1 for an ELBO).
  SpatialComponentGradient<Scalar> backward(const Eigen::Ref<const Vector>& g_mean,
                                            const Eigen::Ref<const Vector>& g_var,
                                            Scalar kl_weight) const {
    const auto& s = state_;
    const Eigen::Index M = L_.rows();
    const Scalar a2 = s.kernel.amplitude * s.kernel.amplitude;
    if (g_mean.size() != Xb_.rows() || g_var.size() != Xb_.rows()) {
      throw ShapeError("ComponentPosterior::backward: gradient length mismatch");
    }

    Vector g_d(M);
    Matrix G_uu, G_uf, G_lw;
    if (identity_) {
      // Only the KL term depends on the kernel.
      g_d = g_mean + kl_weight * b_;
      G_uu = Matrix::Zero(M, M);
      G_lw = Scalar(2) * (g_var.asDiagonal() * s.omega_chol);
    } else {
      // Q = Kuu^{-1} (Kuu - Omega) A
      const Matrix Q = solve(R_);
      const Vector Ag = A_ * g_mean;
      g_d = Ag + kl_weight * b_;

      Matrix QmA = Scalar(2) * Q - A_;
      G_uu.resize(M, M);
      G_uu.noalias() = (QmA * g_var.asDiagonal()) * A_.transpose();
      G_uu.noalias() -= Ag * b_.transpose();

      G_uf = b_ * g_mean.transpose();
      G_uf.noalias() -= Scalar(2) * (Q * g_var.asDiagonal());

      G_lw.resize(M, M);
      G_lw.noalias() = Scalar(2) * (A_ * g_var.asDiagonal()) * Y_.transpose();
    }

    if (kl_weight != Scalar(0)) {
      // P = Kuu^{-1} = L^{-T} L^{-1}, C = P Lw = L^{-T} T
      Matrix Linv = Matrix::Identity(M, M);
      L_.template triangularView<Eigen::Lower>().solveInPlace(Linv);
      const auto Linv_t = Linv.template triangularView<Eigen::Lower>().transpose();
      Matrix kl_uu(M, M), C(M, M), CCt = Matrix::Zero(M, M);
      kl_uu.noalias() = Linv_t * Linv;
      C.noalias() = Linv_t * T_;
      CCt.template selfadjointView<Eigen::Lower>().rankUpdate(C);
      CCt.template triangularView<Eigen::StrictlyUpper>() = CCt.transpose();
      kl_uu -= CCt;
      kl_uu.noalias() -= b_ * b_.transpose();
      G_uu += (Scalar(0.5) * kl_weight) * kl_uu;

      G_lw += kl_weight * C;
      G_lw.diagonal().array() -= kl_weight / s.omega_chol.diagonal().array();
    }

    SpatialComponentGradient<Scalar> g;
    g.omega_chol = G_lw.template triangularView<Eigen::Lower>();
    g.delta = g_d;
    g.beta0 = g_mean.sum() - g_d.sum();
    g.beta1 = Xb_.transpose() * g_mean;
    g.beta1.noalias() -= s.Z.transpose() * g_d;

    // d Kuu / d log a = 2 Kuu (jitter included), d Kuf / d log a = 2 Kuf,
    // d k(x,x) / d log a = 2 a^2.
    const Matrix E_uu = cross_cov_dlog_lengthscale(s.kernel, dist_uu_);
    g.log_amplitude = Scalar(2) * (G_uu.array() * Kuu_.array()).sum();
    g.log_lengthscale = (G_uu.array() * E_uu.array()).sum();
    if (!identity_) {
      const Matrix E_uf = cross_cov_dlog_lengthscale(s.kernel, dist_uf_);
      g.log_amplitude += Scalar(2) * ((G_uf.array() * Kuf_.array()).sum() + a2 * g_var.sum());
      g.log_lengthscale += (G_uf.array() * E_uf.array()).sum();
    }
    return g;
  }

 private:
  template <typename Rhs>
  Matrix solve(const Rhs& rhs) const {
    Matrix x = rhs;
    L_.template triangularView<Eigen::Lower>().solveInPlace(x);
    L_.template triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
  }

  const SpatialComponentState<Scalar>& state_;
  Matrix Xb_;
  Matrix dist_uu_, dist_uf_;
  Matrix Kuu_, L_, Kuf_;
  Scalar jitter_ = Scalar(0);
  bool identity_ = false;
  Vector d_, b_;
  Matrix T_;  // L^{-1} Lw
  Matrix A_, Y_, R_;
  MarginalPosterior<Scalar> post_;
};

template <typename Scalar>
MarginalPosterior<Scalar> marginal_posterior(const SpatialComponentState<Scalar>& state,
                                             const Eigen::Ref<const MatrixX<Scalar>>& Xb) {
  return ComponentPosterior<Scalar>(state, Xb).posterior();
}

template <typename Scalar>
Scalar kl_inducing(const SpatialComponentState<Scalar>& state) {
  return ComponentPosterior<Scalar>(state, MatrixX<Scalar>(0, state.Z.cols())).kl();
}

/// S x n standard normal draws, deterministic in seed.
template <typename Scalar>
MatrixX<Scalar> standard_normals(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  MatrixX<Scalar> out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = normal(gen);
  return out;
}

/// Reparameterized draws f = mean + sqrt(variance) * eps, one row per sample.
template <typename Scalar>
MatrixX<Scalar> sample_factor(const MarginalPosterior<Scalar>& post, Eigen::Index S, std::uint64_t seed) {
  if (S < 1) throw ArgumentError("sample_factor: S must be at least 1");
  if (post.mean.size() != post.variance.size()) throw ShapeError("sample_factor: mean/variance length mismatch");
  const Eigen::Index n = post.mean.size();
  MatrixX<Scalar> eps = standard_normals<Scalar>(S, n, seed);
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> sd = post.variance.array().max(Scalar(0)).sqrt().transpose();
  return (eps.array().rowwise() * sd).rowwise() + post.mean.transpose().array();
}

}  // namespace nsf

#endif  // NSF_SVGP_HPP_
