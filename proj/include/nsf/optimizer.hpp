#ifndef NSF_OPTIMIZER_HPP_
#define NSF_OPTIMIZER_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "nsf/model.hpp"

namespace nsf {

struct FitConfig {
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int max_steps = 1000;
  double rel_tol = 1e-4;
  int smoothing_window = 10;
  int S = 3;
  Index batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  /// Only update delta/Omega of spatial components and delta/omega of the
  /// mean-field block; loadings, mean functions, kernel and likelihood
  /// parameters stay fixed.
  bool variational_only = false;
  /// Optional per-step observer (step index, ELBO estimate).
  std::function<void(int, double)> on_step;

  void validate() const;
};

struct FitTrace {
  std::vector<double> elbo;
  double wall_seconds = 0.0;
  bool converged = false;
  int steps = 0;
};

struct FitResult {
  FactorModel model;
  FitTrace trace;
};

struct AdamMoments {
  VectorXd first;
  VectorXd second;
};

/// One bias-corrected Adam descent step (t >= 1) on `params` given the
/// gradient of the loss. Throws DivergedFitError on non-finite gradients.
void adam_step(Eigen::Ref<VectorXd> params, const VectorXd& grads, AdamMoments& moments, int t,
               const FitConfig& config);

/// Entrywise max(x, 0).
MatrixXd project_nonnegative(const MatrixXd& m);

/// Flat unconstrained view of every optimizable model parameter.
///
/// Layout, in order: W (column-major), V (column-major); per spatial
/// component: beta0, beta1, log amplitude, log lengthscale, delta, the lower
/// triangle of the Omega Cholesky factor column by column with diagonal
/// entries stored as softplus^{-1}; mean-field delta (column-major),
/// log omega, prior means, log prior variances; log likelihood aux.
class ParameterLayout {
 public:
  explicit ParameterLayout(const FactorModel& model);

  Index size() const { return size_; }
  VectorXd pack(const FactorModel& model) const;
  void unpack(const VectorXd& x, FactorModel& model) const;
  VectorXd pack_gradient(const ModelGradient& grad, const FactorModel& model) const;

  /// 1 for parameters updated under the given config, 0 for frozen ones.
  VectorXd trainable_mask(bool variational_only) const;
  Index loadings_size() const { return loadings_size_; }

 private:
  struct Block {
    Index offset;
    Index size;
    bool variational;
  };
  std::vector<Block> blocks_;
  Index size_ = 0;
  Index loadings_size_ = 0;
};

double softplus(double x);
double softplus_inverse(double y);

/// ELBO maximization by Adam with projected-gradient nonnegativity.
FitResult fit(FactorModel model, const ObservationData& data, const FitConfig& config);

/// Largest |analytic - central difference| / max(1, |analytic|, |fd|) over
/// all coordinates of x.
double check_gradients(const std::function<double(const VectorXd&)>& objective, const VectorXd& analytic,
                       const VectorXd& x, double eps);

/// Same check for the model ELBO at a fixed Monte Carlo seed.
double check_gradients(const FactorModel& model, const ObservationData& data, double eps, int S = 1,
                       std::uint64_t seed = 0);

}  // namespace nsf

#endif  // NSF_OPTIMIZER_HPP_
