#ifndef NSF_MODEL_HPP_
#define NSF_MODEL_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nsf/kernels.hpp"
#include "nsf/likelihoods.hpp"
#include "nsf/svgp.hpp"

namespace nsf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ModelKind { fa, pnmf, rsf, nsf, nsfh };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view s);

/// Structural description of a factor model. T of the L components are
/// GP-distributed (spatial), the remaining L - T are mean-field (nonspatial).
struct ModelSpec {
  int L = 1;
  int T = 0;
  bool nonnegative = true;
  LikelihoodFamily likelihood = LikelihoodFamily::poisson;
  KernelKind kernel = KernelKind::matern32;
  Index M = 0;  // 0 means "use every observation as an inducing point"
  int S = 3;

  int nonspatial() const { return L - T; }
  ModelKind kind() const;
  void validate() const;
};

/// Spec for one of the five named models. For nsfh an unset T defaults to L/2.
ModelSpec make_spec(ModelKind kind, int L, std::optional<int> T = std::nullopt,
                    std::optional<LikelihoodFamily> likelihood = std::nullopt);

/// Mean-field Gaussian factors q(h_il) = N(delta_il, omega_il) with prior
/// N(m_l, s_l^2) per component.
struct MeanFieldState {
  MatrixXd delta;       // N x K
  MatrixXd omega;       // N x K, > 0
  VectorXd prior_mean;  // K
  VectorXd prior_var;   // K, > 0
};

/// Observations used for fitting: Y (counts or normalized values), the
/// rescaled coordinates X and size factors nu (all ones for real-valued
/// pipelines).
struct ObservationData {
  MatrixXd Y;
  MatrixXd X;
  VectorXd nu;

  Index rows() const { return Y.rows(); }
  Index features() const { return Y.cols(); }
};

struct FactorModel {
  ModelSpec spec;
  MatrixXd W;  // J x T spatial loadings
  MatrixXd V;  // J x (L - T) nonspatial loadings
  std::vector<SpatialComponentState<double>> spatial;
  MeanFieldState meanfield;
  LikelihoodSpec likelihood;
  MatrixXd X_train;  // coordinates the mean-field block is indexed by

  Index features() const { return W.rows() > 0 ? W.rows() : V.rows(); }
  Index observations() const { return X_train.rows(); }
  void validate() const;
};

struct ModelGradient {
  MatrixXd W, V;
  std::vector<SpatialComponentGradient<double>> spatial;
  MatrixXd mf_delta, mf_log_omega;
  VectorXd mf_prior_mean, mf_log_prior_var;
  VectorXd log_aux;

  static ModelGradient zeros_like(const FactorModel& model);
};

/// Allocates and initializes a model for the given data (delegates to the
/// initialization module). Inducing points come from k-means when M < N.
FactorModel build_model(const ModelSpec& spec, const ObservationData& data, std::uint64_t seed);

enum class NonspatialPolicy { reject, prior_mean };
enum class PointEstimate { geometric, arithmetic };

/// Factor point estimates at the training observations: F (N x T) and H
/// (N x (L - T)). Nonnegative models return exp(mean) (geometric) or
/// exp(mean + var/2) (arithmetic); real-valued models return the means.
struct FactorEstimates {
  MatrixXd F;
  MatrixXd H;
};
FactorEstimates factor_estimates(const FactorModel& model, PointEstimate kind = PointEstimate::geometric);

/// Posterior-mean predictions at the training observations.
MatrixXd predict_mean(const FactorModel& model, const VectorXd& nu);

/// Predictions at new coordinates. Spatial factors are interpolated through
/// the GP and nonspatial factors fall back to their prior mean m_l. Models
/// without any spatial factor (PNMF, FA) are rejected unless the policy
/// explicitly asks for the prior-mean fallback.
MatrixXd predict_mean_at(const FactorModel& model, const MatrixXd& X, const VectorXd& nu,
                         NonspatialPolicy policy = NonspatialPolicy::reject);

double kl_meanfield(const MeanFieldState& state, Index i, Index l);

struct ElboTerms {
  double value = 0.0;
  double expected_loglik = 0.0;  // already scaled by N / |batch|
  double kl_inducing = 0.0;
  double kl_meanfield = 0.0;     // already scaled by N / |batch|
};

/// Monte Carlo ELBO on a batch of observation indices. Each observation
/// draws its S x L standard normals from its own stream derived from
/// (seed, observation index), so batches and the full set see the same
/// draws. When grad is non-null it receives the gradient of the returned
/// value.
ElboTerms elbo_terms(const FactorModel& model, const ObservationData& data, std::span<const Index> batch,
                     int S, std::uint64_t seed, ModelGradient* grad = nullptr);

double elbo(const FactorModel& model, const ObservationData& data, std::span<const Index> batch, int S,
            std::uint64_t seed, ModelGradient* grad = nullptr);

/// Full-batch convenience overload.
double elbo(const FactorModel& model, const ObservationData& data, int S, std::uint64_t seed,
            ModelGradient* grad = nullptr);

std::vector<Index> all_rows(Index n);

}  // namespace nsf

#endif  // NSF_MODEL_HPP_
