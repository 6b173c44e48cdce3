#include "nsf/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nsf/errors.hpp"
#include "nsf/initialization.hpp"

namespace nsf {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::fa: return "fa";
    case ModelKind::pnmf: return "pnmf";
    case ModelKind::rsf: return "rsf";
    case ModelKind::nsf: return "nsf";
    case ModelKind::nsfh: return "nsfh";
  }
  return "nsf";
}

ModelKind model_kind_from_string(std::string_view s) {
  if (s == "fa") return ModelKind::fa;
  if (s == "pnmf") return ModelKind::pnmf;
  if (s == "rsf") return ModelKind::rsf;
  if (s == "nsf") return ModelKind::nsf;
  if (s == "nsfh") return ModelKind::nsfh;
  throw ArgumentError("unknown model: " + std::string(s));
}

ModelKind ModelSpec::kind() const {
  if (!nonnegative) return T == 0 ? ModelKind::fa : ModelKind::rsf;
  if (T == L) return ModelKind::nsf;
  if (T == 0) return ModelKind::pnmf;
  return ModelKind::nsfh;
}

void ModelSpec::validate() const {
  if (L < 1) throw ArgumentError("ModelSpec: L must be at least 1");
  if (T < 0 || T > L) throw ArgumentError("ModelSpec: T must lie in [0, L]");
  if (S < 1) throw ArgumentError("ModelSpec: S must be at least 1");
  if (M < 0) throw ArgumentError("ModelSpec: M must be nonnegative");
  if (!nonnegative && T != 0 && T != L) {
    throw UnsupportedModelError("real-valued hybrid models are not supported (T must be 0 or L)");
  }
}

ModelSpec make_spec(ModelKind kind, int L, std::optional<int> T, std::optional<LikelihoodFamily> likelihood) {
  ModelSpec spec;
  spec.L = L;
  switch (kind) {
    case ModelKind::fa:
      spec.nonnegative = false;
      spec.T = 0;
      spec.likelihood = LikelihoodFamily::gaussian;
      break;
    case ModelKind::rsf:
      spec.nonnegative = false;
      spec.T = L;
      spec.likelihood = LikelihoodFamily::gaussian;
      break;
    case ModelKind::pnmf:
      spec.T = 0;
      break;
    case ModelKind::nsf:
      spec.T = L;
      break;
    case ModelKind::nsfh:
      spec.T = T.value_or(L / 2);
      break;
  }
  if (T && kind != ModelKind::nsfh && *T != spec.T) {
    throw ArgumentError("T can only be chosen for nsfh models");
  }
  if (likelihood) spec.likelihood = *likelihood;
  spec.validate();
  return spec;
}

void FactorModel::validate() const {
  spec.validate();
  const Index J = features();
  if (W.rows() != J || W.cols() != spec.T) throw ShapeError("FactorModel: W must be J x T");
  if (V.rows() != J || V.cols() != spec.nonspatial()) throw ShapeError("FactorModel: V must be J x (L - T)");
  if (static_cast<int>(spatial.size()) != spec.T) throw ShapeError("FactorModel: need T spatial states");
  const Index K = spec.nonspatial();
  if (K > 0) {
    const auto& mf = meanfield;
    if (mf.delta.cols() != K || mf.omega.cols() != K || mf.prior_mean.size() != K || mf.prior_var.size() != K ||
        mf.delta.rows() != X_train.rows() || mf.omega.rows() != X_train.rows()) {
      throw ShapeError("FactorModel: mean-field block has inconsistent dimensions");
    }
  }
  likelihood.validate(J);
}

ModelGradient ModelGradient::zeros_like(const FactorModel& model) {
  ModelGradient g;
  g.W = MatrixXd::Zero(model.W.rows(), model.W.cols());
  g.V = MatrixXd::Zero(model.V.rows(), model.V.cols());
  for (const auto& s : model.spatial) {
    SpatialComponentGradient<double> sg;
    sg.beta1 = VectorXd::Zero(s.beta1.size());
    sg.delta = VectorXd::Zero(s.delta.size());
    sg.omega_chol = MatrixXd::Zero(s.omega_chol.rows(), s.omega_chol.cols());
    g.spatial.push_back(std::move(sg));
  }
  const auto& mf = model.meanfield;
  g.mf_delta = MatrixXd::Zero(mf.delta.rows(), mf.delta.cols());
  g.mf_log_omega = MatrixXd::Zero(mf.omega.rows(), mf.omega.cols());
  g.mf_prior_mean = VectorXd::Zero(mf.prior_mean.size());
  g.mf_log_prior_var = VectorXd::Zero(mf.prior_var.size());
  g.log_aux = VectorXd::Zero(model.likelihood.aux.size());
  return g;
}

std::vector<Index> all_rows(Index n) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  return rows;
}

namespace {

constexpr double kFactorFloor = 1e-2;

MatrixXd gather_rows(const MatrixXd& m, std::span<const Index> rows) {
  MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// eps[s](b, l) for batch row b, component l.
std::vector<MatrixXd> draw_batch_normals(std::span<const Index> batch, int S, int L, std::uint64_t seed) {
  const Index B = static_cast<Index>(batch.size());
  std::vector<MatrixXd> eps(static_cast<std::size_t>(S), MatrixXd(B, L));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index b = 0; b < B; ++b) {
    std::mt19937_64 gen(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(batch[b]))));
    normal.reset();
    for (int s = 0; s < S; ++s)
      for (int l = 0; l < L; ++l) eps[s](b, l) = normal(gen);
  }
  return eps;
}

MatrixXd combined_loadings(const FactorModel& model) {
  MatrixXd B(model.features(), model.spec.L);
  B << model.W, model.V;
  return B;
}

// Initial per-observation factor values mapped onto inducing points: each
// observation votes for its nearest inducing location; empty inducing points
// take the value of their nearest observation.
VectorXd regress_onto_inducing(const MatrixXd& X, const MatrixXd& Z, const VectorXd& values) {
  const Index M = Z.rows();
  VectorXd sums = VectorXd::Zero(M);
  VectorXd counts = VectorXd::Zero(M);
  for (Index i = 0; i < X.rows(); ++i) {
    Index m;
    (Z.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff(&m);
    sums(m) += values(i);
    counts(m) += 1.0;
  }
  VectorXd out(M);
  for (Index m = 0; m < M; ++m) {
    if (counts(m) > 0) {
      out(m) = sums(m) / counts(m);
    } else {
      Index i;
      (X.rowwise() - Z.row(m)).rowwise().squaredNorm().minCoeff(&i);
      out(m) = values(i);
    }
  }
  return out;
}

}  // namespace

FactorModel build_model(const ModelSpec& spec, const ObservationData& data, std::uint64_t seed) {
  spec.validate();
  const Index N = data.rows(), J = data.features();
  if (data.X.rows() != N || data.nu.size() != N) throw ShapeError("build_model: data rows disagree");
  if (spec.L > std::min(N, J)) throw ArgumentError("build_model: L exceeds min(N, J)");
  const Index M = spec.M == 0 ? N : spec.M;
  if (spec.T > 0 && M > N) throw ArgumentError("build_model: M must not exceed N");

  InitialFactors init = init_factors(data.Y, spec.L, spec.nonnegative, seed);
  if (spec.T > 0 && spec.T < spec.L) {
    init = assign_spatial_components(init, data.X, spec.T).factors;
  }

  // Targets for the latent factors on the model's scale.
  MatrixXd targets = init.F;
  MatrixXd loadings = init.W;
  if (spec.nonnegative) {
    for (Index l = 0; l < spec.L; ++l) {
      VectorXd g = init.F.col(l).cwiseQuotient(data.nu);
      double c = g.mean();
      if (!(c > 0.0)) c = 1.0;
      g /= c;
      loadings.col(l) *= c;
      targets.col(l) = (g.array() + kFactorFloor).log();
    }
  }

  FactorModel model;
  model.spec = spec;
  model.spec.M = spec.T > 0 ? M : spec.M;
  model.X_train = data.X;
  model.W = loadings.leftCols(spec.T);
  model.V = loadings.rightCols(spec.nonspatial());

  if (spec.T > 0) {
    const MatrixXd Z = choose_inducing_points<double>(data.X, M, seed);
    double range = 0.0;
    for (Index d = 0; d < data.X.cols(); ++d) range = std::max(range, data.X.col(d).maxCoeff() - data.X.col(d).minCoeff());
    if (!(range > 0.0)) range = 1.0;
    KernelParams<double> kernel{spec.kernel, 1.0, 0.1 * range};
    const MatrixXd Kuu = cross_cov<double>(kernel, Z, Z);
    const MatrixXd omega_chol = 0.1 * chol_with_jitter<double>(Kuu).factor;
    for (int l = 0; l < spec.T; ++l) {
      SpatialComponentState<double> s;
      s.Z = Z;
      s.delta = regress_onto_inducing(data.X, Z, targets.col(l));
      s.omega_chol = omega_chol;
      s.beta0 = 0.0;
      s.beta1 = VectorXd::Zero(data.X.cols());
      s.kernel = kernel;
      model.spatial.push_back(std::move(s));
    }
  }

  const Index K = spec.nonspatial();
  auto& mf = model.meanfield;
  mf.delta = targets.rightCols(K);
  mf.omega = MatrixXd::Constant(N, K, 0.01);
  mf.prior_mean.resize(K);
  mf.prior_var.resize(K);
  for (Index k = 0; k < K; ++k) {
    const double mean = mf.delta.col(k).mean();
    const double var = (mf.delta.col(k).array() - mean).square().mean();
    mf.prior_mean(k) = mean;
    mf.prior_var(k) = std::max(var, 0.01);
  }

  model.likelihood.family = spec.likelihood;
  if (spec.likelihood == LikelihoodFamily::gaussian) {
    const MatrixXd fit = init.F * init.W.transpose();
    model.likelihood.aux = ((data.Y - fit).array().square().colwise().mean().transpose()).max(1e-6);
  } else if (spec.likelihood == LikelihoodFamily::negative_binomial) {
    model.likelihood.aux = VectorXd::Constant(J, 10.0);
  }
  model.validate();
  return model;
}

FactorEstimates factor_estimates(const FactorModel& model, PointEstimate kind) {
  FactorEstimates est;
  const Index N = model.observations();
  est.F.resize(N, model.spec.T);
  for (int l = 0; l < model.spec.T; ++l) {
    const auto post = marginal_posterior<double>(model.spatial[l], model.X_train);
    if (!model.spec.nonnegative) {
      est.F.col(l) = post.mean;
    } else if (kind == PointEstimate::geometric) {
      est.F.col(l) = post.mean.array().exp();
    } else {
      est.F.col(l) = (post.mean.array() + 0.5 * post.variance.array()).exp();
    }
  }
  const auto& mf = model.meanfield;
  if (!model.spec.nonnegative) {
    est.H = mf.delta;
  } else if (kind == PointEstimate::geometric) {
    est.H = mf.delta.array().exp();
  } else {
    est.H = (mf.delta.array() + 0.5 * mf.omega.array()).exp();
  }
  return est;
}

namespace {

MatrixXd combine(const FactorModel& model, const MatrixXd& F, const MatrixXd& H, const VectorXd& nu) {
  MatrixXd out = F * model.W.transpose();
  out.noalias() += H * model.V.transpose();
  if (model.spec.nonnegative) out = out.array().colwise() * nu.array();
  return out;
}

}  // namespace

MatrixXd predict_mean(const FactorModel& model, const VectorXd& nu) {
  if (nu.size() != model.observations()) throw ShapeError("predict_mean: size factors length mismatch");
  const auto est = factor_estimates(model, PointEstimate::geometric);
  return combine(model, est.F, est.H, nu);
}

MatrixXd predict_mean_at(const FactorModel& model, const MatrixXd& X, const VectorXd& nu, NonspatialPolicy policy) {
  if (nu.size() != X.rows()) throw ShapeError("predict_mean_at: size factors length mismatch");
  const Index K = model.spec.nonspatial();
  if (model.spec.T == 0 && policy == NonspatialPolicy::reject) {
    throw UnsupportedModelError("out-of-sample prediction is unavailable for models without spatial factors");
  }
  const Index n = X.rows();
  MatrixXd F(n, model.spec.T);
  for (int l = 0; l < model.spec.T; ++l) {
    const auto post = marginal_posterior<double>(model.spatial[l], X);
    F.col(l) = model.spec.nonnegative ? VectorXd(post.mean.array().exp()) : post.mean;
  }
  MatrixXd H(n, K);
  for (Index k = 0; k < K; ++k) {
    const double m = model.meanfield.prior_mean(k);
    H.col(k).setConstant(model.spec.nonnegative ? std::exp(m) : m);
  }
  return combine(model, F, H, nu);
}

double kl_meanfield(const MeanFieldState& state, Index i, Index l) {
  const double s2 = state.prior_var(l), w = state.omega(i, l), dm = state.delta(i, l) - state.prior_mean(l);
  return 0.5 * (std::log(s2 / w) - 1.0 + w / s2 + dm * dm / s2);
}

ElboTerms elbo_terms(const FactorModel& model, const ObservationData& data, std::span<const Index> batch, int S,
                     std::uint64_t seed, ModelGradient* grad) {
  if (S < 1) throw ArgumentError("elbo: S must be at least 1");
  if (batch.empty()) throw ArgumentError("elbo: batch must be nonempty");
  const Index N = data.rows();
  const Index J = data.features();
  if (J != model.features()) throw ShapeError("elbo: feature count mismatch");
  for (Index r : batch)
    if (r < 0 || r >= N) throw ArgumentError("elbo: batch index out of range");

  const int T = model.spec.T, L = model.spec.L;
  const Index K = model.spec.nonspatial();
  const Index B = static_cast<Index>(batch.size());
  const double scale = static_cast<double>(N) / static_cast<double>(B);
  const bool nonneg = model.spec.nonnegative;

  if (grad) *grad = ModelGradient::zeros_like(model);

  const MatrixXd Yb = gather_rows(data.Y, batch);
  const MatrixXd Xb = gather_rows(data.X, batch);
  VectorXd nub(B);
  for (Index b = 0; b < B; ++b) nub(b) = data.nu(batch[b]);

  std::vector<ComponentPosterior<double>> posts;
  posts.reserve(T);
  for (int l = 0; l < T; ++l) posts.emplace_back(model.spatial[l], Xb);

  MatrixXd mean(B, L), sd(B, L);
  for (int l = 0; l < T; ++l) {
    mean.col(l) = posts[l].posterior().mean;
    sd.col(l) = posts[l].posterior().variance.array().sqrt();
  }
  const auto& mf = model.meanfield;
  for (Index k = 0; k < K; ++k) {
    for (Index b = 0; b < B; ++b) {
      mean(b, T + k) = mf.delta(batch[b], k);
      sd(b, T + k) = std::sqrt(mf.omega(batch[b], k));
    }
  }

  const auto eps = draw_batch_normals(batch, S, L, seed);
  const MatrixXd loadings = combined_loadings(model);

  MatrixXd g_mean = MatrixXd::Zero(B, L), g_sd = MatrixXd::Zero(B, L);
  MatrixXd g_loadings = MatrixXd::Zero(J, L);
  VectorXd g_log_aux = VectorXd::Zero(model.likelihood.aux.size());
  MatrixXd G;
  double loglik = 0.0;
  for (int s = 0; s < S; ++s) {
    const MatrixXd f = mean + sd.cwiseProduct(eps[s]);
    MatrixXd E, mu;
    if (nonneg) {
      E = f.array().exp();
      mu = (E * loadings.transpose()).array().colwise() * nub.array();
    } else {
      mu = f * loadings.transpose();
    }
    loglik += log_lik_block(model.likelihood, Yb, mu, grad ? &G : nullptr, grad ? &g_log_aux : nullptr);
    if (!grad) continue;
    MatrixXd g_f;
    if (nonneg) {
      G = G.array().colwise() * nub.array();
      g_loadings.noalias() += G.transpose() * E;
      g_f = (G * loadings).cwiseProduct(E);
    } else {
      g_loadings.noalias() += G.transpose() * f;
      g_f = G * loadings;
    }
    g_mean += g_f;
    g_sd += g_f.cwiseProduct(eps[s]);
  }

  ElboTerms terms;
  terms.expected_loglik = scale * loglik / S;
  for (int l = 0; l < T; ++l) terms.kl_inducing += posts[l].kl();
  double klmf = 0.0;
  for (Index k = 0; k < K; ++k)
    for (Index b = 0; b < B; ++b) klmf += kl_meanfield(mf, batch[b], k);
  terms.kl_meanfield = scale * klmf;
  terms.value = terms.expected_loglik - terms.kl_inducing - terms.kl_meanfield;

  if (grad) {
    const double w = scale / S;
    g_mean *= w;
    g_sd *= w;
    g_loadings *= w;
    grad->W = g_loadings.leftCols(T);
    grad->V = g_loadings.rightCols(K);
    grad->log_aux = w * g_log_aux;
    for (int l = 0; l < T; ++l) {
      // d/dvar = d/dsd / (2 sd); clamped variances contribute nothing.
      VectorXd g_var(B);
      for (Index b = 0; b < B; ++b) g_var(b) = sd(b, l) > 0.0 ? g_sd(b, l) / (2.0 * sd(b, l)) : 0.0;
      grad->spatial[l] = posts[l].backward(g_mean.col(l), g_var, -1.0);
    }
    for (Index k = 0; k < K; ++k) {
      for (Index b = 0; b < B; ++b) {
        const Index i = batch[b];
        const double s2 = mf.prior_var(k), om = mf.omega(i, k), dm = mf.delta(i, k) - mf.prior_mean(k);
        // sd = exp(log_omega / 2), so d/dlog_omega = d/dsd * sd / 2.
        grad->mf_delta(i, k) += g_mean(b, T + k) - scale * dm / s2;
        grad->mf_log_omega(i, k) += 0.5 * g_sd(b, T + k) * sd(b, T + k) - scale * 0.5 * (om / s2 - 1.0);
        grad->mf_prior_mean(k) += scale * dm / s2;
        grad->mf_log_prior_var(k) -= scale * 0.5 * (1.0 - om / s2 - dm * dm / s2);
      }
    }
  }
  return terms;
}

double elbo(const FactorModel& model, const ObservationData& data, std::span<const Index> batch, int S,
            std::uint64_t seed, ModelGradient* grad) {
  return elbo_terms(model, data, batch, S, seed, grad).value;
}

double elbo(const FactorModel& model, const ObservationData& data, int S, std::uint64_t seed, ModelGradient* grad) {
  const auto rows = all_rows(data.rows());
  return elbo(model, data, rows, S, seed, grad);
}

}  // namespace nsf
