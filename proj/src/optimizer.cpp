#include "nsf/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "nsf/errors.hpp"

namespace nsf {

void FitConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ArgumentError("FitConfig: learning_rate must be positive");
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw ArgumentError("FitConfig: rel_tol must lie in (0, 1)");
  if (max_steps < 0) throw ArgumentError("FitConfig: max_steps must be nonnegative");
  if (S < 1) throw ArgumentError("FitConfig: S must be at least 1");
  if (smoothing_window < 1) throw ArgumentError("FitConfig: smoothing_window must be positive");
  if (batch_size < 0) throw ArgumentError("FitConfig: batch_size must be nonnegative");
}

void adam_step(Eigen::Ref<VectorXd> params, const VectorXd& grads, AdamMoments& moments, int t,
               const FitConfig& config) {
  if (t < 1) throw ArgumentError("adam_step: t must be at least 1");
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient length mismatch");
  if (!grads.allFinite()) throw DivergedFitError("adam_step: non-finite gradient");
  if (moments.first.size() != params.size()) moments.first = VectorXd::Zero(params.size());
  if (moments.second.size() != params.size()) moments.second = VectorXd::Zero(params.size());
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  moments.first = b1 * moments.first + (1.0 - b1) * grads;
  moments.second = b2 * moments.second + (1.0 - b2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
  params.array() -= config.learning_rate * (moments.first.array() / c1) /
                    ((moments.second.array() / c2).sqrt() + config.adam_epsilon);
}

MatrixXd project_nonnegative(const MatrixXd& m) { return m.cwiseMax(0.0); }

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw ParameterDomainError("softplus_inverse: argument must be positive");
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

ParameterLayout::ParameterLayout(const FactorModel& model) {
  auto add = [&](Index n, bool variational) {
    blocks_.push_back({size_, n, variational});
    size_ += n;
  };
  add(model.W.size(), false);
  add(model.V.size(), false);
  loadings_size_ = model.W.size() + model.V.size();
  for (const auto& s : model.spatial) {
    const Index M = s.inducing_count();
    add(1 + s.beta1.size() + 2, false);
    add(M, true);
    add(M * (M + 1) / 2, true);
  }
  add(model.meanfield.delta.size(), true);
  add(model.meanfield.omega.size(), true);
  add(model.meanfield.prior_mean.size() + model.meanfield.prior_var.size(), false);
  add(model.likelihood.has_aux() ? model.likelihood.aux.size() : 0, false);
}

VectorXd ParameterLayout::trainable_mask(bool variational_only) const {
  VectorXd mask = VectorXd::Ones(size_);
  if (!variational_only) return mask;
  for (const auto& b : blocks_)
    if (!b.variational) mask.segment(b.offset, b.size).setZero();
  return mask;
}

VectorXd ParameterLayout::pack(const FactorModel& model) const {
  VectorXd x(size_);
  Index o = 0;
  auto put = [&](const auto& m) {
    x.segment(o, m.size()) = m.reshaped();
    o += m.size();
  };
  put(model.W);
  put(model.V);
  for (const auto& s : model.spatial) {
    x(o++) = s.beta0;
    put(s.beta1);
    x(o++) = std::log(s.kernel.amplitude);
    x(o++) = std::log(s.kernel.lengthscale);
    put(s.delta);
    const Index M = s.inducing_count();
    for (Index c = 0; c < M; ++c) {
      x(o++) = softplus_inverse(s.omega_chol(c, c));
      for (Index r = c + 1; r < M; ++r) x(o++) = s.omega_chol(r, c);
    }
  }
  const auto& mf = model.meanfield;
  put(mf.delta);
  put(VectorXd(mf.omega.reshaped().array().log()));
  put(mf.prior_mean);
  put(VectorXd(mf.prior_var.array().log()));
  if (model.likelihood.has_aux()) put(VectorXd(model.likelihood.aux.array().log()));
  return x;
}

void ParameterLayout::unpack(const VectorXd& x, FactorModel& model) const {
  if (x.size() != size_) throw ShapeError("ParameterLayout::unpack: length mismatch");
  Index o = 0;
  auto take = [&](auto& m) {
    m.reshaped() = x.segment(o, m.size());
    o += m.size();
  };
  take(model.W);
  take(model.V);
  for (auto& s : model.spatial) {
    s.beta0 = x(o++);
    take(s.beta1);
    s.kernel.amplitude = std::exp(x(o++));
    s.kernel.lengthscale = std::exp(x(o++));
    take(s.delta);
    const Index M = s.inducing_count();
    for (Index c = 0; c < M; ++c) {
      s.omega_chol(c, c) = softplus(x(o++));
      for (Index r = c + 1; r < M; ++r) s.omega_chol(r, c) = x(o++);
    }
  }
  auto& mf = model.meanfield;
  take(mf.delta);
  mf.omega.reshaped() = x.segment(o, mf.omega.size()).array().exp();
  o += mf.omega.size();
  take(mf.prior_mean);
  mf.prior_var = x.segment(o, mf.prior_var.size()).array().exp();
  o += mf.prior_var.size();
  if (model.likelihood.has_aux()) {
    model.likelihood.aux = x.segment(o, model.likelihood.aux.size()).array().exp();
    o += model.likelihood.aux.size();
  }
}

VectorXd ParameterLayout::pack_gradient(const ModelGradient& g, const FactorModel& model) const {
  VectorXd x(size_);
  Index o = 0;
  auto put = [&](const auto& m) {
    x.segment(o, m.size()) = m.reshaped();
    o += m.size();
  };
  put(g.W);
  put(g.V);
  for (std::size_t l = 0; l < model.spatial.size(); ++l) {
    const auto& s = model.spatial[l];
    const auto& sg = g.spatial[l];
    x(o++) = sg.beta0;
    put(sg.beta1);
    x(o++) = sg.log_amplitude;
    x(o++) = sg.log_lengthscale;
    put(sg.delta);
    const Index M = s.inducing_count();
    for (Index c = 0; c < M; ++c) {
      // d softplus(r) / dr = 1 - exp(-softplus(r))
      x(o++) = sg.omega_chol(c, c) * -std::expm1(-s.omega_chol(c, c));
      for (Index r = c + 1; r < M; ++r) x(o++) = sg.omega_chol(r, c);
    }
  }
  put(g.mf_delta);
  put(g.mf_log_omega);
  put(g.mf_prior_mean);
  put(g.mf_log_prior_var);
  if (model.likelihood.has_aux()) put(g.log_aux);
  return x;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t step) {
  std::uint64_t x = seed * 0x9e3779b97f4a7c15ULL + step + 0x632be59bd9b4e019ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

FitResult fit(FactorModel model, const ObservationData& data, const FitConfig& config) {
  config.validate();
  model.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const ParameterLayout layout(model);
  const VectorXd mask = layout.trainable_mask(config.variational_only);
  VectorXd x = layout.pack(model);
  AdamMoments moments;

  const Index N = data.rows();
  const bool minibatch = config.batch_size > 0 && config.batch_size < N;
  std::vector<Index> rows = all_rows(N);
  std::mt19937_64 batch_rng(mix_seed(config.seed, 0xba7c4ULL));

  FitTrace trace;
  const int w = config.smoothing_window;
  ModelGradient grad;
  for (int step = 1; step <= config.max_steps; ++step) {
    std::span<const Index> batch(rows);
    if (minibatch) {
      std::shuffle(rows.begin(), rows.end(), batch_rng);
      batch = std::span<const Index>(rows.data(), static_cast<std::size_t>(config.batch_size));
    }
    const double value = elbo(model, data, batch, config.S, mix_seed(config.seed, step), &grad);
    if (!std::isfinite(value)) throw DivergedFitError("fit: non-finite ELBO at step " + std::to_string(step));
    trace.elbo.push_back(value);
    trace.steps = step;
    if (config.on_step) config.on_step(step, value);

    const VectorXd g = -layout.pack_gradient(grad, model).cwiseProduct(mask);
    adam_step(x, g, moments, step, config);
    if (model.spec.nonnegative) {
      x.head(layout.loadings_size()) = x.head(layout.loadings_size()).cwiseMax(0.0);
    }
    layout.unpack(x, model);

    const int n = static_cast<int>(trace.elbo.size());
    if (n >= 2 * w) {
      const double now = std::accumulate(trace.elbo.end() - w, trace.elbo.end(), 0.0) / w;
      const double prev = std::accumulate(trace.elbo.end() - 2 * w, trace.elbo.end() - w, 0.0) / w;
      if (std::abs(now - prev) < config.rel_tol * std::abs(prev)) {
        trace.converged = true;
        break;
      }
    }
  }
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(trace)};
}

double check_gradients(const std::function<double(const VectorXd&)>& objective, const VectorXd& analytic,
                       const VectorXd& x, double eps) {
  if (analytic.size() != x.size()) throw ShapeError("check_gradients: gradient length mismatch");
  double worst = 0.0;
  VectorXd probe = x;
  for (Index k = 0; k < x.size(); ++k) {
    probe(k) = x(k) + eps;
    const double up = objective(probe);
    probe(k) = x(k) - eps;
    const double down = objective(probe);
    probe(k) = x(k);
    const double fd = (up - down) / (2.0 * eps);
    const double denom = std::max({1.0, std::abs(fd), std::abs(analytic(k))});
    worst = std::max(worst, std::abs(fd - analytic(k)) / denom);
  }
  return worst;
}

double check_gradients(const FactorModel& model, const ObservationData& data, double eps, int S,
                       std::uint64_t seed) {
  const ParameterLayout layout(model);
  ModelGradient grad;
  elbo(model, data, S, seed, &grad);
  const VectorXd analytic = layout.pack_gradient(grad, model);
  FactorModel work = model;
  auto objective = [&](const VectorXd& x) {
    layout.unpack(x, work);
    return elbo(work, data, S, seed);
  };
  return check_gradients(objective, analytic, layout.pack(model), eps);
}

}  // namespace nsf
