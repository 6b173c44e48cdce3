#ifndef NSF_LIKELIHOODS_HPP_
#define NSF_LIKELIHOODS_HPP_

#include <Eigen/Dense>

#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "nsf/errors.hpp"

namespace nsf {

enum class LikelihoodFamily { poisson, negative_binomial, gaussian };

inline std::string_view to_string(LikelihoodFamily f) {
  switch (f) {
    case LikelihoodFamily::poisson: return "poi";
    case LikelihoodFamily::negative_binomial: return "nb";
    case LikelihoodFamily::gaussian: return "gau";
  }
  return "poi";
}

inline LikelihoodFamily likelihood_family_from_string(std::string_view s) {
  if (s == "poi" || s == "poisson") return LikelihoodFamily::poisson;
  if (s == "nb" || s == "negative_binomial") return LikelihoodFamily::negative_binomial;
  if (s == "gau" || s == "gaussian") return LikelihoodFamily::gaussian;
  throw ArgumentError("unknown likelihood: " + std::string(s));
}

/// Likelihood family plus per-feature auxiliary parameters: the variance
/// sigma_j^2 (gaussian) or the dispersion r_j (negative binomial, variance
/// mu + mu^2 / r_j). Poisson has no auxiliary parameters.
struct LikelihoodSpec {
  LikelihoodFamily family = LikelihoodFamily::poisson;
  Eigen::VectorXd aux;

  bool has_aux() const { return family != LikelihoodFamily::poisson; }

  void validate(Eigen::Index features) const {
    if (!has_aux()) return;
    if (aux.size() != features) throw ShapeError("LikelihoodSpec: aux must have one entry per feature");
    if (!(aux.array() > 0.0).all()) throw ParameterDomainError("LikelihoodSpec: aux entries must be positive");
  }
};

namespace detail {

inline bool is_nonnegative_integer(double y) { return y >= 0.0 && std::floor(y) == y && std::isfinite(y); }

// log(y!) with a table for small integer counts.
inline double log_factorial(double y) {
  constexpr int kTable = 4096;
  static const std::array<double, kTable> table = [] {
    std::array<double, kTable> t{};
    for (int k = 0; k < kTable; ++k) t[static_cast<std::size_t>(k)] = std::lgamma(k + 1.0);
    return t;
  }();
  if (y >= 0.0 && y < kTable && y == std::floor(y)) return table[static_cast<std::size_t>(y)];
  return std::lgamma(y + 1.0);
}

inline double poisson_ll(double y, double mu) { return y * std::log(mu) - mu - log_factorial(y); }

inline double nb_ll(double y, double mu, double r) {
  return std::lgamma(y + r) - std::lgamma(r) - log_factorial(y) + r * std::log(r / (r + mu)) +
         (y > 0.0 ? y * std::log(mu / (r + mu)) : 0.0);
}

inline double gaussian_ll(double y, double mu, double var) {
  const double e = y - mu;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * e * e / var;
}

}  // namespace detail

/// Log-likelihood of a single observation y with mean `mean` under feature j.
inline double log_lik(const LikelihoodSpec& spec, double y, double mean, Eigen::Index feature = 0) {
  switch (spec.family) {
    case LikelihoodFamily::poisson:
      if (!detail::is_nonnegative_integer(y) || !(mean > 0.0)) throw ArgumentError("log_lik: poisson domain violation");
      return detail::poisson_ll(y, mean);
    case LikelihoodFamily::negative_binomial: {
      if (!detail::is_nonnegative_integer(y) || !(mean > 0.0)) throw ArgumentError("log_lik: negative binomial domain violation");
      if (feature < 0 || feature >= spec.aux.size() || !(spec.aux(feature) > 0.0))
        throw ArgumentError("log_lik: missing or invalid dispersion");
      return detail::nb_ll(y, mean, spec.aux(feature));
    }
    case LikelihoodFamily::gaussian:
      if (!std::isfinite(y)) throw ArgumentError("log_lik: gaussian observation must be finite");
      if (feature < 0 || feature >= spec.aux.size() || !(spec.aux(feature) > 0.0))
        throw ArgumentError("log_lik: missing or invalid variance");
      return detail::gaussian_ll(y, mean, spec.aux(feature));
  }
  return 0.0;
}

/// Sum of log-likelihoods over a block of observations (rows) and all
/// features (columns). When `dmean` is non-null it receives d/dmean per
/// entry; when `daux_log` is non-null the derivative with respect to
/// log(aux_j) is accumulated into it. Count families floor the mean at the
/// smallest normal double so an all-zero loading row cannot produce NaNs.
inline double log_lik_block(const LikelihoodSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& Y,
                            const Eigen::Ref<const Eigen::MatrixXd>& mean, Eigen::MatrixXd* dmean,
                            Eigen::VectorXd* daux_log) {
  const Eigen::Index n = Y.rows(), J = Y.cols();
  if (mean.rows() != n || mean.cols() != J) throw ShapeError("log_lik_block: shape mismatch");
  if (dmean) dmean->resize(n, J);
  constexpr double floor = std::numeric_limits<double>::min();
  double total = 0.0;
  for (Eigen::Index j = 0; j < J; ++j) {
    double aux_acc = 0.0;
    switch (spec.family) {
      case LikelihoodFamily::poisson:
        for (Eigen::Index i = 0; i < n; ++i) {
          const double y = Y(i, j), mu = std::max(mean(i, j), floor);
          total += y * std::log(mu) - mu - detail::log_factorial(y);
          if (dmean) (*dmean)(i, j) = y / mu - 1.0;
        }
        break;
      case LikelihoodFamily::negative_binomial: {
        const double r = spec.aux(j);
        const double dig_r = boost::math::digamma(r);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double y = Y(i, j), mu = std::max(mean(i, j), floor);
          total += detail::nb_ll(y, mu, r);
          if (dmean) (*dmean)(i, j) = y / mu - (y + r) / (r + mu);
          if (daux_log) {
            const double dr = boost::math::digamma(y + r) - dig_r + std::log(r / (r + mu)) + 1.0 - (y + r) / (r + mu);
            aux_acc += r * dr;
          }
        }
        break;
      }
      case LikelihoodFamily::gaussian: {
        const double var = spec.aux(j);
        const double c = -0.5 * std::log(2.0 * std::numbers::pi * var);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double e = Y(i, j) - mean(i, j);
          total += c - 0.5 * e * e / var;
          if (dmean) (*dmean)(i, j) = e / var;
          if (daux_log) aux_acc += -0.5 + 0.5 * e * e / var;
        }
        break;
      }
    }
    if (daux_log && spec.has_aux()) (*daux_log)(j) += aux_acc;
  }
  return total;
}

/// Per-observation size factors nu_i = total_i / median(totals).
struct SizeFactors {
  Eigen::VectorXd nu;
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw ArgumentError("median of empty sequence");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

inline SizeFactors size_factors(const Eigen::Ref<const Eigen::MatrixXd>& Y) {
  const Eigen::VectorXd totals = Y.rowwise().sum();
  if (totals.size() == 0) throw ArgumentError("size_factors: no observations");
  for (Eigen::Index i = 0; i < totals.size(); ++i) {
    if (!(totals(i) > 0.0)) {
      throw DegenerateInputError("size_factors: observation " + std::to_string(i) + " has zero total count");
    }
  }
  const double med = median(std::vector<double>(totals.begin(), totals.end()));
  return {totals / med};
}

/// 2 * sum[y log(y / mu) - (y - mu)], with 0 log 0 = 0.
inline double poisson_deviance(const Eigen::Ref<const Eigen::MatrixXd>& Y,
                               const Eigen::Ref<const Eigen::MatrixXd>& Mhat) {
  if (Y.rows() != Mhat.rows() || Y.cols() != Mhat.cols()) throw ShapeError("poisson_deviance: shape mismatch");
  double dev = 0.0;
  for (Eigen::Index j = 0; j < Y.cols(); ++j) {
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
      const double y = Y(i, j), mu = Mhat(i, j);
      if (!(mu > 0.0)) throw ArgumentError("poisson_deviance: predicted means must be positive");
      if (y < 0.0) throw ArgumentError("poisson_deviance: counts must be nonnegative");
      dev += (y > 0.0 ? y * std::log(y / mu) : 0.0) - (y - mu);
    }
  }
  return std::max(0.0, 2.0 * dev);
}

}  // namespace nsf

#endif  // NSF_LIKELIHOODS_HPP_
