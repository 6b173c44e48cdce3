#ifndef NSF_POSTPROCESS_HPP_
#define NSF_POSTPROCESS_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "nsf/errors.hpp"

namespace nsf {

enum class SimplexStyle { spde, lda };

/// Simplex-normalized nonnegative factorization.
///   spde: columns of F_hat and rows of W_hat sum to one, Lambda = F_hat W_hat' diag(scale), |scale| = J
///   lda:  columns of W_hat and rows of F_hat sum to one, Lambda = diag(scale) F_hat W_hat', |scale| = N
template <typename Scalar>
struct ProcessedFactorization {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> F_hat;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> W_hat;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> scale;
  SimplexStyle style = SimplexStyle::spde;

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> reconstruct() const {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> lam = F_hat * W_hat.transpose();
    if (style == SimplexStyle::spde) return lam * scale.asDiagonal();
    return scale.asDiagonal() * lam;
  }
};

namespace detail {

// Normalizes so `first` has unit column sums and `second` unit row sums.
// Rows of `second` summing to zero are kept at zero (scale 0) when allowed.
template <typename Scalar>
void simplex_pass(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& first,
                  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& second,
                  Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& scale, bool allow_zero_rows, const char* what) {
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> colsum = first.colwise().sum();
  if (!(colsum.array() > Scalar(0)).all()) {
    throw DegenerateInputError(std::string("simplex_normalize: all-zero component in ") + what);
  }
  first = first.array().rowwise() / colsum.array();
  second = second.array().rowwise() * colsum.array();
  scale = second.rowwise().sum();
  for (Eigen::Index r = 0; r < second.rows(); ++r) {
    if (scale(r) > Scalar(0)) {
      second.row(r) /= scale(r);
    } else if (!allow_zero_rows) {
      throw DegenerateInputError("simplex_normalize: all-zero row at index " + std::to_string(r));
    }
  }
}

}  // namespace detail

template <typename Scalar>
ProcessedFactorization<Scalar> simplex_normalize(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& F,
                                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& W,
                                                 SimplexStyle style, bool allow_zero_rows = false) {
  if (F.cols() != W.cols()) throw ShapeError("simplex_normalize: F and W need the same number of components");
  if ((F.array() < Scalar(0)).any() || (W.array() < Scalar(0)).any()) {
    throw ArgumentError("simplex_normalize: inputs must be nonnegative");
  }
  ProcessedFactorization<Scalar> out{F, W, {}, style};
  if (style == SimplexStyle::spde) {
    detail::simplex_pass<Scalar>(out.F_hat, out.W_hat, out.scale, allow_zero_rows, "F");
  } else {
    detail::simplex_pass<Scalar>(out.W_hat, out.F_hat, out.scale, allow_zero_rows, "W");
  }
  return out;
}

/// Indices of components whose factor column or loading column sums to zero.
/// Such components contribute nothing to Lambda.
template <typename Scalar>
std::vector<Eigen::Index> degenerate_components(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& F,
                                                const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& W) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index l = 0; l < F.cols(); ++l)
    if (!(F.col(l).sum() > Scalar(0)) || !(W.col(l).sum() > Scalar(0))) out.push_back(l);
  return out;
}

template <typename Scalar>
struct SpatialScores {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gamma;  // per feature
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rho;    // per observation
  std::vector<std::string> warnings;
};

namespace detail {

template <typename Scalar>
struct Concatenated {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> A, B;
  Eigen::Index spatial = 0;  // leading spatial columns after dropping
  std::vector<std::string> warnings;
};

template <typename Scalar>
Concatenated<Scalar> concatenate(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& W,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& V,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& F,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& H) {
  if (W.cols() != F.cols() || V.cols() != H.cols() || W.rows() != V.rows() || F.rows() != H.rows()) {
    throw ShapeError("spatial scores: inconsistent block shapes");
  }
  const Eigen::Index T = W.cols(), L = W.cols() + V.cols();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> A(F.rows(), L), B(W.rows(), L);
  A << F, H;
  B << W, V;
  Concatenated<Scalar> out;
  const auto bad = degenerate_components<Scalar>(A, B);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index l = 0; l < L; ++l) {
    if (std::find(bad.begin(), bad.end(), l) != bad.end()) {
      out.warnings.push_back("dropped all-zero component " + std::to_string(l));
      continue;
    }
    keep.push_back(l);
    if (l < T) ++out.spatial;
  }
  out.A.resize(A.rows(), static_cast<Eigen::Index>(keep.size()));
  out.B.resize(B.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    out.A.col(static_cast<Eigen::Index>(c)) = A.col(keep[c]);
    out.B.col(static_cast<Eigen::Index>(c)) = B.col(keep[c]);
  }
  return out;
}

}  // namespace detail

/// gamma_j: share of feature j's SPDE-normalized loadings on spatial components.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> feature_spatial_scores(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& W,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& V,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& F,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& H, std::vector<std::string>* warnings = nullptr) {
  auto cat = detail::concatenate<Scalar>(W, V, F, H);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gamma = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(W.rows());
  if (cat.A.cols() > 0) {
    const auto p = simplex_normalize<Scalar>(cat.A, cat.B, SimplexStyle::spde, true);
    gamma = p.W_hat.leftCols(cat.spatial).rowwise().sum();
    for (Eigen::Index j = 0; j < p.scale.size(); ++j)
      if (!(p.scale(j) > Scalar(0))) cat.warnings.push_back("feature " + std::to_string(j) + " has all-zero loadings");
  }
  if (warnings) warnings->insert(warnings->end(), cat.warnings.begin(), cat.warnings.end());
  return gamma.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
}

/// rho_i: share of observation i's LDA-normalized factor values on spatial components.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> observation_spatial_scores(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& W,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& V,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& F,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& H, std::vector<std::string>* warnings = nullptr) {
  auto cat = detail::concatenate<Scalar>(W, V, F, H);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rho = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(F.rows());
  if (cat.A.cols() > 0) {
    const auto p = simplex_normalize<Scalar>(cat.A, cat.B, SimplexStyle::lda, true);
    rho = p.F_hat.leftCols(cat.spatial).rowwise().sum();
    for (Eigen::Index i = 0; i < p.scale.size(); ++i)
      if (!(p.scale(i) > Scalar(0))) cat.warnings.push_back("observation " + std::to_string(i) + " has all-zero factors");
  }
  if (warnings) warnings->insert(warnings->end(), cat.warnings.begin(), cat.warnings.end());
  return rho.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
}

template <typename Scalar>
SpatialScores<Scalar> spatial_scores(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& W,
                                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& V,
                                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& F,
                                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& H) {
  SpatialScores<Scalar> s;
  s.gamma = feature_spatial_scores<Scalar>(W, V, F, H, &s.warnings);
  s.rho = observation_spatial_scores<Scalar>(W, V, F, H, &s.warnings);
  return s;
}

/// Zero-based indices of the k largest entries of column l, descending,
/// ties broken by ascending index.
template <typename Derived>
std::vector<Eigen::Index> top_features(const Eigen::MatrixBase<Derived>& W_hat, Eigen::Index l, Eigen::Index k) {
  const Eigen::Index J = W_hat.rows();
  if (l < 0 || l >= W_hat.cols()) throw ArgumentError("top_features: component index out of range");
  if (k < 1 || k > J) throw ArgumentError("top_features: k must lie in [1, J]");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(J));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return W_hat(a, l) > W_hat(b, l); });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

}  // namespace nsf

#endif  // NSF_POSTPROCESS_HPP_
