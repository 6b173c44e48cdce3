#include "nsf/initialization.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nsf/errors.hpp"

namespace nsf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct TruncatedSvd {
  MatrixXd U;
  VectorXd sigma;
  MatrixXd V;
};

TruncatedSvd truncated_svd(const MatrixXd& Y, int L) {
  Eigen::BDCSVD<MatrixXd> svd(Y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  TruncatedSvd out{svd.matrixU().leftCols(L), svd.singularValues().head(L), svd.matrixV().leftCols(L)};
  // Deterministic signs: the largest-magnitude loading of each component is positive.
  for (int l = 0; l < L; ++l) {
    Index idx;
    out.V.col(l).cwiseAbs().maxCoeff(&idx);
    if (out.V(idx, l) < 0) {
      out.V.col(l) *= -1.0;
      out.U.col(l) *= -1.0;
    }
  }
  return out;
}

}  // namespace

InitialFactors nndsvda(const MatrixXd& Y, int L) {
  const TruncatedSvd svd = truncated_svd(Y, L);
  const Index N = Y.rows(), J = Y.cols();
  InitialFactors out{MatrixXd::Zero(N, L), MatrixXd::Zero(J, L)};
  out.F.col(0) = std::sqrt(svd.sigma(0)) * svd.U.col(0).cwiseAbs();
  out.W.col(0) = std::sqrt(svd.sigma(0)) * svd.V.col(0).cwiseAbs();
  for (int l = 1; l < L; ++l) {
    const VectorXd xp = svd.U.col(l).cwiseMax(0.0), xn = (-svd.U.col(l)).cwiseMax(0.0);
    const VectorXd yp = svd.V.col(l).cwiseMax(0.0), yn = (-svd.V.col(l)).cwiseMax(0.0);
    const double xpn = xp.norm(), ypn = yp.norm(), xnn = xn.norm(), ynn = yn.norm();
    const double mp = xpn * ypn, mn = xnn * ynn;
    VectorXd u, v;
    double sig;
    if (mp > mn) {
      u = xp / xpn;
      v = yp / ypn;
      sig = mp;
    } else {
      u = xn / xnn;
      v = yn / ynn;
      sig = mn;
    }
    if (!(sig > 0.0)) continue;
    const double lbd = std::sqrt(svd.sigma(l) * sig);
    out.F.col(l) = lbd * u;
    out.W.col(l) = lbd * v;
  }
  const double avg = Y.mean();
  constexpr double eps = 1e-6;
  out.F = out.F.unaryExpr([&](double x) { return x < eps ? avg : x; });
  out.W = out.W.unaryExpr([&](double x) { return x < eps ? avg : x; });
  return out;
}

InitialFactors nmf_kl(const MatrixXd& Y, InitialFactors start, int iterations) {
  MatrixXd& F = start.F;
  MatrixXd& W = start.W;
  constexpr double tiny = 1e-12;
  MatrixXd ratio(Y.rows(), Y.cols());
  for (int it = 0; it < iterations; ++it) {
    ratio.noalias() = F * W.transpose();
    ratio = Y.array() / ratio.array().max(tiny);
    const Eigen::RowVectorXd wsum = W.colwise().sum().cwiseMax(tiny);
    F = F.cwiseProduct(ratio * W).array().rowwise() / wsum.array();

    ratio.noalias() = F * W.transpose();
    ratio = Y.array() / ratio.array().max(tiny);
    const Eigen::RowVectorXd fsum = F.colwise().sum().cwiseMax(tiny);
    W = W.cwiseProduct(ratio.transpose() * F).array().rowwise() / fsum.array();
  }
  return start;
}

InitialFactors init_factors(const MatrixXd& Y, int L, bool nonnegative, std::uint64_t /*seed*/,
                            int nmf_iterations) {
  if (L < 1 || L > std::min(Y.rows(), Y.cols())) {
    throw ArgumentError("init_factors: L must lie in [1, min(N, J)]");
  }
  if (!nonnegative) {
    const TruncatedSvd svd = truncated_svd(Y, L);
    return {svd.U * svd.sigma.asDiagonal(), svd.V};
  }
  if ((Y.array() < 0.0).any()) throw ArgumentError("init_factors: NMF needs a nonnegative matrix");
  return nmf_kl(Y, nndsvda(Y, L), nmf_iterations);
}

std::vector<std::pair<Index, Index>> knn_graph(const MatrixXd& X, int k) {
  const Index n = X.rows();
  if (k < 1 || k >= n) throw ArgumentError("knn_graph: need 1 <= k < N");
  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(static_cast<std::size_t>(n * k));
  std::vector<Index> idx(static_cast<std::size_t>(n));
  VectorXd d2(n);
  for (Index i = 0; i < n; ++i) {
    d2 = (X.rowwise() - X.row(i)).rowwise().squaredNorm();
    std::iota(idx.begin(), idx.end(), Index{0});
    auto closer = [&](Index a, Index b) { return d2(a) < d2(b) || (d2(a) == d2(b) && a < b); };
    // k + 1 to account for the point itself.
    std::partial_sort(idx.begin(), idx.begin() + k + 1, idx.end(), closer);
    int taken = 0;
    for (Index c = 0; c <= k && taken < k; ++c) {
      const Index j = idx[static_cast<std::size_t>(c)];
      if (j == i) continue;
      edges.emplace_back(std::min(i, j), std::max(i, j));
      ++taken;
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

double morans_i(const VectorXd& v, const std::vector<std::pair<Index, Index>>& edges) {
  const Index n = v.size();
  if (edges.empty()) throw DegenerateInputError("morans_i: empty neighbour graph");
  const VectorXd z = v.array() - v.mean();
  const double ss = z.squaredNorm();
  const double tol = 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff());
  if (!(ss > tol * tol * static_cast<double>(n))) throw DegenerateInputError("morans_i: zero-variance input");
  double cross = 0.0;
  for (const auto& [i, j] : edges) cross += z(i) * z(j);
  // Binary symmetric weights: sum_ij w_ij = 2 |E|, sum_ij w_ij z_i z_j = 2 cross.
  return static_cast<double>(n) / (2.0 * static_cast<double>(edges.size())) * (2.0 * cross) / ss;
}

double morans_i(const VectorXd& v, const MatrixXd& X, const SpatialGraphConfig& cfg) {
  if (v.size() != X.rows()) throw ShapeError("morans_i: value and coordinate counts differ");
  return morans_i(v, knn_graph(X, cfg.k));
}

ComponentAssignment assign_spatial_components(const InitialFactors& init, const MatrixXd& X, int T,
                                              const SpatialGraphConfig& cfg) {
  const Index L = init.F.cols();
  if (T < 0 || T > L) throw ArgumentError("assign_spatial_components: T must lie in [0, L]");
  if (init.W.cols() != L) throw ShapeError("assign_spatial_components: factor/loading column mismatch");
  const auto edges = knn_graph(X, cfg.k);
  std::vector<double> stat(static_cast<std::size_t>(L));
  for (Index l = 0; l < L; ++l) {
    try {
      stat[l] = morans_i(init.F.col(l), edges);
    } catch (const DegenerateInputError&) {
      stat[l] = -std::numeric_limits<double>::infinity();
    }
  }
  std::vector<Index> order(static_cast<std::size_t>(L));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return stat[a] > stat[b]; });

  ComponentAssignment out;
  out.factors.F.resize(init.F.rows(), L);
  out.factors.W.resize(init.W.rows(), L);
  for (Index c = 0; c < L; ++c) {
    out.factors.F.col(c) = init.F.col(order[c]);
    out.factors.W.col(c) = init.W.col(order[c]);
    out.morans.push_back(stat[order[c]]);
  }
  out.order = std::move(order);
  return out;
}

}  // namespace nsf
