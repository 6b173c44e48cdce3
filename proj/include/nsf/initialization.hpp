#ifndef NSF_INITIALIZATION_HPP_
#define NSF_INITIALIZATION_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace nsf {

struct SpatialGraphConfig {
  int k = 6;
};

struct InitialFactors {
  Eigen::MatrixXd F;  // N x L
  Eigen::MatrixXd W;  // J x L
};

/// Real-valued: rank-L truncated SVD, F = U diag(sigma), W = V.
/// Nonnegative: KL-divergence NMF by multiplicative updates (NNDSVDa start).
InitialFactors init_factors(const Eigen::MatrixXd& Y, int L, bool nonnegative, std::uint64_t seed,
                            int nmf_iterations = 200);

/// NNDSVD with zeros replaced by the mean of Y ("nndsvda").
InitialFactors nndsvda(const Eigen::MatrixXd& Y, int L);

/// KL-divergence NMF multiplicative updates starting from `start`.
InitialFactors nmf_kl(const Eigen::MatrixXd& Y, InitialFactors start, int iterations);

/// Symmetrized binary k-nearest-neighbour adjacency as an edge list (i < j).
std::vector<std::pair<Eigen::Index, Eigen::Index>> knn_graph(const Eigen::MatrixXd& X, int k);

/// Moran's I of v on the symmetrized binary kNN graph of X.
double morans_i(const Eigen::VectorXd& v, const Eigen::MatrixXd& X, const SpatialGraphConfig& cfg = {});

/// Same statistic against a prebuilt edge list.
double morans_i(const Eigen::VectorXd& v, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& edges);

struct ComponentAssignment {
  InitialFactors factors;           // columns reordered, spatial block first
  std::vector<Eigen::Index> order;  // original column index of each output column
  std::vector<double> morans;       // statistic per output column (-inf for constant columns)
};

/// Sorts factor columns (and matching loading columns) by decreasing Moran's
/// I; ties keep the original column order. The first T columns are spatial.
ComponentAssignment assign_spatial_components(const InitialFactors& init, const Eigen::MatrixXd& X, int T,
                                              const SpatialGraphConfig& cfg = {});

}  // namespace nsf

#endif  // NSF_INITIALIZATION_HPP_
