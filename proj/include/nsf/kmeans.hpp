#ifndef NSF_KMEANS_HPP_
#define NSF_KMEANS_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "nsf/errors.hpp"

namespace nsf {

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 100;
};

template <typename Scalar>
struct KMeansResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> centroids;
  std::vector<Eigen::Index> assignment;
  Scalar inertia = std::numeric_limits<Scalar>::infinity();
};

namespace detail {

template <typename Scalar>
Eigen::Index nearest_row(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& C,
                         const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& x,
                         Scalar* dist2) {
  Eigen::Index best = 0;
  Scalar best_d = std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index k = 0; k < C.rows(); ++k) {
    const Scalar d = (C.row(k) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding; best of several restarts by
/// squared-Euclidean inertia.
template <typename Scalar>
KMeansResult<Scalar> kmeans(const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& X,
                            Eigen::Index k, std::uint64_t seed, const KMeansOptions& opts = {}) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = X.rows();
  if (k < 1 || k > n) throw ArgumentError("kmeans: cluster count must lie in [1, N]");

  std::mt19937_64 rng(seed);
  KMeansResult<Scalar> best;
  std::vector<Scalar> d2(n);

  for (int restart = 0; restart < opts.restarts; ++restart) {
    Matrix C(k, X.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    C.row(0) = X.row(pick(rng));
    for (Eigen::Index c = 1; c < k; ++c) {
      Scalar total = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        Scalar d = std::numeric_limits<Scalar>::infinity();
        for (Eigen::Index q = 0; q < c; ++q) d = std::min(d, (C.row(q) - X.row(i)).squaredNorm());
        d2[i] = d;
        total += d;
      }
      Eigen::Index chosen = pick(rng);
      if (total > 0) {
        std::uniform_real_distribution<Scalar> u(0, total);
        Scalar target = u(rng);
        for (Eigen::Index i = 0; i < n; ++i) {
          target -= d2[i];
          if (target <= 0) {
            chosen = i;
            break;
          }
        }
      }
      C.row(c) = X.row(chosen);
    }

    std::vector<Eigen::Index> assign(n, -1);
    Scalar inertia = 0;
    for (int it = 0; it < opts.max_iterations; ++it) {
      bool changed = false;
      inertia = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        Scalar d;
        const Eigen::Index a = detail::nearest_row<Scalar>(C, X.row(i), &d);
        inertia += d;
        if (a != assign[i]) {
          assign[i] = a;
          changed = true;
        }
      }
      if (!changed) break;
      Matrix sums = Matrix::Zero(k, X.cols());
      Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(assign[i]) += X.row(i);
        ++counts(assign[i]);
      }
      for (Eigen::Index c = 0; c < k; ++c) {
        if (counts(c) > 0) {
          C.row(c) = sums.row(c) / Scalar(counts(c));
        } else {
          // Empty cluster: reseed at the point farthest from its centroid.
          Eigen::Index far = 0;
          Scalar far_d = -1;
          for (Eigen::Index i = 0; i < n; ++i) {
            const Scalar d = (C.row(assign[i]) - X.row(i)).squaredNorm();
            if (d > far_d) {
              far_d = d;
              far = i;
            }
          }
          C.row(c) = X.row(far);
        }
      }
    }
    if (inertia < best.inertia) {
      best.centroids = C;
      best.assignment = assign;
      best.inertia = inertia;
    }
  }
  return best;
}

}  // namespace nsf

#endif  // NSF_KMEANS_HPP_
