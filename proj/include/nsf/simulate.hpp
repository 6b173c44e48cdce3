#ifndef NSF_SIMULATE_HPP_
#define NSF_SIMULATE_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <string_view>

namespace nsf {

enum class SimKind { ggblocks, quilt };

SimKind sim_kind_from_string(std::string_view s);

struct SimConfig {
  int side = 30;  // grid side length
  Eigen::Index features = 500;
  double spatial_active = 11.0;
  double background = 0.1;
  double nonspatial_active = 9.0;
  int nonspatial_patterns = 3;
  double nonspatial_probability = 0.2;
  double nb_shape = 10.0;

  void validate() const;
};

SimConfig ggblocks_config();  // 30 x 30 grid
SimConfig quilt_config();     // 36 x 36 grid

struct SimDataset {
  Eigen::MatrixXd Y;                      // N x J counts
  Eigen::MatrixXd X;                      // N x 2 grid coordinates (column, row)
  Eigen::MatrixXd spatial_masks;          // N x 4, binary
  Eigen::MatrixXd nonspatial_patterns;    // N x 3, binary
  Eigen::VectorXi spatial_assignment;     // J, pattern index of each feature
  Eigen::VectorXi nonspatial_assignment;  // J
};

/// Binary N x 4 masks for the given layout on a side x side grid (row-major
/// cell order).
///
/// ggblocks, drawn on a 6 x 6 template and scaled up (rows, cols):
///   0 cross          (0,1) (1,0) (1,1) (1,2) (2,1)
///   1 square outline (0,3..5) (1,3) (1,5) (2,3..5)
///   2 diagonal bar   (3,0) (3,1) (4,1) (4,2) (5,2)
///   3 L-shape        (3,3) (4,3) (5,3) (5,4) (5,5)
/// quilt, overlapping rectangles on a 36 x 36 template [row range) x [col range):
///   0 [0,18) x [0,24)   1 [0,24) x [18,36)   2 [18,36) x [12,36)   3 [12,36) x [0,18)
Eigen::MatrixXd pattern_masks(SimKind kind, int side);

SimDataset simulate(SimKind kind, const SimConfig& cfg, std::uint64_t seed);
SimDataset simulate_ggblocks(const SimConfig& cfg, std::uint64_t seed);
SimDataset simulate_quilt(const SimConfig& cfg, std::uint64_t seed);

}  // namespace nsf

#endif  // NSF_SIMULATE_HPP_
