#ifndef NSF_ARCHIVE_HPP_
#define NSF_ARCHIVE_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "nsf/model.hpp"

namespace nsf {

/// Everything needed to reuse a fitted model on new data.
struct ModelArchive {
  FactorModel model;
  std::vector<std::string> feature_names;
  Eigen::VectorXd coord_center;  // coordinate transform applied before fitting
  Eigen::VectorXd coord_scale;
  Eigen::MatrixXd X_raw_train;   // training coordinates in file units
  Eigen::VectorXd nu_train;      // training size factors
  nlohmann::json config;         // free-form echo of the run configuration
};

inline constexpr char kArchiveMagic[8] = {'N', 'S', 'F', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kArchiveMajor = 1;
inline constexpr std::uint32_t kArchiveMinor = 0;

/// Binary layout (all integers and reals little-endian):
///   8 bytes   magic "NSFMODEL"
///   u32, u32  major and minor version
///   u64       length of the JSON header, then the UTF-8 JSON text
///   u64       number of tensor blocks, then per block:
///             u32 name length, name bytes, u64 rows, u64 cols,
///             rows * cols f64 values in column-major order
/// The JSON header holds the model structure (L, T, likelihood, kernel kinds,
/// nonnegativity, S), feature names and the run configuration. Tensor names:
///   W, V, aux, X_train, X_raw_train, nu_train, coord_center, coord_scale,
///   mf/delta, mf/omega, mf/prior_mean, mf/prior_var,
///   spatial/<l>/{Z, delta, omega_chol, beta0, beta1, amplitude, lengthscale}
/// Readers reject a different major version.
void save_archive(const std::filesystem::path& path, const ModelArchive& archive);
ModelArchive load_archive(const std::filesystem::path& path);

}  // namespace nsf

#endif  // NSF_ARCHIVE_HPP_
