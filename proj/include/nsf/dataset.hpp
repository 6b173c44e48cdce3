#ifndef NSF_DATASET_HPP_
#define NSF_DATASET_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nsf/likelihoods.hpp"
#include "nsf/model.hpp"

namespace nsf {

enum class CountFormat { automatic, dense_csv, triplet };

struct LoadOptions {
  CountFormat format = CountFormat::automatic;
  double min_total_count = 100.0;  // observations below this total are dropped
};

/// Counts with coordinates. X holds coordinates rescaled to zero mean and
/// unit max-absolute-value per dimension; X_raw keeps the file values.
struct CountDataset {
  Eigen::MatrixXd Y;
  Eigen::MatrixXd X;
  Eigen::MatrixXd X_raw;
  Eigen::VectorXd coord_center;
  Eigen::VectorXd coord_scale;
  SizeFactors size_factors;
  std::vector<std::string> feature_names;
  std::vector<Eigen::Index> source_rows;  // row index in the input file

  Eigen::Index observations() const { return Y.rows(); }
  Eigen::Index features() const { return Y.cols(); }
  void validate() const;

  /// Raw counts with size factors, for count likelihoods.
  ObservationData counts_view() const;
  /// Log-normalized, centered data with unit size factors, for gaussian models.
  ObservationData normalized_view() const;
};

/// Dense CSV: header of feature names, one row of counts per observation.
/// Triplet: Matrix Market style coordinate text; '%' comment lines, then
/// "N J NNZ", then NNZ lines "i j value" with 1-based indices.
/// Coordinates: CSV with a header row and one row of D reals per observation.
CountDataset load_dataset(const std::filesystem::path& counts, const std::filesystem::path& coords,
                          const LoadOptions& opts = {});

/// Builds a dataset from in-memory matrices with the same validation,
/// filtering and rescaling as load_dataset.
CountDataset make_dataset(Eigen::MatrixXd Y, Eigen::MatrixXd X_raw, std::vector<std::string> feature_names,
                          double min_total_count = 0.0);

/// Applies a stored coordinate transform.
Eigen::MatrixXd rescale_coordinates(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& center,
                                    const Eigen::VectorXd& scale);

/// Poisson deviance of each feature against the constant-rate null
/// mu_ij = nu_i * sum_i y_ij / sum_i nu_i.
Eigen::VectorXd feature_deviances(const Eigen::MatrixXd& Y, const Eigen::VectorXd& nu);

/// Keeps the n_top features of highest null deviance (original order kept).
CountDataset select_features(const CountDataset& data, Eigen::Index n_top);

/// Keeps features by name, in the given order.
CountDataset select_features_by_name(const CountDataset& data, const std::vector<std::string>& names);

/// Rows scaled to the median total, log1p, columns centered.
Eigen::MatrixXd normalize_log(const Eigen::MatrixXd& Y);

struct Split {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> validation;
};

/// Uniform random disjoint split; both index lists come back sorted.
Split train_val_split(Eigen::Index n, double train_fraction, std::uint64_t seed);

/// Row subset; size factors are carried over rather than recomputed.
CountDataset subset_rows(const CountDataset& data, const std::vector<Eigen::Index>& rows);

void write_counts_csv(const std::filesystem::path& path, const Eigen::MatrixXd& Y,
                      const std::vector<std::string>& feature_names);
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& M,
                      const std::vector<std::string>& header);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double x);

}  // namespace nsf

#endif  // NSF_DATASET_HPP_
