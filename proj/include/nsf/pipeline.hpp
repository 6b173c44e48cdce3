#ifndef NSF_PIPELINE_HPP_
#define NSF_PIPELINE_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nsf/archive.hpp"
#include "nsf/dataset.hpp"
#include "nsf/model.hpp"
#include "nsf/optimizer.hpp"
#include "nsf/simulate.hpp"

namespace nsf {

struct DevianceSummary {
  double total = 0.0;
  double per_observation = 0.0;
  Index observations = 0;
};

/// Held-out and in-sample fit quality of one model.
struct Evaluation {
  std::optional<DevianceSummary> train;
  std::optional<DevianceSummary> validation;
  double sparsity = 0.0;
  std::vector<std::string> warnings;
};

struct RunReport {
  nlohmann::json config;
  std::vector<double> elbo_trace;
  bool converged = false;
  int steps = 0;
  Evaluation evaluation;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;

  /// Layout: {"config", "metrics", "seed", "wall_seconds"}. Everything that
  /// depends only on inputs and seeds lives under "metrics".
  nlohmann::json to_json() const;
};

/// Fraction of exactly-zero entries of [W V].
double loadings_sparsity(const FactorModel& model);

DevianceSummary deviance_summary(const MatrixXd& Y, const MatrixXd& Mhat);

/// Poisson deviance on the training rows (in-sample posterior means) and on
/// the validation rows, whose coordinates must already be in the model's
/// frame. Models without spatial factors predict new rows from their prior
/// means and get a warning; gaussian models have no count deviance. Either
/// dataset may be null.
Evaluation evaluate(const FactorModel& model, const CountDataset* training, const CountDataset* validation);

struct FitOptions {
  ModelKind kind = ModelKind::nsf;
  int L = 0;
  std::optional<int> T;
  std::optional<LikelihoodFamily> likelihood;
  KernelKind kernel = KernelKind::matern32;
  Index M = 0;
  int S = 3;
  double learning_rate = 0.01;
  int max_steps = 1000;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.95;
  double min_total_count = 100.0;
  Index n_top = 0;  // 0 keeps every feature

  ModelSpec spec() const;
  nlohmann::json to_json() const;
};

/// Observations a model of the given spec is trained on: raw counts with size
/// factors, or for gaussian models the log-normalized matrix of the full
/// dataset restricted to `rows`.
ObservationData training_view(const CountDataset& full, const std::vector<Index>& rows, const ModelSpec& spec);

struct FitRun {
  ModelArchive archive;
  RunReport report;
};

/// Preprocess, split, initialize, fit and evaluate.
FitRun run_fit(const CountDataset& data, const FitOptions& opts);

/// Sets Eigen's worker count from NSF_THREADS when present.
void apply_thread_limit();

void run_simulate_command(SimKind kind, std::uint64_t seed, const std::filesystem::path& out_dir);
void run_fit_command(const std::filesystem::path& counts, const std::filesystem::path& coords, const FitOptions& opts,
                     const std::filesystem::path& out_dir);
void run_eval_command(const std::filesystem::path& archive, const std::filesystem::path& counts,
                      const std::filesystem::path& coords, std::optional<std::uint64_t> split_seed,
                      const std::filesystem::path& out_dir);
void run_postprocess_command(const std::filesystem::path& archive, Index top_k, const std::filesystem::path& out_dir);

inline constexpr const char* kArchiveFileName = "model.nsf";

}  // namespace nsf

#endif  // NSF_PIPELINE_HPP_
