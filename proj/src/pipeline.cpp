#include "nsf/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <limits>

#include "nsf/errors.hpp"
#include "nsf/postprocess.hpp"

namespace nsf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> numbered(const std::string& prefix, Index n) {
  std::vector<std::string> out;
  for (Index k = 1; k <= n; ++k) out.push_back(prefix + std::to_string(k));
  return out;
}

std::vector<std::string> component_names(const ModelSpec& spec) {
  auto names = numbered("spatial_", spec.T);
  for (const auto& n : numbered("nonspatial_", spec.nonspatial())) names.push_back(n);
  return names;
}

std::vector<std::string> coordinate_names(Index D) {
  std::vector<std::string> out;
  for (Index d = 0; d < D; ++d) out.push_back(d == 0 ? "x" : d == 1 ? "y" : "coord_" + std::to_string(d + 1));
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  return out;
}

json deviance_json(const std::optional<DevianceSummary>& d) {
  if (!d) return nullptr;
  return {{"total", d->total}, {"per_observation", d->per_observation}, {"observations", d->observations}};
}

bool count_likelihood(const ModelSpec& spec) { return spec.likelihood != LikelihoodFamily::gaussian; }

}  // namespace

json RunReport::to_json() const {
  json metrics = {{"elbo_trace", elbo_trace},
                  {"converged", converged},
                  {"steps", steps},
                  {"train_deviance", deviance_json(evaluation.train)},
                  {"validation_deviance", deviance_json(evaluation.validation)},
                  {"loadings_sparsity", evaluation.sparsity},
                  {"warnings", evaluation.warnings}};
  return {{"config", config}, {"metrics", metrics}, {"seed", seed}, {"wall_seconds", wall_seconds}};
}

double loadings_sparsity(const FactorModel& model) {
  const Index total = model.W.size() + model.V.size();
  if (total == 0) return 0.0;
  const Index zeros = (model.W.array() == 0.0).count() + (model.V.array() == 0.0).count();
  return static_cast<double>(zeros) / static_cast<double>(total);
}

DevianceSummary deviance_summary(const MatrixXd& Y, const MatrixXd& Mhat) {
  // A feature whose loadings were all projected to zero predicts exactly 0.
  const MatrixXd floored = Mhat.cwiseMax(std::numeric_limits<double>::min());
  DevianceSummary d;
  d.total = poisson_deviance(Y, floored);
  d.observations = Y.rows();
  d.per_observation = Y.rows() > 0 ? d.total / static_cast<double>(Y.rows()) : 0.0;
  return d;
}

Evaluation evaluate(const FactorModel& model, const CountDataset* training, const CountDataset* validation) {
  Evaluation ev;
  ev.sparsity = loadings_sparsity(model);
  if (!count_likelihood(model.spec)) {
    ev.warnings.push_back("gaussian likelihood: count deviance not reported");
    return ev;
  }
  if (training) {
    if (training->observations() != model.observations()) {
      throw ShapeError("evaluate: training rows do not match the fitted model");
    }
    ev.train = deviance_summary(training->Y, predict_mean(model, training->size_factors.nu));
  }
  if (validation && validation->observations() > 0) {
    NonspatialPolicy policy = NonspatialPolicy::reject;
    if (model.spec.T == 0) {
      policy = NonspatialPolicy::prior_mean;
      ev.warnings.push_back("nonspatial model: validation predictions use prior-mean factors");
    }
    ev.validation =
        deviance_summary(validation->Y, predict_mean_at(model, validation->X, validation->size_factors.nu, policy));
  }
  return ev;
}

ModelSpec FitOptions::spec() const {
  if (L < 1) throw ArgumentError("number of components L must be at least 1");
  ModelSpec s = make_spec(kind, L, T, likelihood);
  s.kernel = kernel;
  s.M = M;
  s.S = S;
  s.validate();
  return s;
}

json FitOptions::to_json() const {
  const ModelSpec s = spec();
  return {{"model", std::string(to_string(kind))},
          {"L", s.L},
          {"T", s.T},
          {"likelihood", std::string(to_string(s.likelihood))},
          {"kernel", std::string(to_string(s.kernel))},
          {"M", M},
          {"S", S},
          {"learning_rate", learning_rate},
          {"max_steps", max_steps},
          {"seed", seed},
          {"split_seed", split_seed},
          {"train_fraction", train_fraction},
          {"min_total_count", min_total_count},
          {"n_top", n_top}};
}

ObservationData training_view(const CountDataset& full, const std::vector<Index>& rows, const ModelSpec& spec) {
  const Index n = static_cast<Index>(rows.size());
  ObservationData obs;
  obs.X.resize(n, full.X.cols());
  obs.Y.resize(n, full.Y.cols());
  obs.nu.resize(n);
  const MatrixXd normalized = count_likelihood(spec) ? MatrixXd() : normalize_log(full.Y);
  const MatrixXd& source = count_likelihood(spec) ? full.Y : normalized;
  for (Index r = 0; r < n; ++r) {
    const Index i = rows[static_cast<std::size_t>(r)];
    obs.X.row(r) = full.X.row(i);
    obs.Y.row(r) = source.row(i);
    obs.nu(r) = count_likelihood(spec) ? full.size_factors.nu(i) : 1.0;
  }
  return obs;
}

FitRun run_fit(const CountDataset& input, const FitOptions& opts) {
  const ModelSpec spec = opts.spec();
  const CountDataset data = opts.n_top > 0 ? select_features(input, opts.n_top) : input;
  const Split split = train_val_split(data.observations(), opts.train_fraction, opts.split_seed);
  const ObservationData obs = training_view(data, split.train, spec);

  FitConfig cfg;
  cfg.learning_rate = opts.learning_rate;
  cfg.max_steps = opts.max_steps;
  cfg.S = opts.S;
  cfg.seed = opts.seed;
  FitResult result = fit(build_model(spec, obs, opts.seed), obs, cfg);

  const CountDataset train = subset_rows(data, split.train);
  const CountDataset validation = subset_rows(data, split.validation);

  FitRun run;
  ModelArchive& a = run.archive;
  a.model = std::move(result.model);
  a.feature_names = data.feature_names;
  a.coord_center = data.coord_center;
  a.coord_scale = data.coord_scale;
  a.X_raw_train = train.X_raw;
  a.nu_train = train.size_factors.nu;
  a.config = opts.to_json();
  a.config["observations"] = data.observations();
  a.config["features"] = data.features();

  RunReport& r = run.report;
  r.config = a.config;
  r.elbo_trace = result.trace.elbo;
  r.converged = result.trace.converged;
  r.steps = result.trace.steps;
  r.evaluation = evaluate(a.model, &train, &validation);
  r.wall_seconds = result.trace.wall_seconds;
  r.seed = opts.seed;
  return run;
}

void apply_thread_limit() {
  const char* env = std::getenv("NSF_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ArgumentError("NSF_THREADS must be a positive integer");
  Eigen::setNbThreads(static_cast<int>(n));
}

void run_simulate_command(SimKind kind, std::uint64_t seed, const fs::path& out_dir) {
  const SimConfig cfg = kind == SimKind::ggblocks ? ggblocks_config() : quilt_config();
  const SimDataset d = simulate(kind, cfg, seed);
  fs::create_directories(out_dir);
  write_counts_csv(out_dir / "counts.csv", d.Y, numbered("feature_", d.Y.cols()));
  write_matrix_csv(out_dir / "coords.csv", d.X, {"x", "y"});

  MatrixXd truth(d.X.rows(), d.X.cols() + d.spatial_masks.cols());
  truth << d.X, d.spatial_masks;
  auto header = coordinate_names(d.X.cols());
  for (const auto& n : numbered("pattern_", d.spatial_masks.cols())) header.push_back(n);
  write_matrix_csv(out_dir / "truth_spatial.csv", truth, header);

  truth.resize(d.X.rows(), d.X.cols() + d.nonspatial_patterns.cols());
  truth << d.X, d.nonspatial_patterns;
  header = coordinate_names(d.X.cols());
  for (const auto& n : numbered("pattern_", d.nonspatial_patterns.cols())) header.push_back(n);
  write_matrix_csv(out_dir / "truth_nonspatial.csv", truth, header);

  auto out = open_output(out_dir / "feature_patterns.csv");
  out << "feature,spatial_pattern,nonspatial_pattern\n";
  for (Index j = 0; j < d.Y.cols(); ++j) {
    out << "feature_" << j + 1 << ',' << d.spatial_assignment(j) + 1 << ',' << d.nonspatial_assignment(j) + 1 << '\n';
  }
}

void run_fit_command(const fs::path& counts, const fs::path& coords, const FitOptions& opts, const fs::path& out_dir) {
  opts.spec();
  LoadOptions load;
  load.min_total_count = opts.min_total_count;
  const CountDataset data = load_dataset(counts, coords, load);
  FitRun run = run_fit(data, opts);
  fs::create_directories(out_dir);
  save_archive(out_dir / kArchiveFileName, run.archive);
  write_json(out_dir / "report.json", run.report.to_json());
}

void run_eval_command(const fs::path& archive_path, const fs::path& counts, const fs::path& coords,
                      std::optional<std::uint64_t> split_seed, const fs::path& out_dir) {
  const ModelArchive a = load_archive(archive_path);
  LoadOptions load;
  load.min_total_count = a.config.value("min_total_count", 100.0);
  const CountDataset data = select_features_by_name(load_dataset(counts, coords, load), a.feature_names);
  const std::uint64_t seed = split_seed.value_or(a.config.value("split_seed", std::uint64_t{0}));
  const Split split = train_val_split(data.observations(), a.config.value("train_fraction", 0.95), seed);

  CountDataset train = subset_rows(data, split.train);
  CountDataset validation = subset_rows(data, split.validation);
  validation.X = rescale_coordinates(validation.X_raw, a.coord_center, a.coord_scale);

  RunReport r;
  r.config = a.config;
  r.config["split_seed"] = seed;
  r.seed = a.config.value("seed", std::uint64_t{0});
  const bool same_rows = train.observations() == a.model.observations() && train.X_raw == a.X_raw_train;
  r.evaluation = evaluate(a.model, same_rows ? &train : nullptr, &validation);
  if (!same_rows) r.evaluation.warnings.push_back("training rows differ from the archive: in-sample deviance skipped");
  fs::create_directories(out_dir);
  write_json(out_dir / "report.json", r.to_json());
}

void run_postprocess_command(const fs::path& archive_path, Index top_k, const fs::path& out_dir) {
  const ModelArchive a = load_archive(archive_path);
  const FactorModel& m = a.model;
  if (!m.spec.nonnegative) {
    throw UnsupportedModelError("postprocess supports nonnegative models only (got " +
                                std::string(to_string(m.spec.kind())) + ")");
  }
  if (top_k < 1) throw ArgumentError("--top-k must be at least 1");

  const FactorEstimates est = factor_estimates(m);
  const Index N = m.observations(), J = m.features(), L = m.spec.L;
  MatrixXd F(N, L), W(J, L);
  F << est.F, est.H;
  W << m.W, m.V;
  const auto p = simplex_normalize<double>(F, W, SimplexStyle::spde, true);
  const auto scores = spatial_scores<double>(m.W, m.V, est.F, est.H);
  for (const auto& w : scores.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

  const auto comps = component_names(m.spec);
  const MatrixXd& X = a.X_raw_train;
  const auto coord_cols = coordinate_names(X.cols());
  fs::create_directories(out_dir);

  MatrixXd factors(N, X.cols() + L);
  factors << X, p.F_hat;
  auto header = coord_cols;
  header.insert(header.end(), comps.begin(), comps.end());
  write_matrix_csv(out_dir / "factors.csv", factors, header);

  {
    auto out = open_output(out_dir / "loadings.csv");
    out << "feature";
    for (const auto& c : comps) out << ',' << c;
    out << ",total\n";
    for (Index j = 0; j < J; ++j) {
      out << a.feature_names[static_cast<std::size_t>(j)];
      for (Index l = 0; l < L; ++l) out << ',' << format_double(p.W_hat(j, l));
      out << ',' << format_double(p.scale(j)) << '\n';
    }
  }
  {
    auto out = open_output(out_dir / "scores_features.csv");
    out << "feature,gamma\n";
    for (Index j = 0; j < J; ++j)
      out << a.feature_names[static_cast<std::size_t>(j)] << ',' << format_double(scores.gamma(j)) << '\n';
  }
  MatrixXd rho(N, X.cols() + 1);
  rho << X, scores.rho;
  header = coord_cols;
  header.push_back("rho");
  write_matrix_csv(out_dir / "scores_observations.csv", rho, header);
  {
    auto out = open_output(out_dir / "top_features.csv");
    out << "component,rank,feature,weight\n";
    const Index k = std::min(top_k, J);
    for (Index l = 0; l < L; ++l) {
      const auto top = top_features(p.W_hat, l, k);
      for (std::size_t r = 0; r < top.size(); ++r) {
        out << comps[static_cast<std::size_t>(l)] << ',' << r + 1 << ','
            << a.feature_names[static_cast<std::size_t>(top[r])] << ',' << format_double(p.W_hat(top[r], l)) << '\n';
      }
    }
  }
  {
    auto out = open_output(out_dir / "factor_maps.csv");
    out << "x,y,component,value\n";
    for (Index l = 0; l < L; ++l) {
      for (Index i = 0; i < N; ++i) {
        out << format_double(X(i, 0)) << ',' << format_double(X.cols() > 1 ? X(i, 1) : 0.0) << ','
            << comps[static_cast<std::size_t>(l)] << ',' << format_double(p.F_hat(i, l)) << '\n';
      }
    }
  }
}

}  // namespace nsf
