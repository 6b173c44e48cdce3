#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "nsf/archive.hpp"
#include "nsf/cli.hpp"
#include "nsf/dataset.hpp"
#include "nsf/errors.hpp"
#include "nsf/pipeline.hpp"

using namespace nsf;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("nsf_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A small grid with two spatial gradients, written as CSV files.
void write_grid_dataset(const TempDir& dir, int side, Eigen::Index J, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::Index N = side * side;
  MatrixXd Y(N, J), X(N, 2);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) X.row(r * side + c) << c, r;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < J; ++j) {
      const double rate = 2.0 + 6.0 * (j % 2 == 0 ? X(i, 0) : X(i, 1)) / side;
      std::poisson_distribution<int> p(rate);
      Y(i, j) = p(rng);
    }
  write_counts_csv(dir / "counts.csv", Y, {});
  write_matrix_csv(dir / "coords.csv", X, {"x", "y"});
}

}  // namespace

TEST_CASE("dense CSV and triplet inputs load to the same dataset") {
  TempDir dir;
  write_text(dir / "counts.csv", "a,b,c\n1,0,2\n0,0,0\n3,4,0\n");
  write_text(dir / "coords.csv", "x,y\n0,0\n1,0\n2,4\n");
  write_text(dir / "counts.mtx", "% comment\n3 3 4\n1 1 1\n1 3 2\n3 1 3\n3 2 4\n");
  const CountDataset a = load_dataset(dir / "counts.csv", dir / "coords.csv", {CountFormat::automatic, 0.0});
  const CountDataset b = load_dataset(dir / "counts.mtx", dir / "coords.csv", {CountFormat::automatic, 0.0});
  // The all-zero row is always dropped.
  CHECK(a.observations() == 2);
  CHECK(a.Y == b.Y);
  CHECK(a.source_rows == std::vector<Eigen::Index>{0, 2});
  CHECK(a.feature_names == std::vector<std::string>{"a", "b", "c"});
  CHECK(b.feature_names[0] == "feature_1");
  CHECK(a.coord_center(0) == doctest::Approx(1.0));
  CHECK(a.X(0, 0) == doctest::Approx(-1.0));
  CHECK(a.X(1, 1) == doctest::Approx(1.0));
  CHECK((a.X.array().abs() <= 1.0 + 1e-15).all());
}

TEST_CASE("malformed inputs raise parse errors naming the location") {
  TempDir dir;
  write_text(dir / "coords.csv", "x,y\n0,0\n1,0\n");
  write_text(dir / "ragged.csv", "a,b\n1,2\n3\n");
  write_text(dir / "text.csv", "a,b\n1,x\n2,2\n");
  write_text(dir / "range.mtx", "2 2 1\n3 1 5\n");
  write_text(dir / "short.mtx", "2 2 3\n1 1 5\n");
  write_text(dir / "counts.csv", "a,b\n1,2\n3,4\n5,6\n");
  auto message = [&](const std::string& name) {
    try {
      load_dataset(dir / name, dir / "coords.csv", {CountFormat::automatic, 0.0});
    } catch (const ParseError& e) {
      return std::string(e.what());
    } catch (const std::exception&) {
      return std::string("other");
    }
    return std::string();
  };
  CHECK(message("ragged.csv").find("ragged.csv:3") != std::string::npos);
  CHECK(message("text.csv").find("text.csv:2") != std::string::npos);
  CHECK(message("range.mtx").find("(3, 1)") != std::string::npos);
  CHECK(message("short.mtx").find("declared 3") != std::string::npos);
  CHECK(message("missing.csv").find("cannot open") != std::string::npos);
  CHECK_THROWS_AS(load_dataset(dir / "counts.csv", dir / "coords.csv", {CountFormat::automatic, 0.0}), ShapeError);
}

TEST_CASE("total-count filter and size factors") {
  MatrixXd Y(4, 2), X(4, 1);
  Y << 50, 60, 10, 5, 100, 100, 0, 0;
  X << 0, 1, 2, 3;
  const CountDataset d = make_dataset(Y, X, {}, 100);
  CHECK(d.source_rows == std::vector<Eigen::Index>{0, 2});
  CHECK(d.size_factors.nu.mean() == doctest::Approx(1.0));
  CHECK(d.size_factors.nu(1) / d.size_factors.nu(0) == doctest::Approx(200.0 / 110.0));
  CHECK_THROWS_AS(make_dataset(Y, X, {}, 1000), DegenerateInputError);
}

TEST_CASE("feature selection keeps the most variable features in order") {
  MatrixXd Y(4, 3), X(4, 1);
  Y << 5, 1, 9, 5, 9, 1, 5, 1, 9, 5, 9, 2;
  X << 0, 1, 2, 3;
  const CountDataset d = make_dataset(Y, X, {"flat", "b", "c"});
  const VectorXd dev = feature_deviances(d.Y, d.size_factors.nu);
  CHECK(dev(0) < dev(1));
  const CountDataset top = select_features(d, 2);
  CHECK(top.feature_names == std::vector<std::string>{"b", "c"});
  const CountDataset named = select_features_by_name(d, {"c", "flat"});
  CHECK(named.Y.col(0) == d.Y.col(2));
  CHECK_THROWS_AS(select_features_by_name(d, {"zzz"}), ParseError);
}

TEST_CASE("log normalization") {
  MatrixXd Y(3, 2);
  Y << 1, 1, 2, 2, 3, 5;
  const MatrixXd Z = normalize_log(Y);
  // Totals 2, 4, 8 with median 4.
  CHECK(Z.colwise().mean().norm() < 1e-15);
  CHECK(Z(0, 0) - Z(1, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(Z(2, 1) - Z(1, 1) == doctest::Approx(std::log1p(2.5) - std::log1p(2.0)));
}

TEST_CASE("train/validation split") {
  const Split s = train_val_split(100, 0.95, 4);
  CHECK(s.train.size() == 95);
  CHECK(s.validation.size() == 5);
  std::vector<Eigen::Index> all = s.train;
  all.insert(all.end(), s.validation.begin(), s.validation.end());
  std::sort(all.begin(), all.end());
  for (Eigen::Index i = 0; i < 100; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
  CHECK(train_val_split(100, 0.95, 4).validation == s.validation);
  CHECK(train_val_split(100, 0.95, 5).validation != s.validation);
  CHECK(train_val_split(3, 0.99, 1).validation.size() == 1);
  CHECK_THROWS_AS(train_val_split(10, 1.0, 1), ArgumentError);
}

TEST_CASE("deviance summary") {
  MatrixXd Y(2, 2), M(2, 2);
  Y << 1, 0, 2, 3;
  M << 1, 0.5, 2, 3;
  const DevianceSummary d = deviance_summary(Y, M);
  CHECK(d.total == doctest::Approx(1.0));
  CHECK(d.per_observation == doctest::Approx(0.5));
  CHECK(d.observations == 2);
}

TEST_CASE("archive round trip is bit exact") {
  TempDir dir;
  write_grid_dataset(dir, 6, 4, 1);
  const CountDataset data = load_dataset(dir / "counts.csv", dir / "coords.csv", {CountFormat::automatic, 0.0});
  FitOptions opts;
  opts.kind = ModelKind::nsfh;
  opts.L = 2;
  opts.M = 8;
  opts.max_steps = 5;
  opts.seed = 3;
  const FitRun run = run_fit(data, opts);
  save_archive(dir / "m.nsf", run.archive);
  const ModelArchive back = load_archive(dir / "m.nsf");
  CHECK(back.model.W == run.archive.model.W);
  CHECK(back.model.V == run.archive.model.V);
  CHECK(back.model.spatial[0].omega_chol == run.archive.model.spatial[0].omega_chol);
  CHECK(back.model.spatial[0].kernel.lengthscale == run.archive.model.spatial[0].kernel.lengthscale);
  CHECK(back.feature_names == run.archive.feature_names);
  CHECK(back.config == run.archive.config);
  CHECK(predict_mean(back.model, back.nu_train) == predict_mean(run.archive.model, run.archive.nu_train));

  std::string bytes = read_text(dir / "m.nsf");
  bytes[0] = 'X';
  write_text(dir / "bad.nsf", bytes);
  CHECK_THROWS_AS(load_archive(dir / "bad.nsf"), ParseError);
  write_text(dir / "short.nsf", read_text(dir / "m.nsf").substr(0, 40));
  CHECK_THROWS_AS(load_archive(dir / "short.nsf"), ParseError);
}

TEST_CASE("command line usage errors exit with code 2") {
  TempDir dir;
  write_grid_dataset(dir, 5, 3, 2);
  const std::string counts = (dir / "counts.csv").string(), coords = (dir / "coords.csv").string();
  const std::string out = (dir / "out").string();
  CHECK(run_cli({}) == kExitUsage);
  CHECK(run_cli({"fit", "--counts", counts, "--coords", coords, "--model", "nsf", "-L", "0", "--out", out}) ==
        kExitUsage);
  CHECK(run_cli({"fit", "--counts", counts, "--coords", coords, "--model", "bogus", "-L", "2", "--out", out}) ==
        kExitUsage);
  CHECK(run_cli({"fit", "--counts", (dir / "nope.csv").string(), "--coords", coords, "--model", "nsf", "-L", "2",
                 "--out", out}) == kExitUsage);
  CHECK(run_cli({"simulate", "--kind", "stripes", "--out", out}) == kExitUsage);
}

TEST_CASE("command line fit, eval and postprocess") {
  TempDir dir;
  write_grid_dataset(dir, 6, 4, 3);
  const std::string counts = (dir / "counts.csv").string(), coords = (dir / "coords.csv").string();
  const std::string fit_dir = (dir / "fit").string(), rsf_dir = (dir / "rsf").string();
  REQUIRE(run_cli({"fit", "--counts", counts, "--coords", coords, "--model", "nsfh", "-L", "2", "-M", "8",
                   "--max-steps", "5", "--min-total", "0", "--out", fit_dir}) == kExitOk);
  CHECK(fs::exists(dir / "fit" / kArchiveFileName));
  const auto report = nlohmann::json::parse(read_text(dir / "fit" / "report.json"));
  CHECK(report["metrics"]["steps"] == 5);
  CHECK(report["metrics"]["elbo_trace"].size() == 5);
  CHECK(report["metrics"]["validation_deviance"].is_object());

  const std::string archive = (dir / "fit" / kArchiveFileName).string();
  REQUIRE(run_cli({"eval", "--model-archive", archive, "--counts", counts, "--coords", coords, "--out",
                   (dir / "eval").string()}) == kExitOk);
  const auto ev = nlohmann::json::parse(read_text(dir / "eval" / "report.json"));
  CHECK(ev["metrics"]["validation_deviance"]["per_observation"] ==
        report["metrics"]["validation_deviance"]["per_observation"]);

  REQUIRE(run_cli({"postprocess", "--model-archive", archive, "--top-k", "2", "--out", (dir / "post").string()}) ==
          kExitOk);
  for (const char* f : {"factors.csv", "loadings.csv", "scores_features.csv", "scores_observations.csv",
                        "top_features.csv", "factor_maps.csv"})
    CHECK(fs::exists(dir / "post" / f));

  REQUIRE(run_cli({"fit", "--counts", counts, "--coords", coords, "--model", "rsf", "-L", "1", "-M", "8",
                   "--max-steps", "2", "--min-total", "0", "--out", rsf_dir}) == kExitOk);
  CHECK(run_cli({"postprocess", "--model-archive", (dir / "rsf" / kArchiveFileName).string(), "--top-k", "2",
                 "--out", (dir / "post2").string()}) == kExitUsage);
}
