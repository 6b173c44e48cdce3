#include "nsf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "nsf/errors.hpp"

namespace nsf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError(where + ": cannot parse '" + s + "' as a number");
  return v;
}

std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ParseError("cannot open " + p.string());
  return in;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

Table read_csv_table(const std::filesystem::path& p) {
  auto in = open_input(p);
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (t.header.empty()) {
      t.header = split_csv(line);
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != t.header.size()) {
      throw ParseError(p.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                       " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      row.push_back(parse_number(cells[c], p.string() + ":" + std::to_string(lineno) + " field " + std::to_string(c + 1)));
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw ParseError(p.string() + ": empty file");
  return t;
}

MatrixXd to_matrix(const Table& t) {
  MatrixXd m(static_cast<Index>(t.rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < t.header.size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = t.rows[r][c];
  return m;
}

MatrixXd read_triplet(const std::filesystem::path& p) {
  auto in = open_input(p);
  std::string line;
  std::size_t lineno = 0;
  Index n = -1, J = -1, nnz = -1, seen = 0;
  MatrixXd Y;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '%') continue;
    std::istringstream fields(t);
    const std::string where = p.string() + ":" + std::to_string(lineno);
    if (n < 0) {
      if (!(fields >> n >> J >> nnz) || n < 1 || J < 1 || nnz < 0) throw ParseError(where + ": bad size line");
      Y = MatrixXd::Zero(n, J);
      continue;
    }
    long long i = 0, j = 0;
    double v = 0.0;
    if (!(fields >> i >> j >> v)) throw ParseError(where + ": expected 'row col value'");
    if (i < 1 || i > n || j < 1 || j > J) {
      throw ParseError(where + ": entry (" + std::to_string(i) + ", " + std::to_string(j) +
                       ") outside the declared " + std::to_string(n) + " x " + std::to_string(J) + " matrix");
    }
    Y(i - 1, j - 1) += v;
    ++seen;
  }
  if (n < 0) throw ParseError(p.string() + ": missing size line");
  if (seen != nnz) {
    throw ParseError(p.string() + ": declared " + std::to_string(nnz) + " entries, found " + std::to_string(seen));
  }
  return Y;
}

CountFormat detect_format(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  return ext == ".csv" ? CountFormat::dense_csv : CountFormat::triplet;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ec == std::errc() ? ptr : buf);
}

void CountDataset::validate() const {
  if (X.rows() != Y.rows() || X_raw.rows() != Y.rows()) throw ShapeError("CountDataset: coordinate rows differ from count rows");
  if (X.cols() < 1) throw ShapeError("CountDataset: need at least one coordinate dimension");
  if (static_cast<Index>(feature_names.size()) != Y.cols()) throw ShapeError("CountDataset: feature name count mismatch");
  if (size_factors.nu.size() != Y.rows()) throw ShapeError("CountDataset: size factor length mismatch");
}

ObservationData CountDataset::counts_view() const { return {Y, X, size_factors.nu}; }

ObservationData CountDataset::normalized_view() const {
  return {normalize_log(Y), X, VectorXd::Ones(Y.rows())};
}

MatrixXd rescale_coordinates(const MatrixXd& X_raw, const VectorXd& center, const VectorXd& scale) {
  if (center.size() != X_raw.cols() || scale.size() != X_raw.cols()) throw ShapeError("rescale_coordinates: dimension mismatch");
  return (X_raw.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
}

CountDataset make_dataset(MatrixXd Y, MatrixXd X_raw, std::vector<std::string> feature_names, double min_total_count) {
  if (Y.rows() != X_raw.rows()) {
    throw ShapeError("dataset: " + std::to_string(Y.rows()) + " count rows but " + std::to_string(X_raw.rows()) +
                     " coordinate rows");
  }
  if (X_raw.cols() < 1) throw ShapeError("dataset: coordinates need at least one dimension");
  if (feature_names.empty()) {
    for (Index j = 0; j < Y.cols(); ++j) feature_names.push_back("feature_" + std::to_string(j + 1));
  }
  if (static_cast<Index>(feature_names.size()) != Y.cols()) throw ShapeError("dataset: feature name count mismatch");
  if ((Y.array() < 0.0).any()) throw ParseError("dataset: counts must be nonnegative");

  const VectorXd totals = Y.rowwise().sum();
  std::vector<Index> keep;
  for (Index i = 0; i < Y.rows(); ++i)
    if (totals(i) >= min_total_count && totals(i) > 0.0) keep.push_back(i);
  if (keep.empty()) throw DegenerateInputError("dataset: no observation passes the total-count filter");

  CountDataset d;
  d.Y.resize(static_cast<Index>(keep.size()), Y.cols());
  d.X_raw.resize(static_cast<Index>(keep.size()), X_raw.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    d.Y.row(static_cast<Index>(r)) = Y.row(keep[r]);
    d.X_raw.row(static_cast<Index>(r)) = X_raw.row(keep[r]);
  }
  d.source_rows = keep;
  d.feature_names = std::move(feature_names);
  d.coord_center = d.X_raw.colwise().mean().transpose();
  d.coord_scale.resize(d.X_raw.cols());
  for (Index c = 0; c < d.X_raw.cols(); ++c) {
    const double s = (d.X_raw.col(c).array() - d.coord_center(c)).abs().maxCoeff();
    d.coord_scale(c) = s > 0.0 ? s : 1.0;
  }
  d.X = rescale_coordinates(d.X_raw, d.coord_center, d.coord_scale);
  d.size_factors = size_factors(d.Y);
  d.validate();
  return d;
}

CountDataset load_dataset(const std::filesystem::path& counts, const std::filesystem::path& coords,
                          const LoadOptions& opts) {
  const CountFormat fmt = opts.format == CountFormat::automatic ? detect_format(counts) : opts.format;
  MatrixXd Y;
  std::vector<std::string> names;
  if (fmt == CountFormat::dense_csv) {
    const Table t = read_csv_table(counts);
    Y = to_matrix(t);
    names = t.header;
  } else {
    Y = read_triplet(counts);
  }
  const MatrixXd X = to_matrix(read_csv_table(coords));
  return make_dataset(std::move(Y), X, std::move(names), opts.min_total_count);
}

VectorXd feature_deviances(const MatrixXd& Y, const VectorXd& nu) {
  const double nu_total = nu.sum();
  VectorXd dev(Y.cols());
  for (Index j = 0; j < Y.cols(); ++j) {
    const double rate = Y.col(j).sum() / nu_total;
    if (!(rate > 0.0)) {
      dev(j) = 0.0;
      continue;
    }
    dev(j) = poisson_deviance(Y.col(j), nu * rate);
  }
  return dev;
}

namespace {

CountDataset with_columns(const CountDataset& data, const std::vector<Index>& cols) {
  CountDataset out = data;
  out.Y.resize(data.Y.rows(), static_cast<Index>(cols.size()));
  out.feature_names.clear();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    out.Y.col(static_cast<Index>(c)) = data.Y.col(cols[c]);
    out.feature_names.push_back(data.feature_names[static_cast<std::size_t>(cols[c])]);
  }
  return out;
}

}  // namespace

CountDataset select_features(const CountDataset& data, Index n_top) {
  if (n_top < 1) throw ArgumentError("select_features: n_top must be at least 1");
  const Index J = data.features();
  if (n_top >= J) return data;
  const VectorXd dev = feature_deviances(data.Y, data.size_factors.nu);
  std::vector<Index> order(static_cast<std::size_t>(J));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return dev(a) > dev(b); });
  order.resize(static_cast<std::size_t>(n_top));
  std::sort(order.begin(), order.end());
  return with_columns(data, order);
}

CountDataset select_features_by_name(const CountDataset& data, const std::vector<std::string>& names) {
  std::vector<Index> cols;
  for (const auto& n : names) {
    const auto it = std::find(data.feature_names.begin(), data.feature_names.end(), n);
    if (it == data.feature_names.end()) throw ParseError("dataset lacks feature '" + n + "'");
    cols.push_back(static_cast<Index>(it - data.feature_names.begin()));
  }
  return with_columns(data, cols);
}

MatrixXd normalize_log(const MatrixXd& Y) {
  const VectorXd totals = Y.rowwise().sum();
  if (!(totals.array() > 0.0).all()) throw DegenerateInputError("normalize_log: zero total count");
  const double med = median(std::vector<double>(totals.begin(), totals.end()));
  MatrixXd out = (Y.array().colwise() * (med / totals.array())).log1p();
  out.rowwise() -= out.colwise().mean();
  return out;
}

Split train_val_split(Index n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ArgumentError("train_val_split: fraction must lie in (0, 1)");
  if (n < 2) throw ArgumentError("train_val_split: need at least two observations");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Index n_train = std::clamp<Index>(std::llround(train_fraction * static_cast<double>(n)), 1, n - 1);
  Split s;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.validation.assign(perm.begin() + n_train, perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  return s;
}

CountDataset subset_rows(const CountDataset& data, const std::vector<Index>& rows) {
  CountDataset out;
  const Index n = static_cast<Index>(rows.size());
  out.Y.resize(n, data.Y.cols());
  out.X.resize(n, data.X.cols());
  out.X_raw.resize(n, data.X_raw.cols());
  out.size_factors.nu.resize(n);
  for (Index r = 0; r < n; ++r) {
    const Index i = rows[static_cast<std::size_t>(r)];
    out.Y.row(r) = data.Y.row(i);
    out.X.row(r) = data.X.row(i);
    out.X_raw.row(r) = data.X_raw.row(i);
    out.size_factors.nu(r) = data.size_factors.nu(i);
    out.source_rows.push_back(data.source_rows[static_cast<std::size_t>(i)]);
  }
  out.coord_center = data.coord_center;
  out.coord_scale = data.coord_scale;
  out.feature_names = data.feature_names;
  return out;
}

void write_matrix_csv(const std::filesystem::path& path, const MatrixXd& M, const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (Index r = 0; r < M.rows(); ++r) {
    for (Index c = 0; c < M.cols(); ++c) out << (c ? "," : "") << format_double(M(r, c));
    out << '\n';
  }
}

void write_counts_csv(const std::filesystem::path& path, const MatrixXd& Y, const std::vector<std::string>& feature_names) {
  if (!feature_names.empty()) {
    write_matrix_csv(path, Y, feature_names);
    return;
  }
  std::vector<std::string> names;
  for (Index j = 0; j < Y.cols(); ++j) names.push_back("feature_" + std::to_string(j + 1));
  write_matrix_csv(path, Y, names);
}

}  // namespace nsf
