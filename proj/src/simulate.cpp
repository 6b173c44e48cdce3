#include "nsf/simulate.hpp"

#include <array>
#include <random>
#include <string>
#include <utility>

#include "nsf/errors.hpp"

namespace nsf {

using Eigen::Index;

SimKind sim_kind_from_string(std::string_view s) {
  if (s == "ggblocks") return SimKind::ggblocks;
  if (s == "quilt") return SimKind::quilt;
  throw ArgumentError("unknown simulation kind: " + std::string(s));
}

void SimConfig::validate() const {
  if (side < 6) throw ArgumentError("SimConfig: grid side must be at least 6");
  if (features < 1) throw ArgumentError("SimConfig: need at least one feature");
  if (!(spatial_active > 0 && background > 0 && nonspatial_active > 0)) {
    throw ArgumentError("SimConfig: intensities must be positive");
  }
  if (!(nb_shape > 0)) throw ArgumentError("SimConfig: negative binomial shape must be positive");
  if (nonspatial_patterns < 1) throw ArgumentError("SimConfig: need at least one nonspatial pattern");
  if (!(nonspatial_probability >= 0 && nonspatial_probability <= 1)) {
    throw ArgumentError("SimConfig: activation probability must lie in [0, 1]");
  }
}

SimConfig ggblocks_config() { return SimConfig{}; }

SimConfig quilt_config() {
  SimConfig c;
  c.side = 36;
  return c;
}

namespace {

using Cell = std::pair<int, int>;

const std::array<std::vector<Cell>, 4>& ggblocks_templates() {
  static const std::array<std::vector<Cell>, 4> t = {{
      {{0, 1}, {1, 0}, {1, 1}, {1, 2}, {2, 1}},
      {{0, 3}, {0, 4}, {0, 5}, {1, 3}, {1, 5}, {2, 3}, {2, 4}, {2, 5}},
      {{3, 0}, {3, 1}, {4, 1}, {4, 2}, {5, 2}},
      {{3, 3}, {4, 3}, {5, 3}, {5, 4}, {5, 5}},
  }};
  return t;
}

struct Rect {
  int r0, r1, c0, c1;
};

constexpr std::array<Rect, 4> kQuiltRects = {{{0, 18, 0, 24}, {0, 24, 18, 36}, {18, 36, 12, 36}, {12, 36, 0, 18}}};

}  // namespace

Eigen::MatrixXd pattern_masks(SimKind kind, int side) {
  const Index N = static_cast<Index>(side) * side;
  Eigen::MatrixXd masks = Eigen::MatrixXd::Zero(N, 4);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const Index i = static_cast<Index>(r) * side + c;
      if (kind == SimKind::ggblocks) {
        const int tr = r * 6 / side, tc = c * 6 / side;
        for (int p = 0; p < 4; ++p)
          for (const auto& [cr, cc] : ggblocks_templates()[p])
            if (cr == tr && cc == tc) masks(i, p) = 1.0;
      } else {
        const int tr = r * 36 / side, tc = c * 36 / side;
        for (int p = 0; p < 4; ++p) {
          const Rect& q = kQuiltRects[p];
          if (tr >= q.r0 && tr < q.r1 && tc >= q.c0 && tc < q.c1) masks(i, p) = 1.0;
        }
      }
    }
  }
  return masks;
}

SimDataset simulate(SimKind kind, const SimConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int side = cfg.side;
  const Index N = static_cast<Index>(side) * side, J = cfg.features;
  const int K = cfg.nonspatial_patterns;
  std::mt19937_64 rng(seed);

  SimDataset d;
  d.X.resize(N, 2);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) d.X.row(static_cast<Index>(r) * side + c) << c, r;
  d.spatial_masks = pattern_masks(kind, side);

  std::uniform_int_distribution<int> pick_spatial(0, 3), pick_nonspatial(0, K - 1);
  d.spatial_assignment.resize(J);
  d.nonspatial_assignment.resize(J);
  for (Index j = 0; j < J; ++j) d.spatial_assignment(j) = pick_spatial(rng);
  for (Index j = 0; j < J; ++j) d.nonspatial_assignment(j) = pick_nonspatial(rng);

  std::bernoulli_distribution active(cfg.nonspatial_probability);
  d.nonspatial_patterns.resize(N, K);
  for (int k = 0; k < K; ++k)
    for (Index i = 0; i < N; ++i) d.nonspatial_patterns(i, k) = active(rng) ? 1.0 : 0.0;

  // Negative binomial as a gamma-Poisson mixture with mean mu and shape r.
  d.Y.resize(N, J);
  for (Index j = 0; j < J; ++j) {
    const int p = d.spatial_assignment(j), k = d.nonspatial_assignment(j);
    for (Index i = 0; i < N; ++i) {
      const double m1 = d.spatial_masks(i, p) > 0 ? cfg.spatial_active : cfg.background;
      const double m2 = d.nonspatial_patterns(i, k) > 0 ? cfg.nonspatial_active : cfg.background;
      const double mu = m1 + m2;
      std::gamma_distribution<double> gamma(cfg.nb_shape, mu / cfg.nb_shape);
      const double rate = gamma(rng);
      std::poisson_distribution<long long> poisson(rate);
      d.Y(i, j) = rate > 0 ? static_cast<double>(poisson(rng)) : 0.0;
    }
  }
  return d;
}

SimDataset simulate_ggblocks(const SimConfig& cfg, std::uint64_t seed) { return simulate(SimKind::ggblocks, cfg, seed); }

SimDataset simulate_quilt(const SimConfig& cfg, std::uint64_t seed) { return simulate(SimKind::quilt, cfg, seed); }

}  // namespace nsf
