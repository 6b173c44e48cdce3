#include "doctest.h"

#include "nsf/errors.hpp"
#include "nsf/simulate.hpp"

using namespace nsf;
using Eigen::MatrixXd;

TEST_CASE("pattern masks have the documented sizes") {
  const MatrixXd g = pattern_masks(SimKind::ggblocks, 30);
  CHECK(g.rows() == 900);
  // Each template cell covers a 5 x 5 block.
  CHECK(g.col(0).sum() == 125);
  CHECK(g.col(1).sum() == 200);
  CHECK(g.col(2).sum() == 125);
  CHECK(g.col(3).sum() == 125);
  CHECK(g.rowwise().sum().maxCoeff() == 1);

  const MatrixXd q = pattern_masks(SimKind::quilt, 36);
  CHECK(q.col(0).sum() == 18 * 24);
  CHECK(q.col(1).sum() == 24 * 18);
  CHECK(q.col(2).sum() == 18 * 24);
  CHECK(q.col(3).sum() == 24 * 18);
  CHECK(q.rowwise().sum().maxCoeff() == 2);
}

TEST_CASE("simulation shapes and determinism") {
  SimConfig cfg = ggblocks_config();
  cfg.features = 40;
  const SimDataset a = simulate(SimKind::ggblocks, cfg, 7), b = simulate(SimKind::ggblocks, cfg, 7);
  CHECK(a.Y == b.Y);
  CHECK(a.Y.rows() == 900);
  CHECK(a.Y.cols() == 40);
  CHECK(a.nonspatial_patterns.cols() == 3);
  CHECK((a.Y.array() >= 0).all());
  CHECK((a.Y.array() == a.Y.array().round()).all());
  CHECK(a.X.row(31) == Eigen::RowVector2d(1, 1));
  const SimDataset c = simulate(SimKind::ggblocks, cfg, 8);
  CHECK(a.Y != c.Y);
  CHECK(simulate_quilt(quilt_config(), 1).Y.rows() == 1296);
}

TEST_CASE("simulated means follow the active patterns") {
  SimConfig cfg = ggblocks_config();
  cfg.features = 200;
  const SimDataset d = simulate(SimKind::ggblocks, cfg, 3);
  double on = 0, n_on = 0, off = 0, n_off = 0;
  for (Eigen::Index j = 0; j < d.Y.cols(); ++j) {
    const int p = d.spatial_assignment(j), k = d.nonspatial_assignment(j);
    for (Eigen::Index i = 0; i < d.Y.rows(); ++i) {
      if (d.nonspatial_patterns(i, k) > 0) continue;
      if (d.spatial_masks(i, p) > 0) {
        on += d.Y(i, j);
        ++n_on;
      } else {
        off += d.Y(i, j);
        ++n_off;
      }
    }
  }
  CHECK(on / n_on == doctest::Approx(cfg.spatial_active + cfg.background).epsilon(0.02));
  CHECK(off / n_off == doctest::Approx(2 * cfg.background).epsilon(0.05));
  CHECK(d.nonspatial_patterns.mean() == doctest::Approx(cfg.nonspatial_probability).epsilon(0.15));
}

TEST_CASE("simulation config validation") {
  SimConfig cfg;
  cfg.side = 3;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = SimConfig{};
  cfg.nonspatial_probability = 1.5;
  CHECK_THROWS_AS(simulate(SimKind::quilt, cfg, 1), ArgumentError);
  CHECK_THROWS_AS(sim_kind_from_string("blocks"), ArgumentError);
  CHECK(sim_kind_from_string("quilt") == SimKind::quilt);
}
