#include <catch2/catch_amalgamated.hpp>

#include <samint/evaluation.hpp>
#include <samint/path.hpp>

#include "../support/oracles.hpp"

using namespace samint;

TEST_CASE("error metrics match hand-computed values", "[evaluation]") {
  Eigen::VectorXd y(4), yhat(4);
  y << 1.0, 2.0, 3.0, 4.0;
  yhat << 2.0, 0.0, 6.0, 4.0;
  // diffs: -1, 2, -3, 0 -> rmse = sqrt(14/4), mae = 6/4
  REQUIRE(rmse(y, yhat) == Catch::Approx(std::sqrt(3.5)).epsilon(1e-14));
  REQUIRE(mae(y, yhat) == Catch::Approx(1.5).epsilon(1e-14));
  Eigen::VectorXd shorter(3);
  REQUIRE_THROWS_AS(rmse(y, shorter), UsageError);
  Eigen::VectorXd empty;
  REQUIRE_THROWS_AS(mae(empty, empty), UsageError);
}

TEST_CASE("quintile membership follows the percentile cuts with low ties",
          "[evaluation]") {
  // Values 1..10: cuts at 2.8, 4.6, 6.4, 8.2 (linear-interpolation
  // percentiles). Membership by "greater than cut" with ties going low.
  Eigen::VectorXd v(10);
  for (int i = 0; i < 10; ++i) v[i] = i + 1.0;
  auto q = detail::quintile_of(v);
  std::vector<int> expect = {0, 0, 1, 1, 2, 2, 3, 3, 4, 4};
  REQUIRE(q == expect);

  // A vector with heavy ties: the tied value sits in the lower quintile.
  Eigen::VectorXd ties(5);
  ties << 1.0, 1.0, 1.0, 1.0, 2.0;
  auto qt = detail::quintile_of(ties);
  REQUIRE(qt[0] == 0);
  REQUIRE(qt[3] == 0);
  REQUIRE(qt[4] == 4);
}

TEST_CASE("confusion matrix counts and fractions are consistent",
          "[evaluation]") {
  // Reversed prediction ordering puts every pair on the anti-diagonal.
  Eigen::VectorXd actual(10), pred(10);
  for (int i = 0; i < 10; ++i) {
    actual[i] = i + 1.0;
    pred[i] = 10.0 - i;
  }
  QuintileMatrix m = quintile_confusion(actual, pred);
  long total = 0;
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) total += m.counts[a][b];
  REQUIRE(total == 10);
  for (int a = 0; a < 5; ++a) {
    REQUIRE(m.counts[a][4 - a] == 2);
    REQUIRE(m.row_fractions[a][4 - a] == 1.0);
  }

  // Perfect agreement concentrates the diagonal.
  QuintileMatrix diag = quintile_confusion(actual, actual);
  for (int a = 0; a < 5; ++a) REQUIRE(diag.counts[a][a] == 2);
}

TEST_CASE("prediction reproduces training fits through the context",
          "[evaluation]") {
  auto trained = testsupport::train_small_model(91);
  REQUIRE_FALSE(trained.model.coefficients.empty());

  // Predicting on the training rows equals intercept + sum of block fits.
  Eigen::VectorXd expected =
      Eigen::VectorXd::Constant(trained.x_raw.rows(), trained.model.intercept);
  for (const auto& [idx, coef] : trained.model.coefficients)
    trained.blocks->block(idx).add_fitted(expected, coef, 1.0);
  Eigen::VectorXd got = predict(trained.model, trained.x_raw);
  REQUIRE(got.isApprox(expected, 1e-10));

  // New rows produce finite predictions, including out-of-range values that
  // clamp to the training range.
  Eigen::MatrixXd probe(3, 3);
  probe << -5.0, 0.5, 0.5, 0.5, 99.0, 0.5, 0.4, 0.3, 0.2;
  Eigen::VectorXd probe_pred = predict(trained.model, probe);
  REQUIRE(probe_pred.allFinite());

  AdditiveModel no_ctx = trained.model;
  no_ctx.context.reset();
  REQUIRE_THROWS_AS(predict(no_ctx, trained.x_raw), UsageError);
  REQUIRE_THROWS_AS(predict(trained.model, Eigen::MatrixXd(2, 7)), UsageError);
}

TEST_CASE("sparsity pattern marks mains on the diagonal and pairs off it",
          "[evaluation]") {
  AdditiveModel model;
  model.coefficients[BlockIndex::main(1)] = Eigen::VectorXd::Ones(3);
  model.coefficients[BlockIndex::pair(0, 2)] = Eigen::VectorXd::Ones(9);
  Eigen::MatrixXi s = sparsity_pattern(model, 4);
  REQUIRE(s.rows() == 4);
  REQUIRE(s(1, 1) == 1);
  REQUIRE(s(0, 2) == 1);
  REQUIRE(s(2, 0) == 1);  // symmetric
  REQUIRE(s.sum() == 3);
  REQUIRE(effective_covariates(model) == 3);  // {0, 1, 2}
}

TEST_CASE("partial dependence matches direct basis evaluation", "[evaluation]") {
  auto trained = testsupport::train_small_model(93);
  const auto& core = *trained.model.context->core;

  // Pick one main effect from the support.
  BlockIndex main_idx;
  bool found = false;
  for (const auto& [idx, coef] : trained.model.coefficients)
    if (!idx.is_interaction()) {
      main_idx = idx;
      found = true;
      break;
    }
  REQUIRE(found);

  PartialDependence pd = partial_dependence(trained.model, main_idx, 25);
  REQUIRE(pd.grid_a.size() == 25);
  REQUIRE(pd.value.size() == 25);
  REQUIRE(pd.grid_b.empty());

  // Recompute directly: standardize the grid, evaluate the banded basis on
  // the training knots, subtract the centering offsets.
  const Eigen::VectorXd& coef = trained.model.coefficients.at(main_idx);
  const Eigen::VectorXd& means =
      trained.model.context->block_col_means.at(main_idx);
  for (std::size_t g = 0; g < pd.grid_a.size(); ++g) {
    double z = (pd.grid_a[g] - core.standardizer.means[main_idx.j]) /
               core.standardizer.stdevs[main_idx.j];
    Eigen::VectorXd zvec(1);
    zvec << z;
    Eigen::MatrixXd row =
        bspline_basis(zvec, core.main_knots[static_cast<std::size_t>(main_idx.j)],
                      core.config.degree);
    double f = (row.row(0).transpose() - means).dot(coef);
    REQUIRE(pd.value[g] == Catch::Approx(f).margin(1e-10));
  }

  // Grid endpoints span the training range in original units.
  double lo_expected =
      core.main_knots[static_cast<std::size_t>(main_idx.j)][core.config.degree] *
          core.standardizer.stdevs[main_idx.j] +
      core.standardizer.means[main_idx.j];
  REQUIRE(pd.grid_a.front() == Catch::Approx(lo_expected).margin(1e-12));

  REQUIRE_THROWS_AS(partial_dependence(trained.model, BlockIndex::main(99), 5),
                    UsageError);
}

TEST_CASE("interaction partial dependence is a full lattice", "[evaluation]") {
  // Train with a strong enough interaction to keep one in the support.
  auto trained = testsupport::train_small_model(95, 400, 3, 1e-3, 1e-4);
  BlockIndex pair_idx;
  bool found = false;
  for (const auto& [idx, coef] : trained.model.coefficients)
    if (idx.is_interaction()) {
      pair_idx = idx;
      found = true;
      break;
    }
  REQUIRE(found);

  PartialDependence pd = partial_dependence(trained.model, pair_idx, 7);
  REQUIRE(pd.grid_a.size() == 7);
  REQUIRE(pd.grid_b.size() == 7);
  REQUIRE(pd.value.size() == 49);
  for (double v : pd.value) REQUIRE(std::isfinite(v));
}

TEST_CASE("support ordering ranks covariates by entry point", "[evaluation]") {
  // Build a fake two-row grid by hand: covariate 2 enters at m=0, covariate
  // 0 at m=1, covariate 1 never.
  PathGrid grid;
  grid.lambda1_values = {0.1};
  grid.lambda2_values = {1.0, 0.1, 0.01};
  grid.models.resize(3);
  grid.metrics.resize(3);
  grid.node_errors.resize(3);
  AdditiveModel m0, m1, m2;
  m0.coefficients[BlockIndex::main(2)] = Eigen::VectorXd::Ones(2);
  m1.coefficients[BlockIndex::main(2)] = Eigen::VectorXd::Ones(2);
  m1.coefficients[BlockIndex::main(0)] = Eigen::VectorXd::Ones(2);
  m2 = m1;
  m2.coefficients[BlockIndex::pair(0, 2)] = Eigen::VectorXd::Ones(4);
  grid.models[0] = m0;
  grid.models[1] = m1;
  grid.models[2] = m2;

  auto order = support_ordering(grid, 0);
  REQUIRE(order == std::vector<int>{2, 0});
  REQUIRE_THROWS_AS(support_ordering(grid, 5), UsageError);
}

TEST_CASE("csv renderers emit exact deterministic text", "[evaluation]") {
  REQUIRE(metrics_csv(0.5, 0.25) == "metric,value\nrmse,0.5\nmae,0.25\n");

  QuintileMatrix m;
  m.counts[0][0] = 3;
  m.counts[0][1] = 1;
  m.row_fractions[0][0] = 0.75;
  m.row_fractions[0][1] = 0.25;
  std::string counts = quintile_counts_csv(m);
  REQUIRE(counts.substr(0, counts.find('\n')) ==
          "actual_quintile,pred_1,pred_2,pred_3,pred_4,pred_5");
  REQUIRE(counts.find("1,3,1,0,0,0\n") != std::string::npos);
  std::string fracs = quintile_fractions_csv(m);
  REQUIRE(fracs.find("1,0.75,0.25,0,0,0\n") != std::string::npos);

  Eigen::MatrixXi s = Eigen::MatrixXi::Zero(3, 3);
  s(0, 0) = 1;
  s(1, 2) = 1;
  s(2, 1) = 1;
  REQUIRE(sparsity_dense_csv(s) ==
          "row,col_0,col_1,col_2\n0,1,0,0\n1,0,0,1\n2,0,1,0\n");
  REQUIRE(sparsity_coords_csv(s) == "row,col\n0,0\n1,2\n2,1\n");

  std::string so = support_ordering_csv({2, 0}, {"a", "b", "c"});
  REQUIRE(so == "rank,covariate,name\n1,2,c\n2,0,a\n");

  PartialDependence pd;
  pd.block = BlockIndex::main(0);
  pd.grid_a = {0.0, 1.0};
  pd.value = {0.5, -0.5};
  REQUIRE(partial_dependence_csv(pd) == "x,f\n0,0.5\n1,-0.5\n");
  PartialDependence pd2;
  pd2.block = BlockIndex::pair(0, 1);
  pd2.grid_a = {0.0, 1.0};
  pd2.grid_b = {2.0};
  pd2.value = {1.0, 2.0};
  REQUIRE(partial_dependence_csv(pd2) == "x1,x2,f\n0,2,1\n1,2,2\n");
}
