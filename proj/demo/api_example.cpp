// Minimal library walkthrough: simulate data, fit one penalized model, then
// sweep a small regularization surface and print its summary.
#include <samint/samint.hpp>

#include <cmath>
#include <iostream>
#include <random>

int main() {
  using namespace samint;

  // Simulate n x p covariates on [0,1] with two main effects and one
  // interaction driving the response.
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.3);
  const Eigen::Index n = 600;
  const int p = 5;
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = unif(rng);
    const double u0 = x(i, 0), u1 = x(i, 1);
    y[i] = std::sin(6.283185307179586 * u0) + 4.0 * (u1 - 0.5) * (u1 - 0.5) +
           2.0 * x(i, 2) * x(i, 3) + noise(rng);
  }

  // Standardize covariates, center the response.
  Eigen::MatrixXd x_std = x;
  for (int j = 0; j < p; ++j) {
    const double mean = x.col(j).mean();
    const double sd = std::sqrt((x.col(j).array() - mean).square().sum() /
                                static_cast<double>(n - 1));
    x_std.col(j) = (x.col(j).array() - mean) / (sd > 0.0 ? sd : 1.0);
  }
  Eigen::VectorXd y_centered = y.array() - y.mean();

  // Penalized B-spline blocks: one per covariate, one per covariate pair.
  SplineConfig config;
  config.degree = 2;
  config.n_knots_main = 4;
  config.n_knots_interaction_per_axis = 2;
  BlockSet blocks(x_std, config);

  // One fit at fixed penalties.
  PenaltyParams params{/*lambda1=*/1e-3, /*lambda2=*/0.02, /*alpha=*/1.0};
  FitResult single = fit(blocks, y_centered, params);
  std::cout << "single fit: " << single.model.coefficients.size()
            << " active blocks, objective "
            << full_objective(blocks, y_centered, single.model, params) << "\n";
  for (const auto& [idx, coef] : single.model.coefficients)
    std::cout << "  " << idx.label() << "  (" << coef.size() << " coefficients)\n";

  // A small path over the (lambda1, lambda2) surface, warm-started node to
  // node; lambda2 is anchored at the value that empties the loosest column.
  FitOptions options;
  FactorizationCache cache(std::size_t{1} << 28);
  PathGrid grid = build_grid(blocks, y_centered, /*n_lambda1=*/5, /*n_lambda2=*/6,
                             {1e-4, 1.0}, /*alpha=*/1.0, options, &cache);
  fit_path(grid, blocks, y_centered, options, &cache);
  std::cout << "\npath summary (lambda1,lambda2,n_main,n_interaction,...):\n"
            << grid_summary_csv(grid);
  return 0;
}
