#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "samint/block_set.hpp"
#include "samint/model.hpp"
#include "samint/solver.hpp"
#include "samint/util.hpp"

namespace samint {

struct NodeMetrics {
  double train_rmse = std::numeric_limits<double>::quiet_NaN();
  double val_rmse = std::numeric_limits<double>::quiet_NaN();
  double val_mae = std::numeric_limits<double>::quiet_NaN();
  int n_main = 0;
  int n_interaction = 0;
  bool has_validation = false;
};

// 2-D regularization surface over (lambda1, lambda2), both strictly
// decreasing. Nodes are stored row-major by [l * M + m]; a node without a
// model carries its failure message instead.
struct PathGrid {
  std::vector<double> lambda1_values;
  std::vector<double> lambda2_values;
  double alpha = 1.0;
  std::vector<std::optional<AdditiveModel>> models;
  std::vector<NodeMetrics> metrics;
  std::vector<std::string> node_errors;

  int n_lambda1() const { return static_cast<int>(lambda1_values.size()); }
  int n_lambda2() const { return static_cast<int>(lambda2_values.size()); }
  std::size_t node(int l, int m) const {
    return static_cast<std::size_t>(l) * static_cast<std::size_t>(lambda2_values.size()) +
           static_cast<std::size_t>(m);
  }
  PenaltyParams params_at(int l, int m) const {
    return PenaltyParams{lambda1_values[static_cast<std::size_t>(l)],
                         lambda2_values[static_cast<std::size_t>(m)], alpha};
  }
};

inline std::vector<double> log_spaced_decreasing(double hi, double lo, int count) {
  if (count < 1) throw UsageError("grid needs at least one value");
  if (!(hi > 0.0) || !(lo > 0.0) || hi < lo)
    throw UsageError("log grid needs 0 < lo <= hi");
  std::vector<double> out(static_cast<std::size_t>(count));
  if (count == 1) {
    out[0] = hi;
    return out;
  }
  const double lh = std::log(hi), ll = std::log(lo);
  for (int i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] =
        std::exp(lh + (ll - lh) * static_cast<double>(i) / static_cast<double>(count - 1));
  out[0] = hi;
  out[static_cast<std::size_t>(count - 1)] = lo;
  return out;
}

// Builds the empty grid. The lambda2 column is anchored at the smallest
// value that zeroes every block at the most-regularized lambda1 and spans
// four decades below it. Pass n_lambda2 = 0 to derive it from the node
// budget.
inline PathGrid build_grid(const BlockProvider& provider,
                           const Eigen::VectorXd& y_centered, int n_lambda1,
                           int n_lambda2, std::pair<double, double> lambda1_range,
                           double alpha, const FitOptions& options = FitOptions(),
                           FactorizationCache* cache = nullptr, int node_budget = 1000) {
  if (n_lambda1 < 1) throw UsageError("need at least one lambda1 value");
  if (!(lambda1_range.first > 0.0) || lambda1_range.second < lambda1_range.first)
    throw UsageError("lambda1 range must satisfy 0 < min <= max");
  if (n_lambda2 == 0) n_lambda2 = std::max(1, node_budget / n_lambda1);
  if (n_lambda2 < 1) throw UsageError("need at least one lambda2 value");
  if (static_cast<long>(n_lambda1) * static_cast<long>(n_lambda2) > node_budget)
    throw UsageError("grid exceeds node budget of " + std::to_string(node_budget));

  PathGrid grid;
  grid.alpha = alpha;
  grid.lambda1_values =
      log_spaced_decreasing(lambda1_range.second, lambda1_range.first, n_lambda1);

  double l2max = compute_lambda2_max(provider, y_centered, grid.lambda1_values[0],
                                     alpha, options, cache);
  if (!(l2max > 0.0)) l2max = 1e-12;  // response orthogonal to every block
  grid.lambda2_values = log_spaced_decreasing(l2max, l2max * 1e-4, n_lambda2);

  std::size_t n_nodes = static_cast<std::size_t>(n_lambda1) * static_cast<std::size_t>(n_lambda2);
  grid.models.resize(n_nodes);
  grid.metrics.resize(n_nodes);
  grid.node_errors.resize(n_nodes);
  return grid;
}

namespace detail {

inline void fit_node(PathGrid& grid, const BlockProvider& provider,
                     const Eigen::VectorXd& y_centered, int l, int m,
                     const AdditiveModel* warm, const FitOptions& options,
                     FactorizationCache* cache) {
  std::size_t at = grid.node(l, m);
  try {
    FitResult res = fit(provider, y_centered, grid.params_at(l, m), options, warm, cache);
    NodeMetrics nm;
    nm.train_rmse = std::sqrt(res.state.residual.squaredNorm() /
                              static_cast<double>(y_centered.size()));
    nm.n_main = res.model.n_main();
    nm.n_interaction = res.model.n_interaction();
    grid.metrics[at] = nm;
    grid.models[at] = std::move(res.model);
    grid.node_errors[at].clear();
  } catch (const std::exception& e) {
    grid.models[at].reset();
    grid.node_errors[at] = e.what();
  }
}

}  // namespace detail

// Fills the grid: the most-regularized lambda1 column is fit top-down in
// lambda2 (each node warm-started from its predecessor), then each lambda2
// row extends laterally toward smaller lambda1. Rows are independent, so the
// lateral sweep may run them in parallel; node failures are recorded and the
// sweep continues from the nearest successful predecessor.
inline void fit_path(PathGrid& grid, const BlockProvider& provider,
                     const Eigen::VectorXd& y_centered,
                     const FitOptions& options = FitOptions(),
                     FactorizationCache* cache = nullptr) {
  const int n_l1 = grid.n_lambda1();
  const int n_l2 = grid.n_lambda2();

  const AdditiveModel* warm = nullptr;
  for (int m = 0; m < n_l2; ++m) {
    detail::fit_node(grid, provider, y_centered, 0, m, warm, options, cache);
    if (grid.models[grid.node(0, m)]) warm = &*grid.models[grid.node(0, m)];
  }

  FitOptions row_options = options;
  row_options.threads = 1;  // per-row work stays sequential; rows parallelize
  parallel_for(static_cast<std::size_t>(n_l2), options.threads,
               [&](std::size_t b, std::size_t e) {
                 for (std::size_t m = b; m < e; ++m) {
                   const AdditiveModel* prev = nullptr;
                   if (grid.models[grid.node(0, static_cast<int>(m))])
                     prev = &*grid.models[grid.node(0, static_cast<int>(m))];
                   for (int l = 1; l < n_l1; ++l) {
                     detail::fit_node(grid, provider, y_centered, l, static_cast<int>(m),
                                      prev, row_options, cache);
                     if (grid.models[grid.node(l, static_cast<int>(m))])
                       prev = &*grid.models[grid.node(l, static_cast<int>(m))];
                   }
                 }
               });
}

// Fills validation metrics for every fitted node from predictions on a
// standardized validation design.
inline void fill_validation_metrics(PathGrid& grid, const BasisEvaluator& evaluator,
                                    const Eigen::VectorXd& y_val_centered) {
  if (evaluator.n() != y_val_centered.size())
    throw UsageError("validation response length mismatch");
  const auto n = static_cast<double>(y_val_centered.size());
  for (std::size_t at = 0; at < grid.models.size(); ++at) {
    if (!grid.models[at] || grid.metrics[at].has_validation) continue;
    Eigen::VectorXd pred = evaluator.accumulate(grid.models[at]->coefficients);
    Eigen::VectorXd err = y_val_centered - pred;
    grid.metrics[at].val_rmse = std::sqrt(err.squaredNorm() / n);
    grid.metrics[at].val_mae = err.cwiseAbs().sum() / n;
    grid.metrics[at].has_validation = true;
  }
}

enum class SelectionCriterion { ValRmse, ValMae };

struct Selection {
  int l = -1;
  int m = -1;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double val_rmse = 0.0;
  double val_mae = 0.0;
};

// Picks the validation-best node. Ties break toward the smaller support,
// then toward the larger lambda2 (and larger lambda1 as a final resort).
inline Selection select_model(PathGrid& grid, const BasisEvaluator& evaluator,
                              const Eigen::VectorXd& y_val_centered,
                              SelectionCriterion criterion = SelectionCriterion::ValRmse,
                              std::optional<int> max_support = std::nullopt) {
  fill_validation_metrics(grid, evaluator, y_val_centered);
  Selection best;
  double best_metric = std::numeric_limits<double>::infinity();
  long best_support = std::numeric_limits<long>::max();
  for (int l = 0; l < grid.n_lambda1(); ++l)
    for (int m = 0; m < grid.n_lambda2(); ++m) {
      std::size_t at = grid.node(l, m);
      if (!grid.models[at]) continue;
      const NodeMetrics& nm = grid.metrics[at];
      long support = nm.n_main + nm.n_interaction;
      if (max_support && support > *max_support) continue;
      double metric =
          criterion == SelectionCriterion::ValRmse ? nm.val_rmse : nm.val_mae;
      if (std::isnan(metric)) continue;
      bool better = metric < best_metric;
      if (!better && metric == best_metric) {
        if (support < best_support)
          better = true;
        else if (support == best_support && best.m >= 0 &&
                 (m < best.m || (m == best.m && l < best.l)))
          better = true;
      }
      if (better) {
        best_metric = metric;
        best_support = support;
        best = Selection{l, m, grid.lambda1_values[static_cast<std::size_t>(l)],
                         grid.lambda2_values[static_cast<std::size_t>(m)],
                         nm.val_rmse, nm.val_mae};
      }
    }
  if (best.l < 0)
    throw SolverError(
        "model selection found no eligible node (all failed or over max_support)");
  return best;
}

}  // namespace samint
