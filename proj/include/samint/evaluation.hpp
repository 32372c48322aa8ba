#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "samint/block.hpp"
#include "samint/model.hpp"
#include "samint/path.hpp"
#include "samint/splines.hpp"
#include "samint/util.hpp"

namespace samint {

namespace detail {

// Rebuilds the support blocks of a fitted model over new (raw) covariate
// rows, using the training standardizer, knots, and column means carried by
// the model context. Spline evaluation clamps to the training knot range, so
// out-of-range inputs predict at the nearest boundary.
class ModelEvaluator {
 public:
  ModelEvaluator(const AdditiveModel& model, const Eigen::MatrixXd& x_raw) {
    if (!model.context || !model.context->core)
      throw UsageError("model carries no context; cannot predict");
    const ModelContextCore& core = *model.context->core;
    if (x_raw.cols() != core.p())
      throw UsageError("prediction data has " + std::to_string(x_raw.cols()) +
                       " columns, model expects " + std::to_string(core.p()));
    x_std_ = core.standardizer.apply(x_raw);
    for (const auto& [idx, coef] : model.coefficients) {
      if (idx.is_interaction()) {
        ensure(core, idx.j, true);
        ensure(core, idx.k, true);
      } else {
        ensure(core, idx.j, false);
      }
    }
    model_ = &model;
  }

  Eigen::Index n() const { return x_std_.rows(); }

  Eigen::VectorXd predict() const {
    Eigen::VectorXd out =
        Eigen::VectorXd::Constant(x_std_.rows(), model_->intercept);
    for (const auto& [idx, coef] : model_->coefficients)
      make_block(idx).add_fitted(out, coef, 1.0);
    return out;
  }

  Block make_block(const BlockIndex& idx) const {
    auto cm = model_->context->block_col_means.find(idx);
    if (cm == model_->context->block_col_means.end())
      throw UsageError("model context lacks column means for " + idx.label());
    if (idx.is_interaction())
      return Block::interaction(idx, inter_.at(idx.j), inter_.at(idx.k),
                                empty_penalty(), cm->second);
    return Block::main(idx, main_.at(idx.j), Eigen::MatrixXd(), cm->second);
  }

 private:
  static std::shared_ptr<const Eigen::MatrixXd> empty_penalty() {
    static const auto kEmpty = std::make_shared<const Eigen::MatrixXd>();
    return kEmpty;
  }

  void ensure(const ModelContextCore& core, int j, bool interaction) {
    auto& cache = interaction ? inter_ : main_;
    if (cache.count(j)) return;
    const auto& knots = interaction ? core.interaction_knots.at(static_cast<std::size_t>(j))
                                    : core.main_knots.at(static_cast<std::size_t>(j));
    cache[j] = std::make_shared<const BandedBasis>(
        bspline_basis_banded(x_std_.col(j), knots, core.config.degree));
  }

  const AdditiveModel* model_ = nullptr;
  Eigen::MatrixXd x_std_;
  std::map<int, std::shared_ptr<const BandedBasis>> main_;
  std::map<int, std::shared_ptr<const BandedBasis>> inter_;
};

}  // namespace detail

// Predicts responses on raw (unstandardized) covariate rows.
inline Eigen::VectorXd predict(const AdditiveModel& model,
                               const Eigen::MatrixXd& x_raw) {
  return detail::ModelEvaluator(model, x_raw).predict();
}

inline double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size()) throw UsageError("rmse: length mismatch");
  if (y.size() == 0) throw UsageError("rmse: empty vectors");
  return std::sqrt((y - yhat).squaredNorm() / static_cast<double>(y.size()));
}

inline double mae(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size()) throw UsageError("mae: length mismatch");
  if (y.size() == 0) throw UsageError("mae: empty vectors");
  return (y - yhat).cwiseAbs().sum() / static_cast<double>(y.size());
}

struct QuintileMatrix {
  std::array<std::array<long, 5>, 5> counts{};
  std::array<std::array<double, 5>, 5> row_fractions{};
};

namespace detail {

// Quintile membership against the vector's own 20/40/60/80 percentiles;
// ties fall to the lower quintile.
inline std::vector<int> quintile_of(const Eigen::VectorXd& v) {
  Eigen::VectorXd sorted = v;
  std::sort(sorted.data(), sorted.data() + sorted.size());
  std::array<double, 4> cut{};
  for (int q = 1; q <= 4; ++q)
    cut[static_cast<std::size_t>(q - 1)] =
        empirical_quantile_sorted(sorted, 0.2 * q);
  std::vector<int> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    int q = 0;
    while (q < 4 && v[i] > cut[static_cast<std::size_t>(q)]) ++q;
    out[static_cast<std::size_t>(i)] = q;
  }
  return out;
}

}  // namespace detail

inline QuintileMatrix quintile_confusion(const Eigen::VectorXd& actual,
                                         const Eigen::VectorXd& predicted) {
  if (actual.size() != predicted.size())
    throw UsageError("quintile_confusion: length mismatch");
  if (actual.size() == 0) throw UsageError("quintile_confusion: empty vectors");
  std::vector<int> qa = detail::quintile_of(actual);
  std::vector<int> qp = detail::quintile_of(predicted);
  QuintileMatrix m;
  for (std::size_t i = 0; i < qa.size(); ++i)
    ++m.counts[static_cast<std::size_t>(qa[i])][static_cast<std::size_t>(qp[i])];
  for (int a = 0; a < 5; ++a) {
    long row = 0;
    for (int b = 0; b < 5; ++b) row += m.counts[a][b];
    for (int b = 0; b < 5; ++b)
      m.row_fractions[a][b] =
          row == 0 ? 0.0 : static_cast<double>(m.counts[a][b]) / static_cast<double>(row);
  }
  return m;
}

// Symmetric p×p 0/1 matrix: diagonal marks selected mains, off-diagonal
// pairs mark selected interactions.
inline Eigen::MatrixXi sparsity_pattern(const AdditiveModel& model, int p) {
  Eigen::MatrixXi s = Eigen::MatrixXi::Zero(p, p);
  for (const auto& [idx, coef] : model.coefficients) {
    if (idx.j >= p || (idx.is_interaction() && idx.k >= p))
      throw UsageError("sparsity_pattern: block index outside covariate range");
    if (idx.is_interaction()) {
      s(idx.j, idx.k) = 1;
      s(idx.k, idx.j) = 1;
    } else {
      s(idx.j, idx.j) = 1;
    }
  }
  return s;
}

inline Eigen::MatrixXi sparsity_pattern(const AdditiveModel& model) {
  if (!model.context || !model.context->core)
    throw UsageError("sparsity_pattern: model carries no context");
  return sparsity_pattern(model, model.context->core->p());
}

inline int effective_covariates(const AdditiveModel& model) {
  std::vector<int> seen;
  for (const auto& [idx, coef] : model.coefficients) {
    seen.push_back(idx.j);
    if (idx.is_interaction()) seen.push_back(idx.k);
  }
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  return static_cast<int>(seen.size());
}

struct PartialDependence {
  BlockIndex block;
  // Mains: grid_a and value are parallel (grid_b empty). Interactions: value
  // is laid out row-major over grid_a × grid_b.
  std::vector<double> grid_a;
  std::vector<double> grid_b;
  std::vector<double> value;
};

namespace detail {

inline std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> out(static_cast<std::size_t>(count));
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  for (int i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] =
        lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return out;
}

// Training-range endpoints of a knot vector, converted to original units.
inline std::pair<double, double> knot_range_original(const Eigen::VectorXd& knots,
                                                     int degree, double mean,
                                                     double stdev) {
  double lo = knots[degree];
  double hi = knots[knots.size() - degree - 1];
  return {lo * stdev + mean, hi * stdev + mean};
}

}  // namespace detail

// Component function values on a lattice spanning the training range, in
// original covariate units. The model's centering is applied, so values are
// offsets around the model intercept.
inline PartialDependence partial_dependence(const AdditiveModel& model,
                                            const BlockIndex& block, int grid_size) {
  if (grid_size < 1) throw UsageError("partial_dependence: grid_size must be >= 1");
  if (!model.context || !model.context->core)
    throw UsageError("partial_dependence: model carries no context");
  const ModelContextCore& core = *model.context->core;
  auto coef_it = model.coefficients.find(block);
  if (coef_it == model.coefficients.end())
    throw UsageError("partial_dependence: " + block.label() + " is not in the support");
  auto cm_it = model.context->block_col_means.find(block);
  if (cm_it == model.context->block_col_means.end())
    throw UsageError("model context lacks column means for " + block.label());
  const Eigen::VectorXd& coef = coef_it->second;
  const Eigen::VectorXd& means = cm_it->second;

  PartialDependence pd;
  pd.block = block;
  const int degree = core.config.degree;

  if (!block.is_interaction()) {
    const auto& knots = core.main_knots.at(static_cast<std::size_t>(block.j));
    auto [lo, hi] = detail::knot_range_original(
        knots, degree, core.standardizer.means[static_cast<std::size_t>(block.j)],
        core.standardizer.stdevs[static_cast<std::size_t>(block.j)]);
    pd.grid_a = detail::linspace(lo, hi, grid_size);
    Eigen::VectorXd x(grid_size);
    for (int i = 0; i < grid_size; ++i) x[i] = pd.grid_a[static_cast<std::size_t>(i)];
    Eigen::VectorXd xs =
        (x.array() - core.standardizer.means[static_cast<std::size_t>(block.j)]) /
        core.standardizer.stdevs[static_cast<std::size_t>(block.j)];
    Eigen::MatrixXd basis = bspline_basis(xs, knots, degree);
    Eigen::VectorXd f = (basis.rowwise() - means.transpose()) * coef;
    pd.value.assign(f.data(), f.data() + f.size());
    return pd;
  }

  const auto& ka = core.interaction_knots.at(static_cast<std::size_t>(block.j));
  const auto& kb = core.interaction_knots.at(static_cast<std::size_t>(block.k));
  auto [lo_a, hi_a] = detail::knot_range_original(
      ka, degree, core.standardizer.means[static_cast<std::size_t>(block.j)],
      core.standardizer.stdevs[static_cast<std::size_t>(block.j)]);
  auto [lo_b, hi_b] = detail::knot_range_original(
      kb, degree, core.standardizer.means[static_cast<std::size_t>(block.k)],
      core.standardizer.stdevs[static_cast<std::size_t>(block.k)]);
  pd.grid_a = detail::linspace(lo_a, hi_a, grid_size);
  pd.grid_b = detail::linspace(lo_b, hi_b, grid_size);

  Eigen::VectorXd xa(grid_size), xb(grid_size);
  for (int i = 0; i < grid_size; ++i) {
    xa[i] = (pd.grid_a[static_cast<std::size_t>(i)] -
             core.standardizer.means[static_cast<std::size_t>(block.j)]) /
            core.standardizer.stdevs[static_cast<std::size_t>(block.j)];
    xb[i] = (pd.grid_b[static_cast<std::size_t>(i)] -
             core.standardizer.means[static_cast<std::size_t>(block.k)]) /
            core.standardizer.stdevs[static_cast<std::size_t>(block.k)];
  }
  Eigen::MatrixXd ba = bspline_basis(xa, ka, degree);
  Eigen::MatrixXd bb = bspline_basis(xb, kb, degree);
  const Eigen::Index dim_b = bb.cols();
  pd.value.resize(static_cast<std::size_t>(grid_size) * static_cast<std::size_t>(grid_size));
  for (int ia = 0; ia < grid_size; ++ia)
    for (int ib = 0; ib < grid_size; ++ib) {
      double acc = 0.0;
      for (Eigen::Index s = 0; s < ba.cols(); ++s) {
        if (ba(ia, s) == 0.0) continue;
        for (Eigen::Index t = 0; t < dim_b; ++t)
          acc += ba(ia, s) * bb(ib, t) * coef[s * dim_b + t];
      }
      acc -= means.dot(coef);
      pd.value[static_cast<std::size_t>(ia) * static_cast<std::size_t>(grid_size) +
               static_cast<std::size_t>(ib)] = acc;
    }
  return pd;
}

// Orders main-effect covariates in one lambda1 row of the grid by the lambda2
// at which they first become active (largest first, ties by covariate id).
inline std::vector<int> support_ordering(const PathGrid& grid, int l) {
  if (l < 0 || l >= grid.n_lambda1())
    throw UsageError("support_ordering: lambda1 row out of range");
  std::map<int, int> first_m;
  for (int m = 0; m < grid.n_lambda2(); ++m) {
    const auto& node = grid.models[grid.node(l, m)];
    if (!node) continue;
    for (const auto& [idx, coef] : node->coefficients)
      if (!idx.is_interaction() && !first_m.count(idx.j)) first_m[idx.j] = m;
  }
  std::vector<std::pair<int, int>> order;  // (first_m, covariate)
  order.reserve(first_m.size());
  for (const auto& [j, m] : first_m) order.emplace_back(m, j);
  std::sort(order.begin(), order.end());
  std::vector<int> out;
  out.reserve(order.size());
  for (const auto& [m, j] : order) out.push_back(j);
  return out;
}

// --- CSV renderers (deterministic formatting via format_double) ---

inline std::string metrics_csv(double rmse_value, double mae_value) {
  std::ostringstream os;
  os << "metric,value\n";
  os << "rmse," << format_double(rmse_value) << "\n";
  os << "mae," << format_double(mae_value) << "\n";
  return os.str();
}

inline std::string quintile_counts_csv(const QuintileMatrix& m) {
  std::ostringstream os;
  os << "actual_quintile,pred_1,pred_2,pred_3,pred_4,pred_5\n";
  for (int a = 0; a < 5; ++a) {
    os << (a + 1);
    for (int b = 0; b < 5; ++b) os << "," << m.counts[a][b];
    os << "\n";
  }
  return os.str();
}

inline std::string quintile_fractions_csv(const QuintileMatrix& m) {
  std::ostringstream os;
  os << "actual_quintile,pred_1,pred_2,pred_3,pred_4,pred_5\n";
  for (int a = 0; a < 5; ++a) {
    os << (a + 1);
    for (int b = 0; b < 5; ++b) os << "," << format_double(m.row_fractions[a][b]);
    os << "\n";
  }
  return os.str();
}

inline std::string sparsity_dense_csv(const Eigen::MatrixXi& s) {
  std::ostringstream os;
  os << "row";
  for (Eigen::Index k = 0; k < s.cols(); ++k) os << ",col_" << k;
  os << "\n";
  for (Eigen::Index j = 0; j < s.rows(); ++j) {
    os << j;
    for (Eigen::Index k = 0; k < s.cols(); ++k) os << "," << s(j, k);
    os << "\n";
  }
  return os.str();
}

inline std::string sparsity_coords_csv(const Eigen::MatrixXi& s) {
  std::ostringstream os;
  os << "row,col\n";
  for (Eigen::Index j = 0; j < s.rows(); ++j)
    for (Eigen::Index k = 0; k < s.cols(); ++k)
      if (s(j, k) != 0) os << j << "," << k << "\n";
  return os.str();
}

inline std::string support_ordering_csv(const std::vector<int>& order,
                                        const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "rank,covariate,name\n";
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto j = static_cast<std::size_t>(order[r]);
    os << (r + 1) << "," << order[r] << ","
       << (j < names.size() ? names[j] : "") << "\n";
  }
  return os.str();
}

inline std::string partial_dependence_csv(const PartialDependence& pd) {
  std::ostringstream os;
  if (pd.grid_b.empty()) {
    os << "x,f\n";
    for (std::size_t i = 0; i < pd.grid_a.size(); ++i)
      os << format_double(pd.grid_a[i]) << "," << format_double(pd.value[i]) << "\n";
    return os.str();
  }
  os << "x1,x2,f\n";
  for (std::size_t ia = 0; ia < pd.grid_a.size(); ++ia)
    for (std::size_t ib = 0; ib < pd.grid_b.size(); ++ib)
      os << format_double(pd.grid_a[ia]) << "," << format_double(pd.grid_b[ib]) << ","
         << format_double(pd.value[ia * pd.grid_b.size() + ib]) << "\n";
  return os.str();
}

}  // namespace samint
