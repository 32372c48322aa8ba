#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "samint/util.hpp"

namespace samint {

enum class KnotPlacement { UniformOnRange, Quantile };

inline std::string to_string(KnotPlacement p) {
  return p == KnotPlacement::UniformOnRange ? "uniform" : "quantile";
}

inline KnotPlacement knot_placement_from_string(const std::string& s) {
  if (s == "uniform") return KnotPlacement::UniformOnRange;
  if (s == "quantile") return KnotPlacement::Quantile;
  throw UsageError("unknown knot placement '" + s + "' (expected uniform|quantile)");
}

// Basis configuration shared by every covariate. Knot counts refer to
// interior knots; a degree-d basis over q interior knots has q + d + 1
// columns once the boundary knots are repeated d + 1 times.
struct SplineConfig {
  int degree = 3;
  int n_knots_main = 10;
  int n_knots_interaction_per_axis = 5;
  KnotPlacement knot_placement = KnotPlacement::Quantile;

  void validate() const {
    if (degree < 0) throw UsageError("spline degree must be >= 0");
    if (n_knots_main < degree + 1)
      throw UsageError("n_knots_main must be >= degree + 1");
    if (n_knots_interaction_per_axis < 1)
      throw UsageError("n_knots_interaction_per_axis must be >= 1");
  }
};

// Linear-interpolation empirical quantile on a sorted vector
// (q = (n - 1) p, interpolate between the bracketing order statistics).
inline double empirical_quantile_sorted(const Eigen::VectorXd& sorted, double p) {
  const Eigen::Index n = sorted.size();
  if (n == 0) throw DataError("quantile of empty vector");
  if (n == 1) return sorted[0];
  double pos = p * static_cast<double>(n - 1);
  auto lo = static_cast<Eigen::Index>(std::floor(pos));
  if (lo < 0) lo = 0;
  if (lo >= n - 1) return sorted[n - 1];
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double empirical_quantile(const Eigen::VectorXd& values, double p) {
  Eigen::VectorXd sorted = values;
  std::sort(sorted.data(), sorted.data() + sorted.size());
  return empirical_quantile_sorted(sorted, p);
}

// Full padded knot vector: boundary knots (data min / max) repeated
// degree + 1 times around the interior sequence. Interior knots are placed
// uniformly on the range or at empirical quantiles, then de-duplicated;
// duplicates can only arise from heavily tied data.
inline Eigen::VectorXd make_knots(const Eigen::VectorXd& values, int n_interior,
                                  int degree, KnotPlacement placement) {
  if (degree < 0) throw UsageError("spline degree must be >= 0");
  if (n_interior < 1) throw UsageError("need at least one interior knot");
  if (values.size() == 0) throw DataError("make_knots: empty value vector");

  Eigen::VectorXd sorted = values;
  std::sort(sorted.data(), sorted.data() + sorted.size());
  Eigen::Index n_distinct = 1;
  for (Eigen::Index i = 1; i < sorted.size(); ++i)
    if (sorted[i] != sorted[i - 1]) ++n_distinct;
  if (n_distinct < n_interior)
    throw DataError("degenerate covariate: " + std::to_string(n_distinct) +
                    " distinct values < " + std::to_string(n_interior) +
                    " required knots");

  const double lo = sorted[0];
  const double hi = sorted[sorted.size() - 1];
  if (!(hi > lo)) throw DataError("degenerate covariate: constant values");

  std::vector<double> interior;
  interior.reserve(static_cast<std::size_t>(n_interior));
  for (int i = 1; i <= n_interior; ++i) {
    double k;
    if (placement == KnotPlacement::UniformOnRange) {
      k = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_interior + 1);
    } else {
      k = empirical_quantile_sorted(sorted, static_cast<double>(i) /
                                                static_cast<double>(n_interior + 1));
    }
    if (k > lo && k < hi && (interior.empty() || k > interior.back()))
      interior.push_back(k);
  }

  const int pad = degree + 1;
  Eigen::VectorXd knots(2 * pad + static_cast<Eigen::Index>(interior.size()));
  for (int i = 0; i < pad; ++i) knots[i] = lo;
  for (std::size_t i = 0; i < interior.size(); ++i)
    knots[pad + static_cast<Eigen::Index>(i)] = interior[i];
  for (int i = 0; i < pad; ++i)
    knots[pad + static_cast<Eigen::Index>(interior.size()) + i] = hi;
  return knots;
}

inline Eigen::VectorXd make_knots(const Eigen::VectorXd& values,
                                  const SplineConfig& config) {
  config.validate();
  return make_knots(values, config.n_knots_main, config.degree,
                    config.knot_placement);
}

// Row-sparse basis storage: row i has `width` consecutive nonzero columns
// starting at offsets[i]. A dense matrix wraps as width == n_cols with all
// offsets zero, so downstream kernels handle both without branching.
struct BandedBasis {
  int n_cols = 0;
  int degree = 0;
  Eigen::VectorXd knots;  // empty for dense wraps
  Eigen::VectorXi offsets;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values;

  Eigen::Index rows() const { return offsets.size(); }
  int width() const { return static_cast<int>(values.cols()); }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows(), n_cols);
    for (Eigen::Index i = 0; i < rows(); ++i)
      for (int t = 0; t < width(); ++t) out(i, offsets[i] + t) = values(i, t);
    return out;
  }

  static BandedBasis wrap_dense(const Eigen::MatrixXd& m) {
    BandedBasis b;
    b.n_cols = static_cast<int>(m.cols());
    b.degree = 0;
    b.offsets = Eigen::VectorXi::Zero(m.rows());
    b.values = m;
    return b;
  }
};

namespace detail {

// Largest valid span index i with knots[i] <= x < knots[i+1]; out-of-range
// x is clamped to the boundary spans (the right boundary itself falls in the
// last interior span so the basis still sums to one there).
inline int find_span(const Eigen::VectorXd& knots, int degree, double x) {
  const int lo = degree;
  const int hi = static_cast<int>(knots.size()) - degree - 2;
  if (x >= knots[hi + 1]) return hi;
  if (x <= knots[lo]) return lo;
  int a = lo, b = hi;
  while (a < b) {
    int mid = (a + b + 1) / 2;
    if (knots[mid] <= x)
      a = mid;
    else
      b = mid - 1;
  }
  return a;
}

// Triangular de Boor recursion for the degree + 1 basis values that are
// nonzero on the span of x. Writes into out[0..degree].
inline void deboor_values(const Eigen::VectorXd& knots, int degree, int span,
                          double x, double* out) {
  out[0] = 1.0;
  if (degree == 0) return;
  double left[32];
  double right[32];
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - knots[span + 1 - j];
    right[j] = knots[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

}  // namespace detail

// Evaluates the B-spline basis at every input, clamping out-of-range values
// to the knot range first. Rows carry exactly degree + 1 nonzeros.
inline BandedBasis bspline_basis_banded(const Eigen::VectorXd& values,
                                        const Eigen::VectorXd& knots, int degree) {
  if (degree < 0 || degree > 30) throw UsageError("unsupported spline degree");
  const int n_cols = static_cast<int>(knots.size()) - degree - 1;
  if (n_cols < degree + 1)
    throw UsageError("knot vector too short for requested degree");
  for (Eigen::Index i = 1; i < knots.size(); ++i)
    if (knots[i] < knots[i - 1]) throw UsageError("knots must be non-decreasing");

  const double lo = knots[degree];
  const double hi = knots[knots.size() - degree - 1];
  if (!(hi > lo)) throw UsageError("empty knot range");

  BandedBasis basis;
  basis.n_cols = n_cols;
  basis.degree = degree;
  basis.knots = knots;
  basis.offsets.resize(values.size());
  basis.values.resize(values.size(), degree + 1);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    double x = std::min(hi, std::max(lo, values[i]));
    int span = detail::find_span(knots, degree, x);
    detail::deboor_values(knots, degree, span, x, basis.values.row(i).data());
    basis.offsets[i] = span - degree;
  }
  return basis;
}

inline Eigen::MatrixXd bspline_basis(const Eigen::VectorXd& values,
                                     const Eigen::VectorXd& knots, int degree) {
  return bspline_basis_banded(values, knots, degree).dense();
}

// Order-th forward difference matrix, (K - order) x K. Row l carries the
// alternating binomial pattern, e.g. order 2 -> [1, -2, 1].
inline Eigen::MatrixXd difference_penalty(int n_basis, int order = 2) {
  if (order < 1) throw UsageError("difference order must be >= 1");
  if (n_basis <= order)
    throw UsageError("difference penalty needs n_basis > order");
  std::vector<double> coef(static_cast<std::size_t>(order) + 1);
  coef[0] = 1.0;
  for (int i = 1; i <= order; ++i)
    coef[static_cast<std::size_t>(i)] =
        -coef[static_cast<std::size_t>(i) - 1] * static_cast<double>(order - i + 1) /
        static_cast<double>(i);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n_basis - order, n_basis);
  for (int l = 0; l < n_basis - order; ++l)
    for (int i = 0; i <= order; ++i) d(l, l + i) = coef[static_cast<std::size_t>(i)];
  return d;
}

// Row-wise Kronecker product: row i of the result is kron(row i of bj,
// row i of bk), so column (a, b) of the pair maps to index a * Lk + b.
inline Eigen::MatrixXd tensor_basis(const Eigen::MatrixXd& bj,
                                    const Eigen::MatrixXd& bk) {
  if (bj.rows() != bk.rows())
    throw UsageError("tensor_basis: row counts differ");
  const Eigen::Index n = bj.rows();
  const Eigen::Index kj = bj.cols();
  const Eigen::Index kk = bk.cols();
  Eigen::MatrixXd out(n, kj * kk);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index a = 0; a < kj; ++a)
      for (Eigen::Index b = 0; b < kk; ++b) out(i, a * kk + b) = bj(i, a) * bk(i, b);
  return out;
}

// Kronecker-sum roughness penalty for a tensor-product block:
// (Dj' Dj) (x) I_L + I_K (x) (Dk' Dk) under the a * L + b column layout.
inline Eigen::MatrixXd interaction_penalty(const Eigen::MatrixXd& dj,
                                           const Eigen::MatrixXd& dk) {
  const Eigen::Index kj = dj.cols();
  const Eigen::Index kk = dk.cols();
  Eigen::MatrixXd sj = dj.transpose() * dj;
  Eigen::MatrixXd sk = dk.transpose() * dk;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(kj * kk, kj * kk);
  for (Eigen::Index a = 0; a < kj; ++a)
    for (Eigen::Index a2 = 0; a2 < kj; ++a2) {
      const double w = sj(a, a2);
      if (w == 0.0 && a != a2) continue;
      for (Eigen::Index b = 0; b < kk; ++b) {
        out(a * kk + b, a2 * kk + b) += w;
        if (a == a2)
          for (Eigen::Index b2 = 0; b2 < kk; ++b2) out(a * kk + b, a * kk + b2) += sk(b, b2);
      }
    }
  return out;
}

// Dense per-covariate basis bundle (evaluation matrix, knots, difference
// matrix and quadratic penalty). Large runs keep the banded form instead and
// materialize this view on demand.
struct SplineBasis {
  Eigen::MatrixXd basis_matrix;
  Eigen::VectorXd knots;
  Eigen::MatrixXd diff_matrix;
  Eigen::MatrixXd penalty_matrix;
  int degree = 0;
};

inline SplineBasis build_spline_basis(const Eigen::VectorXd& values,
                                      const Eigen::VectorXd& knots, int degree,
                                      int diff_order = 2) {
  SplineBasis sb;
  sb.degree = degree;
  sb.knots = knots;
  sb.basis_matrix = bspline_basis(values, knots, degree);
  sb.diff_matrix = difference_penalty(static_cast<int>(sb.basis_matrix.cols()), diff_order);
  sb.penalty_matrix = sb.diff_matrix.transpose() * sb.diff_matrix;
  return sb;
}

// Dense tensor-product block for one covariate pair.
struct InteractionBasis {
  Eigen::MatrixXd basis_matrix;
  Eigen::MatrixXd penalty_matrix;
  Eigen::VectorXd knots_a, knots_b;
  int dim_a = 0, dim_b = 0;
  int degree = 0;
};

inline InteractionBasis build_interaction_basis(const SplineBasis& a,
                                                const SplineBasis& b) {
  InteractionBasis ib;
  ib.basis_matrix = tensor_basis(a.basis_matrix, b.basis_matrix);
  ib.penalty_matrix = interaction_penalty(a.diff_matrix, b.diff_matrix);
  ib.knots_a = a.knots;
  ib.knots_b = b.knots;
  ib.dim_a = static_cast<int>(a.basis_matrix.cols());
  ib.dim_b = static_cast<int>(b.basis_matrix.cols());
  ib.degree = a.degree;
  return ib;
}

}  // namespace samint
