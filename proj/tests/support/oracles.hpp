// Independent reference implementations used by the test suites. Everything
// here is deliberately written with different algorithms than the library
// (textbook recursion, dense enumeration, eigendecompositions) so a shared
// bug cannot hide on both sides of an assertion.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include <samint/samint.hpp>

namespace testsupport {

inline constexpr double kPi = 3.14159265358979323846;

// --- Textbook Cox-de Boor recursion -----------------------------------------
// Half-open intervals, with the final nonempty interval treated as closed so
// the basis sums to one at the right edge of the range.
inline double naive_bspline(double x, int i, int degree,
                            const Eigen::VectorXd& t) {
  if (degree == 0) {
    const double hi = t[t.size() - 1];
    bool inside = t[i] <= x && x < t[i + 1];
    bool right_edge = x == hi && t[i] < t[i + 1] && t[i + 1] == hi;
    return (inside || right_edge) ? 1.0 : 0.0;
  }
  double acc = 0.0;
  double d1 = t[i + degree] - t[i];
  if (d1 > 0.0) acc += (x - t[i]) / d1 * naive_bspline(x, i, degree - 1, t);
  double d2 = t[i + degree + 1] - t[i + 1];
  if (d2 > 0.0)
    acc += (t[i + degree + 1] - x) / d2 * naive_bspline(x, i + 1, degree - 1, t);
  return acc;
}

inline Eigen::VectorXd naive_basis_row(double x, const Eigen::VectorXd& knots,
                                       int degree) {
  const auto n_basis = static_cast<int>(knots.size()) - degree - 1;
  const double lo = knots[degree];
  const double hi = knots[knots.size() - degree - 1];
  x = std::min(hi, std::max(lo, x));
  Eigen::VectorXd row(n_basis);
  for (int i = 0; i < n_basis; ++i) row[i] = naive_bspline(x, i, degree, knots);
  return row;
}

// --- Roughness penalty by explicit finite-difference sums --------------------
inline double naive_main_roughness(const Eigen::VectorXd& beta) {
  double acc = 0.0;
  for (Eigen::Index l = 0; l + 2 < beta.size(); ++l) {
    double d = beta[l] - 2.0 * beta[l + 1] + beta[l + 2];
    acc += d * d;
  }
  return acc;
}

// theta laid out with column index a * kb + b for marginal dims (ka, kb).
inline double naive_interaction_roughness(const Eigen::VectorXd& theta, int ka,
                                          int kb) {
  auto at = [&](int a, int b) { return theta[a * kb + b]; };
  double acc = 0.0;
  for (int b = 0; b < kb; ++b)
    for (int a = 0; a + 2 < ka; ++a) {
      double d = at(a, b) - 2.0 * at(a + 1, b) + at(a + 2, b);
      acc += d * d;
    }
  for (int a = 0; a < ka; ++a)
    for (int b = 0; b + 2 < kb; ++b) {
      double d = at(a, b) - 2.0 * at(a, b + 1) + at(a, b + 2);
      acc += d * d;
    }
  return acc;
}

// --- Dense two-branch objective evaluation -----------------------------------
// psi(beta) = (1/n)||r - B beta||^2 + lambda1 beta' S beta  (+ lambda2 if kept)
inline double dense_block_objective(const Eigen::VectorXd& r,
                                    const Eigen::MatrixXd& basis,
                                    const Eigen::MatrixXd& penalty,
                                    const Eigen::VectorXd& beta,
                                    double lambda1) {
  const auto n = static_cast<double>(r.size());
  Eigen::VectorXd resid = r - basis * beta;
  return resid.squaredNorm() / n + lambda1 * beta.dot(penalty * beta);
}

// --- Exact norm-ball ridge solve via eigendecomposition ----------------------
// minimize  q(beta) = beta'(G + n lambda1 S)beta - 2 b'beta  s.t. ||beta|| <= R
// Returns the exact constrained minimizer using the spectral secular equation,
// a completely different path than the library's Cholesky bracketing.
struct SpectralBallSolver {
  Eigen::MatrixXd q;        // eigenvectors of A
  Eigen::VectorXd eigvals;  // ascending

  explicit SpectralBallSolver(const Eigen::MatrixXd& a_base) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a_base);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("oracle eigendecomposition failed");
    q = es.eigenvectors();
    eigvals = es.eigenvalues();
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b, double radius) const {
    if (radius <= 0.0) return Eigen::VectorXd::Zero(b.size());
    Eigen::VectorXd c = q.transpose() * b;
    auto norm_at = [&](double mu) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < c.size(); ++i) {
        double den = eigvals[i] + mu;
        if (den <= 0.0) return std::numeric_limits<double>::infinity();
        double v = c[i] / den;
        s += v * v;
      }
      return std::sqrt(s);
    };
    double floor = std::max(1e-13 * std::max(1.0, eigvals.cwiseAbs().maxCoeff()),
                            1e-300);
    double mu_lo = std::max(0.0, -eigvals[0]) + floor;
    if (norm_at(mu_lo) <= radius) {
      Eigen::VectorXd z = c;
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] /= (eigvals[i] + mu_lo);
      return q * z;
    }
    double mu_hi = mu_lo;
    for (int it = 0; it < 400 && norm_at(mu_hi) > radius; ++it)
      mu_hi = std::max(2.0 * mu_hi, 1.0);
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (mu_lo + mu_hi);
      if (norm_at(mid) > radius)
        mu_lo = mid;
      else
        mu_hi = mid;
    }
    double mu = 0.5 * (mu_lo + mu_hi);
    Eigen::VectorXd z = c;
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] /= (eigvals[i] + mu);
    Eigen::VectorXd beta = q * z;
    double nrm = beta.norm();
    if (nrm > radius && nrm > 0.0) beta *= radius / nrm;
    return beta;
  }
};

// --- Joint ridge over a fixed support by stacked dense least squares ---------
// Materializes each block's (centered) design by pushing unit coefficient
// vectors through the public fitted() operator, stacks them, and solves the
// normal equations with a rank-revealing decomposition (minimum-norm answer
// when the stacked system is singular along per-block constant directions).
struct StackedFit {
  std::map<samint::BlockIndex, Eigen::VectorXd> coefficients;
  Eigen::VectorXd fitted;
  double objective = 0.0;  // (1/n)||y - fit||^2 + lambda1 * sum quad penalties
};

inline Eigen::MatrixXd materialize_block(const samint::Block& blk) {
  Eigen::MatrixXd out(blk.rows(), blk.cols());
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(blk.cols());
  for (int c = 0; c < blk.cols(); ++c) {
    unit[c] = 1.0;
    out.col(c) = blk.fitted(unit);
    unit[c] = 0.0;
  }
  return out;
}

inline StackedFit stacked_ridge_fit(const samint::BlockProvider& provider,
                                    const std::vector<samint::BlockIndex>& support,
                                    const Eigen::VectorXd& y_centered,
                                    double lambda1) {
  StackedFit out;
  const auto n = y_centered.size();
  out.fitted = Eigen::VectorXd::Zero(n);
  if (support.empty()) {
    out.objective = y_centered.squaredNorm() / static_cast<double>(n);
    return out;
  }
  Eigen::Index total = 0;
  std::vector<const samint::Block*> blocks;
  for (const auto& idx : support) {
    blocks.push_back(&provider.block(idx));
    total += blocks.back()->cols();
  }
  Eigen::MatrixXd x(n, total);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(total, total);
  Eigen::Index off = 0;
  for (const auto* blk : blocks) {
    x.middleCols(off, blk->cols()) = materialize_block(*blk);
    s.block(off, off, blk->cols(), blk->cols()) = blk->penalty();
    off += blk->cols();
  }
  Eigen::MatrixXd a =
      x.transpose() * x + static_cast<double>(n) * lambda1 * s;
  Eigen::VectorXd b = x.transpose() * y_centered;
  Eigen::VectorXd beta =
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(a).solve(b);
  out.fitted = x * beta;
  double obj = (y_centered - out.fitted).squaredNorm() / static_cast<double>(n);
  off = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Eigen::VectorXd part = beta.segment(off, blocks[i]->cols());
    obj += lambda1 * part.dot(blocks[i]->penalty() * part);
    out.coefficients[support[i]] = part;
    off += blocks[i]->cols();
  }
  out.objective = obj;
  return out;
}

// Full L0 objective of a fixed-support ridge fit (adds the selection prices).
inline double supported_objective(const StackedFit& fit,
                                  const std::vector<samint::BlockIndex>& support,
                                  const samint::PenaltyParams& params) {
  double obj = fit.objective;
  for (const auto& idx : support) obj += params.lambda2_for(idx);
  return obj;
}

// --- Synthetic data generators ------------------------------------------------
struct SyntheticData {
  Eigen::MatrixXd x;          // uniform(0,1) covariates
  Eigen::VectorXd y;          // signal + noise
  Eigen::VectorXd signal;
  double noise_sd = 0.0;
};

// Two smooth nonlinear mains plus one product interaction on a disjoint pair.
// SNR is var(signal)/var(noise).
inline SyntheticData make_recovery_data(std::uint64_t seed, Eigen::Index n,
                                        int p, double snr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SyntheticData d;
  d.x.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) d.x(i, j) = unif(rng);
  d.signal.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double x0 = d.x(i, 0), x1 = d.x(i, 1), x2 = d.x(i, 2), x3 = d.x(i, 3);
    d.signal[i] = std::sin(2.0 * kPi * x0) + 4.0 * (x1 - 0.5) * (x1 - 0.5) +
                  3.0 * (x2 - 0.5) * (x3 - 0.5);
  }
  double mean = d.signal.mean();
  double var = (d.signal.array() - mean).square().sum() /
               static_cast<double>(n - 1);
  d.noise_sd = std::sqrt(var / snr);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    d.y[i] = d.signal[i] + d.noise_sd * gauss(rng);
  return d;
}

// Generic smooth signal over the first few columns, for descent / scale tests.
inline SyntheticData make_generic_data(std::uint64_t seed, Eigen::Index n,
                                       int p, double noise_sd) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SyntheticData d;
  d.x.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) d.x(i, j) = unif(rng);
  d.signal.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = std::sin(3.0 * d.x(i, 0)) + std::exp(d.x(i, 1 % p)) * 0.5;
    if (p >= 3) acc += 2.0 * d.x(i, 1) * d.x(i, 2);
    d.signal[i] = acc;
  }
  d.noise_sd = noise_sd;
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    d.y[i] = d.signal[i] + noise_sd * gauss(rng);
  return d;
}

// Attach the deployment context a trained model needs for prediction:
// knots for every covariate, the standardizer, and the centering offsets of
// each support block.
inline void attach_context(samint::AdditiveModel& model,
                           const samint::BlockSet& blocks,
                           const samint::Standardizer& standardizer,
                           std::vector<std::string> feature_names,
                           double y_mean) {
  auto core = std::make_shared<samint::ModelContextCore>();
  core->config = blocks.config();
  core->standardizer = standardizer;
  core->feature_names = std::move(feature_names);
  core->y_mean = y_mean;
  for (int j = 0; j < blocks.p(); ++j) {
    core->main_knots.push_back(blocks.main_knots(j));
    core->interaction_knots.push_back(blocks.interaction_knots(j));
  }
  auto ctx = std::make_shared<samint::ModelContext>();
  ctx->core = core;
  for (const auto& [idx, coef] : model.coefficients)
    ctx->block_col_means[idx] = blocks.block(idx).col_means();
  model.context = ctx;
  model.intercept = y_mean;
}

// End-to-end small training run: standardize, fit one penalty setting, and
// attach the context, yielding a deployable model plus its training pieces.
struct TrainedSmallModel {
  Eigen::MatrixXd x_raw;
  Eigen::VectorXd y;
  samint::Standardizer standardizer;
  std::shared_ptr<samint::BlockSet> blocks;
  samint::AdditiveModel model;
};

inline TrainedSmallModel train_small_model(std::uint64_t seed,
                                           Eigen::Index n = 250, int p = 3,
                                           double lambda1 = 1e-3,
                                           double lambda2 = 0.01) {
  SyntheticData data = make_generic_data(seed, n, p, 0.3);
  samint::Dataset d;
  d.X = data.x;
  d.y = data.y;
  for (int j = 0; j < p; ++j) d.feature_names.push_back("x" + std::to_string(j + 1));
  for (Eigen::Index i = 0; i < n; ++i) d.row_ids.push_back(std::to_string(i + 1));
  auto [standardizer, std_data] = samint::standardize(d);

  TrainedSmallModel out;
  out.x_raw = data.x;
  out.y = data.y;
  out.standardizer = standardizer;
  samint::SplineConfig cfg;
  cfg.degree = 2;
  cfg.n_knots_main = 4;
  cfg.n_knots_interaction_per_axis = 2;
  out.blocks = std::make_shared<samint::BlockSet>(std_data.X, cfg);

  double y_mean = data.y.mean();
  Eigen::VectorXd y_centered = data.y.array() - y_mean;
  samint::FitResult res =
      samint::fit(*out.blocks, y_centered, {lambda1, lambda2, 1.0});
  out.model = res.model;
  attach_context(out.model, *out.blocks, standardizer, d.feature_names, y_mean);
  return out;
}

// Standardize columns and center the response the same way the pipeline does.
struct PreparedProblem {
  Eigen::MatrixXd x_std;
  Eigen::VectorXd y_centered;
  double y_mean = 0.0;
};

inline PreparedProblem prepare(const Eigen::MatrixXd& x,
                               const Eigen::VectorXd& y) {
  PreparedProblem out;
  out.x_std = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double m = x.col(j).mean();
    double sd = std::sqrt((x.col(j).array() - m).square().sum() /
                          static_cast<double>(x.rows() - 1));
    if (sd <= 0.0) sd = 1.0;
    out.x_std.col(j) = (x.col(j).array() - m) / sd;
  }
  out.y_mean = y.mean();
  out.y_centered = y.array() - out.y_mean;
  return out;
}

}  // namespace testsupport
