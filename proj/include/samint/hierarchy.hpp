#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "samint/block.hpp"
#include "samint/model.hpp"
#include "samint/path.hpp"
#include "samint/solver.hpp"
#include "samint/util.hpp"

namespace samint {

struct SupportSets {
  std::vector<int> mains;            // sorted covariate ids
  std::vector<BlockIndex> interactions;  // sorted canonical pairs
};

// Union of supports across every fitted grid node, closed upward so each
// interaction's parent mains are present.
inline SupportSets collect_support_union(const PathGrid& grid) {
  SupportSets s;
  for (const auto& node : grid.models) {
    if (!node) continue;
    for (const auto& [idx, coef] : node->coefficients) {
      if (idx.is_interaction())
        s.interactions.push_back(idx);
      else
        s.mains.push_back(idx.j);
    }
  }
  for (const BlockIndex& idx : s.interactions) {
    s.mains.push_back(idx.j);
    s.mains.push_back(idx.k);
  }
  std::sort(s.mains.begin(), s.mains.end());
  s.mains.erase(std::unique(s.mains.begin(), s.mains.end()), s.mains.end());
  std::sort(s.interactions.begin(), s.interactions.end());
  s.interactions.erase(std::unique(s.interactions.begin(), s.interactions.end()),
                       s.interactions.end());
  return s;
}

inline std::vector<BlockIndex> support_indices(const SupportSets& s) {
  std::vector<BlockIndex> out;
  out.reserve(s.mains.size() + s.interactions.size());
  for (int j : s.mains) out.push_back(BlockIndex::main(j));
  for (const BlockIndex& idx : s.interactions) out.push_back(idx);
  return out;
}

inline bool check_strong_hierarchy(const std::vector<int>& mains,
                                   const std::vector<BlockIndex>& interactions) {
  for (const BlockIndex& idx : interactions) {
    if (!std::binary_search(mains.begin(), mains.end(), idx.j)) return false;
    if (!std::binary_search(mains.begin(), mains.end(), idx.k)) return false;
  }
  return true;
}

inline bool check_strong_hierarchy(const AdditiveModel& model) {
  std::vector<int> mains;
  std::vector<BlockIndex> ints;
  for (const auto& [idx, coef] : model.coefficients) {
    if (idx.is_interaction())
      ints.push_back(idx);
    else
      mains.push_back(idx.j);
  }
  std::sort(mains.begin(), mains.end());
  return check_strong_hierarchy(mains, ints);
}

struct RidgeFit {
  std::map<BlockIndex, Eigen::VectorXd> coefficients;
  Eigen::VectorXd residual;
  double objective = 0.0;  // (1/n)||r||^2 + lambda1 * sum of quad penalties
  bool converged = false;
  int passes = 0;
};

// Joint ridge fit over a fixed set of blocks (no selection penalty): cyclic
// exact blockwise minimization of the smooth objective until the largest
// per-block coefficient movement in a full pass drops below tol.
inline RidgeFit ridge_joint_fit(const BlockProvider& provider,
                                const Eigen::VectorXd& y_centered, double lambda1,
                                double tol = 1e-8, int max_passes = 1000,
                                const std::map<BlockIndex, Eigen::VectorXd>* warm = nullptr,
                                const FitOptions& options = FitOptions(),
                                FactorizationCache* cache = nullptr) {
  RidgeFit fit;
  fit.residual = y_centered;
  const auto n = static_cast<double>(y_centered.size());
  const std::vector<BlockIndex>& indices = provider.indices();
  if (warm) {
    for (const auto& [idx, coef] : *warm) {
      if (!std::binary_search(indices.begin(), indices.end(), idx) ||
          coef.size() == 0 || coef.norm() == 0.0)
        continue;
      fit.coefficients[idx] = coef;
      provider.block(idx).add_fitted(fit.residual, coef, -1.0);
    }
  }
  auto objective = [&]() {
    double obj = fit.residual.squaredNorm() / n;
    for (const auto& [idx, coef] : fit.coefficients)
      obj += lambda1 * provider.block(idx).quad_penalty(coef);
    return obj;
  };
  double checkpoint = std::numeric_limits<double>::infinity();
  for (int pass = 0; pass < max_passes; ++pass) {
    fit.passes = pass + 1;
    double max_change = 0.0;
    for (const BlockIndex& idx : indices) {
      const Block& blk = provider.block(idx);
      auto it = fit.coefficients.find(idx);
      if (it != fit.coefficients.end())
        blk.add_fitted(fit.residual, it->second, +1.0);
      Eigen::VectorXd beta = ridge_block_solve(fit.residual, blk, lambda1, options, cache);
      blk.add_fitted(fit.residual, beta, -1.0);
      const double change =
          (it != fit.coefficients.end()) ? (beta - it->second).norm() : beta.norm();
      max_change = std::max(max_change, change);
      fit.coefficients[idx] = std::move(beta);
    }
    if (max_change < tol) {
      fit.converged = true;
      break;
    }
    // Barely-contracting passes mean strongly overlapping blocks; land on the
    // joint minimizer directly instead of cycling.
    if ((pass & 15) == 15) {
      if (max_change > 0.5 * checkpoint) break;
      checkpoint = max_change;
    }
  }
  if (!fit.converged &&
      detail::exact_joint_solve(provider, indices, y_centered, lambda1, options,
                                cache, fit.coefficients, fit.residual))
    fit.converged = true;
  fit.objective = objective();
  return fit;
}

// bigM rule: twice the largest block norm of the selection-free ridge fit on
// the restricted support, floored at 1, so the reference fit is feasible
// with slack.
inline double choose_big_m(const RidgeFit& reference) {
  double max_norm = 0.0;
  for (const auto& [idx, coef] : reference.coefficients)
    max_norm = std::max(max_norm, coef.norm());
  return std::max(1.0, 2.0 * max_norm);
}

struct RestrictedProblem {
  SupportSets support;
  double big_m = 1.0;
  PenaltyParams params;
};

struct RelaxationSolution {
  std::map<BlockIndex, double> z;
  std::map<BlockIndex, Eigen::VectorXd> coefficients;
  double objective = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  int passes = 0;
};

namespace detail {

// Shared machinery for the two radius searches below. A relative floor on mu
// keeps every factorization positive definite even when a_base is singular
// along the centered-basis constant direction (b is orthogonal to that
// direction, so the floored solve converges to the pseudoinverse solution).
class MuSolver {
 public:
  MuSolver(const Eigen::MatrixXd& a_base, const Eigen::VectorXd& b)
      : a_(a_base), b_(b) {
    scale_ = a_base.trace() / static_cast<double>(a_base.rows()) + 1.0;
    mu_floor_ = scale_ * 1e-12;
  }

  double mu_floor() const { return mu_floor_; }
  double scale() const { return scale_; }

  Eigen::VectorXd solve(double mu) const {
    double shift = std::max(mu, mu_floor_);
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::MatrixXd work = a_;
      work.diagonal().array() += shift;
      Eigen::LLT<Eigen::MatrixXd> llt(work);
      if (llt.info() == Eigen::Success) return llt.solve(b_);
      shift *= 10.0;
    }
    throw SolverError("ball subproblem: system not positive definite");
  }

 private:
  const Eigen::MatrixXd& a_;
  const Eigen::VectorXd& b_;
  double scale_ = 1.0;
  double mu_floor_ = 1e-12;
};

// Minimizer of the blockwise smooth objective over the ball ||beta|| <=
// radius: the (floored) unconstrained solution when it fits, otherwise the
// boundary point (A + mu I)^{-1} b with mu matched to the radius by bisection.
inline Eigen::VectorXd ball_solve(const Eigen::MatrixXd& a_base,
                                  const Eigen::VectorXd& b, double radius) {
  if (radius <= 0.0 || b.norm() == 0.0)
    return Eigen::VectorXd::Zero(b.size());
  MuSolver solver(a_base, b);
  double lo = solver.mu_floor();
  Eigen::VectorXd beta = solver.solve(lo);
  if (beta.norm() <= radius) return beta;
  double hi = std::max(lo, solver.scale() * 1e-8);
  while (solver.solve(hi).norm() > radius) {
    lo = hi;
    hi *= 2.0;
    if (hi > solver.scale() * 1e18)
      throw SolverError("ball subproblem: radius matching failed");
  }
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo + hi);
    if (solver.solve(mid).norm() > radius)
      lo = mid;
    else
      hi = mid;
  }
  beta = solver.solve(hi);
  if (beta.norm() > radius) beta *= radius / beta.norm();
  return beta;
}

// Solves mu * ||(A + mu I)^{-1} b|| = target for mu (the stationarity
// condition of radius selection under a linear norm cost). The product is
// increasing in mu with supremum ||b||; callers check target < ||b||.
inline Eigen::VectorXd stationary_solve(const Eigen::MatrixXd& a_base,
                                        const Eigen::VectorXd& b, double target) {
  MuSolver solver(a_base, b);
  double lo = solver.mu_floor();
  Eigen::VectorXd beta = solver.solve(lo);
  if (lo * beta.norm() >= target) return beta;  // stationary mu below the floor
  double hi = std::max(lo, solver.scale() * 1e-8);
  while (hi * solver.solve(hi).norm() < target) {
    lo = hi;
    hi *= 2.0;
    if (hi > solver.scale() * 1e18) return solver.solve(hi);  // target ~ ||b||
  }
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo + hi);
    beta = solver.solve(mid);
    if (mid * beta.norm() < target)
      lo = mid;
    else
      hi = mid;
  }
  return solver.solve(hi);
}

struct RelaxState {
  Eigen::VectorXd residual;
  std::map<BlockIndex, Eigen::VectorXd> coef;
  std::map<BlockIndex, double> z;
  std::map<int, std::vector<BlockIndex>> children;  // main j -> interactions touching j
};

inline double relax_objective(const RelaxState& state, const BlockProvider& provider,
                              const RestrictedProblem& problem) {
  const auto n = static_cast<double>(state.residual.size());
  double obj = state.residual.squaredNorm() / n;
  for (const auto& [idx, c] : state.coef)
    if (c.size() > 0 && c.norm() > 0.0)
      obj += problem.params.lambda1 * provider.block(idx).quad_penalty(c);
  for (const auto& [idx, zv] : state.z)
    obj += (idx.is_interaction() ? problem.params.alpha : 1.0) *
           problem.params.lambda2 * zv;
  return obj;
}

// Floor on z_j imposed by everything except the block being updated: its
// children's current z values (and zero for interactions).
inline double z_floor_from_children(const RelaxState& state, int j,
                                    const BlockIndex& skip) {
  double floor = 0.0;
  auto it = state.children.find(j);
  if (it == state.children.end()) return floor;
  for (const BlockIndex& child : it->second) {
    if (child == skip) continue;
    auto z = state.z.find(child);
    if (z != state.z.end()) floor = std::max(floor, z->second);
  }
  return floor;
}

}  // namespace detail

// Convex relaxation of the restricted selection problem: minimize the smooth
// objective plus lambda2 (sum z_j + alpha sum z_jk) subject to 0 <= z <= 1,
// ||beta_j|| <= M z_j, ||theta_jk|| <= M z_jk and z_jk <= min(z_j, z_k).
//
// Two-stage cyclic block scheme. Stage one updates each block by an
// unconstrained ridge step followed by penalty-aware ray scaling, with z
// assigned in closed form from the norms. Stage two refines each block with
// its exact constrained minimizer (radius chosen by the mu-bisection
// stationarity rule), lifting parent z values jointly with each interaction
// so linked blocks cannot deadlock below the optimum. Both stages descend;
// passes stop when the relative objective change falls below tol.
inline RelaxationSolution solve_relaxation(const RestrictedProblem& problem,
                                           const BlockProvider& provider,
                                           const Eigen::VectorXd& y_centered,
                                           double tol = 1e-6, int max_passes = 500,
                                           const std::map<BlockIndex, Eigen::VectorXd>*
                                               warm = nullptr,
                                           const FitOptions& options = FitOptions(),
                                           FactorizationCache* cache = nullptr) {
  const double big_m = problem.big_m;
  if (!(big_m > 0.0)) throw UsageError("bigM must be positive");
  const auto n = static_cast<double>(y_centered.size());
  const double lambda1 = problem.params.lambda1;
  const double lambda2 = problem.params.lambda2;
  const double alpha = problem.params.alpha;

  std::vector<BlockIndex> indices = support_indices(problem.support);
  detail::RelaxState state;
  state.residual = y_centered;
  for (const BlockIndex& idx : problem.support.interactions) {
    state.children[idx.j].push_back(idx);
    state.children[idx.k].push_back(idx);
  }
  for (const BlockIndex& idx : indices) state.z[idx] = 0.0;

  if (warm) {
    for (const auto& [idx, coef] : *warm) {
      if (!state.z.count(idx) || coef.size() == 0 || coef.norm() == 0.0) continue;
      Eigen::VectorXd capped = coef;
      if (capped.norm() > big_m) capped *= big_m / capped.norm();
      provider.block(idx).add_fitted(state.residual, capped, -1.0);
      state.coef[idx] = std::move(capped);
    }
    for (const BlockIndex& idx : problem.support.interactions) {
      auto c = state.coef.find(idx);
      if (c != state.coef.end()) state.z[idx] = c->second.norm() / big_m;
    }
    for (int j : problem.support.mains) {
      BlockIndex mj = BlockIndex::main(j);
      double zj = detail::z_floor_from_children(state, j, BlockIndex::main(j));
      auto c = state.coef.find(mj);
      if (c != state.coef.end()) zj = std::max(zj, c->second.norm() / big_m);
      state.z[mj] = std::min(1.0, zj);
    }
  }

  // Base (unaugmented) quadratic forms for the exact stage.
  std::map<BlockIndex, Eigen::MatrixXd> a_base;
  auto base_matrix = [&](const BlockIndex& idx) -> const Eigen::MatrixXd& {
    auto it = a_base.find(idx);
    if (it != a_base.end()) return it->second;
    const Block& blk = provider.block(idx);
    Eigen::MatrixXd a;
    if (cache && options.use_factorization_cache) {
      a = *cache->gram(blk);
    } else {
      a = blk.gram();
    }
    if (lambda1 != 0.0) a.noalias() += (n * lambda1) * blk.penalty();
    return a_base.emplace(idx, std::move(a)).first->second;
  };

  double obj = detail::relax_objective(state, provider, problem);
  RelaxationSolution out;
  out.passes = 0;

  auto apply_update = [&](const Block& blk, const BlockIndex& idx,
                          Eigen::VectorXd beta) {
    if (beta.size() > 0 && beta.norm() > 0.0) {
      blk.add_fitted(state.residual, beta, -1.0);
      state.coef[idx] = std::move(beta);
    } else {
      state.coef.erase(idx);
    }
  };

  // Stage one: ridge step + ray scaling.
  bool stage_one_done = false;
  for (int pass = 0; pass < max_passes && !stage_one_done; ++pass) {
    ++out.passes;
    for (const BlockIndex& idx : indices) {
      const Block& blk = provider.block(idx);
      auto cur = state.coef.find(idx);
      if (cur != state.coef.end())
        blk.add_fitted(state.residual, cur->second, +1.0);
      Eigen::VectorXd b = blk.xt_r(state.residual);
      detail::BlockSolve sol = detail::solve_block(blk, state.residual, lambda1,
                                                   options, cache);
      const double rho_hat = sol.beta.norm();
      const double bdotbeta = b.dot(sol.beta);
      if (rho_hat == 0.0 || sol.s2 <= 0.0 || bdotbeta <= 0.0) {
        apply_update(blk, idx, Eigen::VectorXd());
        if (!idx.is_interaction())
          state.z[idx] = detail::z_floor_from_children(state, idx.j, idx);
        else
          state.z[idx] = 0.0;
        continue;
      }
      const double t_vertex = bdotbeta / sol.s2;
      double t;
      if (idx.is_interaction()) {
        const double zcap = std::min(state.z[BlockIndex::main(idx.j)],
                                     state.z[BlockIndex::main(idx.k)]);
        const double t_hi = std::min(t_vertex, big_m * zcap / rho_hat);
        const double t_star =
            (bdotbeta - n * alpha * lambda2 * rho_hat / (2.0 * big_m)) / sol.s2;
        t = std::clamp(t_star, 0.0, std::max(0.0, t_hi));
      } else {
        const double zc = detail::z_floor_from_children(state, idx.j, idx);
        const double t_hi = std::min(t_vertex, big_m / rho_hat);
        const double t_c = big_m * zc / rho_hat;
        if (t_c >= t_hi) {
          t = t_hi;
        } else {
          const double t_star =
              (bdotbeta - n * lambda2 * rho_hat / (2.0 * big_m)) / sol.s2;
          t = std::clamp(t_star, t_c, t_hi);
        }
      }
      Eigen::VectorXd beta = t * sol.beta;
      const double norm = beta.norm();
      if (idx.is_interaction())
        state.z[idx] = std::min(1.0, norm / big_m);
      else
        state.z[idx] = std::min(
            1.0, std::max(norm / big_m,
                          detail::z_floor_from_children(state, idx.j, idx)));
      apply_update(blk, idx, std::move(beta));
    }
    double next = detail::relax_objective(state, provider, problem);
    if (std::abs(obj - next) / std::max(std::abs(obj), 1e-12) < tol)
      stage_one_done = true;
    obj = next;
  }

  // Stage two: exact constrained block updates with parent lifting.
  bool converged = false;
  for (int pass = 0; pass < max_passes && !converged; ++pass) {
    ++out.passes;
    for (const BlockIndex& idx : indices) {
      const Block& blk = provider.block(idx);
      auto cur = state.coef.find(idx);
      if (cur != state.coef.end())
        blk.add_fitted(state.residual, cur->second, +1.0);
      Eigen::VectorXd b = blk.xt_r(state.residual);
      const Eigen::MatrixXd& a = base_matrix(idx);
      const double b_norm = b.norm();
      if (b_norm == 0.0) {
        apply_update(blk, idx, Eigen::VectorXd());
        state.z[idx] = idx.is_interaction()
                           ? 0.0
                           : detail::z_floor_from_children(state, idx.j, idx);
        continue;
      }

      auto value_at = [&](const Eigen::VectorXd& beta, double zcost) {
        Eigen::VectorXd r = state.residual;
        if (beta.size() > 0) blk.add_fitted(r, beta, -1.0);
        double v = r.squaredNorm() / n + zcost;
        if (beta.size() > 0 && lambda1 != 0.0)
          v += lambda1 * blk.quad_penalty(beta);
        return v;
      };

      if (!idx.is_interaction()) {
        const double zc = detail::z_floor_from_children(state, idx.j, idx);
        Eigen::VectorXd best = detail::ball_solve(a, b, big_m);  // z = 1 cap
        double rho_free = best.norm();
        double target = n * lambda2 / (2.0 * big_m);
        Eigen::VectorXd candidate;
        if (rho_free <= big_m * zc) {
          candidate = best;  // inside the constant-cost region
        } else if (target >= b_norm) {
          candidate = detail::ball_solve(a, b, big_m * zc);
        } else {
          candidate = detail::stationary_solve(a, b, target);
          double rho = candidate.norm();
          if (rho > big_m)
            candidate = best;
          else if (rho < big_m * zc)
            candidate = detail::ball_solve(a, b, big_m * zc);
        }
        double znew = std::min(1.0, std::max(candidate.norm() / big_m, zc));
        state.z[idx] = znew;
        apply_update(blk, idx, std::move(candidate));
        continue;
      }

      // Interaction: optimize over the radius with the piecewise-linear cost
      // lambda2 (alpha z + lift of each parent), lifting parents as needed.
      BlockIndex pj = BlockIndex::main(idx.j);
      BlockIndex pk = BlockIndex::main(idx.k);
      const double aj = std::max(
          detail::z_floor_from_children(state, idx.j, idx),
          state.coef.count(pj) ? state.coef[pj].norm() / big_m : 0.0);
      const double ak = std::max(
          detail::z_floor_from_children(state, idx.k, idx),
          state.coef.count(pk) ? state.coef[pk].norm() / big_m : 0.0);
      const double r1 = big_m * std::min(aj, ak);
      const double r2 = big_m * std::max(aj, ak);
      Eigen::VectorXd free_beta = detail::ball_solve(a, b, big_m);
      const double rho_max = std::min(free_beta.norm(), big_m);

      auto cost_of = [&](double rho) {
        return lambda2 * (std::max(aj, rho / big_m) + std::max(ak, rho / big_m) +
                          alpha * rho / big_m);
      };
      std::vector<double> candidates{0.0, std::min(r1, rho_max),
                                     std::min(r2, rho_max), rho_max};
      const double slopes[3] = {alpha * lambda2 / big_m,
                                (alpha + 1.0) * lambda2 / big_m,
                                (alpha + 2.0) * lambda2 / big_m};
      const double piece_lo[3] = {0.0, r1, r2};
      const double piece_hi[3] = {r1, r2, big_m};
      for (int piece = 0; piece < 3; ++piece) {
        double lo = std::min(piece_lo[piece], rho_max);
        double hi = std::min(piece_hi[piece], rho_max);
        if (hi <= lo) continue;
        double target = n * slopes[piece] / 2.0;
        if (target >= b_norm) continue;  // cost dominates: boundary handles it
        Eigen::VectorXd beta = detail::stationary_solve(a, b, target);
        double rho = beta.norm();
        if (rho > lo && rho < hi) candidates.push_back(rho);
      }
      double best_value = std::numeric_limits<double>::infinity();
      Eigen::VectorXd best_beta;
      double best_rho = 0.0;
      for (double rho : candidates) {
        Eigen::VectorXd beta = rho <= 0.0 ? Eigen::VectorXd::Zero(b.size())
                                          : detail::ball_solve(a, b, rho);
        double v = value_at(beta, cost_of(beta.norm()));
        if (v < best_value) {
          best_value = v;
          best_rho = beta.norm();
          best_beta = std::move(beta);
        }
      }
      double zjk = std::min(1.0, best_rho / big_m);
      state.z[idx] = zjk;
      state.z[pj] = std::min(1.0, std::max(aj, zjk));
      state.z[pk] = std::min(1.0, std::max(ak, zjk));
      apply_update(blk, idx, std::move(best_beta));
    }
    double next = detail::relax_objective(state, provider, problem);
    if (std::abs(obj - next) / std::max(std::abs(obj), 1e-12) < tol) converged = true;
    obj = next;
  }

  // Final closed-form z sweep: each z at its smallest feasible value.
  for (const BlockIndex& idx : problem.support.interactions) {
    auto c = state.coef.find(idx);
    state.z[idx] =
        c == state.coef.end() ? 0.0 : std::min(1.0, c->second.norm() / big_m);
  }
  for (int j : problem.support.mains) {
    BlockIndex mj = BlockIndex::main(j);
    double zj = detail::z_floor_from_children(state, j, mj);
    auto c = state.coef.find(mj);
    if (c != state.coef.end()) zj = std::max(zj, c->second.norm() / big_m);
    state.z[mj] = std::min(1.0, zj);
  }

  out.z = state.z;
  out.coefficients = state.coef;
  out.objective = detail::relax_objective(state, provider, problem);
  out.converged = converged;
  return out;
}

// Thresholds the relaxed indicators at tau. Hierarchy is preserved because
// each z_jk is bounded by both parents' z values.
inline SupportSets round_solution(const RelaxationSolution& relaxed, double tau) {
  if (!(tau > 0.0) || !(tau < 1.0)) throw UsageError("tau must lie in (0, 1)");
  SupportSets s;
  for (const auto& [idx, zv] : relaxed.z) {
    if (zv <= tau) continue;
    if (idx.is_interaction())
      s.interactions.push_back(idx);
    else
      s.mains.push_back(idx.j);
  }
  std::sort(s.mains.begin(), s.mains.end());
  std::sort(s.interactions.begin(), s.interactions.end());
  return s;
}

struct PolishResult {
  AdditiveModel model;
  std::vector<BlockIndex> numerically_null;  // kept in the model, norm < 1e-10
  double objective = 0.0;
};

// Refits the smooth objective restricted to a fixed support (no selection
// penalty), jointly over all retained blocks.
inline PolishResult polish(const SupportSets& support, const BlockProvider& provider,
                           const Eigen::VectorXd& y_centered, double lambda1,
                           double tol = 1e-8,
                           const std::map<BlockIndex, Eigen::VectorXd>* warm = nullptr,
                           const FitOptions& options = FitOptions(),
                           FactorizationCache* cache = nullptr) {
  if (!check_strong_hierarchy(support.mains, support.interactions))
    throw UsageError("polish: support violates strong hierarchy");
  PolishResult out;
  std::vector<BlockIndex> indices = support_indices(support);
  if (indices.empty()) {
    out.model.params = PenaltyParams{lambda1, 0.0, 1.0};
    out.model.converged = true;
    out.objective = y_centered.squaredNorm() / static_cast<double>(y_centered.size());
    return out;
  }
  SubsetBlockProvider restricted(provider, indices);
  RidgeFit fit = ridge_joint_fit(restricted, y_centered, lambda1, tol, 1000, warm,
                                 options, cache);
  out.model.params = PenaltyParams{lambda1, 0.0, 1.0};
  out.model.converged = fit.converged;
  out.objective = fit.objective;
  for (auto& [idx, coef] : fit.coefficients) {
    if (coef.norm() < 1e-10) out.numerically_null.push_back(idx);
    out.model.coefficients[idx] = std::move(coef);
  }
  return out;
}

struct TauRow {
  double tau = 0.0;
  int n_main = 0;
  int n_interaction = 0;
  int n_effective = 0;
  double val_rmse = std::numeric_limits<double>::quiet_NaN();
  double val_mae = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct HierarchyResult {
  AdditiveModel model;  // validation-best polished model
  double best_tau = 0.0;
  double big_m = 1.0;
  PenaltyParams params;
  SupportSets restricted;
  RelaxationSolution relaxation;
  std::vector<TauRow> rows;
};

inline std::string hierarchy_report_csv(const std::vector<TauRow>& rows) {
  std::ostringstream os;
  os << "tau,n_main,n_interaction,n_effective_covariates,val_rmse,val_mae\n";
  for (const TauRow& row : rows) {
    if (!row.error.empty()) continue;
    os << format_double(row.tau) << "," << row.n_main << "," << row.n_interaction
       << "," << row.n_effective << "," << format_double(row.val_rmse) << ","
       << format_double(row.val_mae) << "\n";
  }
  return os.str();
}

namespace detail {

inline int count_effective(const SupportSets& s) {
  std::vector<int> seen = s.mains;
  for (const BlockIndex& idx : s.interactions) {
    seen.push_back(idx.j);
    seen.push_back(idx.k);
  }
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  return static_cast<int>(seen.size());
}

}  // namespace detail

// Full strong-hierarchy sweep at fixed penalties: restrict to the union of
// path supports, solve the relaxation once, then round at each tau and
// polish; the validation-best polished model is returned (ties prefer the
// smaller support, then the larger tau).
inline HierarchyResult fit_hierarchy_path(
    const PathGrid& grid, const PenaltyParams& params, const BlockProvider& provider,
    const Eigen::VectorXd& y_centered, const BasisEvaluator& evaluator,
    const Eigen::VectorXd& y_val_centered, const std::vector<double>& tau_values,
    const FitOptions& options = FitOptions(), FactorizationCache* cache = nullptr,
    double relax_tol = 1e-6) {
  if (tau_values.empty()) throw UsageError("hierarchy needs at least one tau");
  HierarchyResult result;
  result.params = params;
  result.restricted = collect_support_union(grid);

  SubsetBlockProvider restricted(provider, support_indices(result.restricted));
  RidgeFit reference;
  if (!result.restricted.mains.empty() || !result.restricted.interactions.empty())
    reference = ridge_joint_fit(restricted, y_centered, params.lambda1, 1e-8, 1000,
                                nullptr, options, cache);
  else
    reference.residual = y_centered;
  result.big_m = choose_big_m(reference);

  RestrictedProblem problem{result.restricted, result.big_m, params};
  result.relaxation =
      solve_relaxation(problem, provider, y_centered, relax_tol, 500,
                       &reference.coefficients, options, cache);

  const auto n_val = static_cast<double>(y_val_centered.size());
  double best_metric = std::numeric_limits<double>::infinity();
  long best_support = std::numeric_limits<long>::max();
  int best_at = -1;
  std::vector<AdditiveModel> polished(tau_values.size());

  for (std::size_t t = 0; t < tau_values.size(); ++t) {
    TauRow row;
    row.tau = tau_values[t];
    try {
      SupportSets support = round_solution(result.relaxation, tau_values[t]);
      PolishResult pol = polish(support, provider, y_centered, params.lambda1, 1e-8,
                                &result.relaxation.coefficients, options, cache);
      row.n_main = static_cast<int>(support.mains.size());
      row.n_interaction = static_cast<int>(support.interactions.size());
      row.n_effective = detail::count_effective(support);
      Eigen::VectorXd pred = evaluator.accumulate(pol.model.coefficients);
      Eigen::VectorXd err = y_val_centered - pred;
      row.val_rmse = std::sqrt(err.squaredNorm() / n_val);
      row.val_mae = err.cwiseAbs().sum() / n_val;
      long support_size = row.n_main + row.n_interaction;
      bool better = row.val_rmse < best_metric;
      if (!better && row.val_rmse == best_metric) {
        if (support_size < best_support)
          better = true;
        else if (support_size == best_support && best_at >= 0 &&
                 tau_values[t] > tau_values[static_cast<std::size_t>(best_at)])
          better = true;
      }
      if (better) {
        best_metric = row.val_rmse;
        best_support = support_size;
        best_at = static_cast<int>(t);
      }
      polished[t] = std::move(pol.model);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    result.rows.push_back(std::move(row));
  }
  if (best_at < 0)
    throw SolverError("hierarchy sweep: no tau produced a usable model");
  result.best_tau = tau_values[static_cast<std::size_t>(best_at)];
  result.model = std::move(polished[static_cast<std::size_t>(best_at)]);
  result.model.params = params;
  return result;
}

}  // namespace samint
