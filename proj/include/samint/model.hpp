#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "samint/block.hpp"
#include "samint/dataset.hpp"
#include "samint/splines.hpp"

namespace samint {

// L0 / smoothness penalty weights for the fitting objective
//   (1/n)||y - sum_b B_b beta_b||^2
//   + lambda1 sum_b beta_b' S_b beta_b
//   + lambda2 (#mains + alpha #interactions).
struct PenaltyParams {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double alpha = 1.0;

  void validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0) throw UsageError("penalties must be >= 0");
    if (alpha < 1.0) throw UsageError("alpha must be >= 1");
  }

  double lambda2_for(const BlockIndex& idx) const {
    return idx.is_interaction() ? alpha * lambda2 : lambda2;
  }
};

// Everything prediction needs besides coefficients, shared across the models
// of one fitting session: standardization, knots, basis degree, and the
// training response mean absorbed into the intercept.
struct ModelContextCore {
  SplineConfig config;
  Standardizer standardizer;
  std::vector<std::string> feature_names;
  double y_mean = 0.0;
  std::vector<Eigen::VectorXd> main_knots;
  std::vector<Eigen::VectorXd> interaction_knots;

  int p() const { return static_cast<int>(main_knots.size()); }
};

struct ModelContext {
  std::shared_ptr<const ModelContextCore> core;
  // Training column means of each support block's basis (centering offsets).
  std::map<BlockIndex, Eigen::VectorXd> block_col_means;
};

// A fitted sparse additive model. The coefficient map holds exactly the
// support (blocks with a nonzero coefficient vector).
struct AdditiveModel {
  double intercept = 0.0;
  std::map<BlockIndex, Eigen::VectorXd> coefficients;
  PenaltyParams params;
  bool converged = true;
  std::shared_ptr<const ModelContext> context;

  std::set<BlockIndex> support() const {
    std::set<BlockIndex> s;
    for (const auto& [idx, coef] : coefficients)
      if (coef.norm() > 0.0) s.insert(idx);
    return s;
  }

  int n_main() const {
    int c = 0;
    for (const auto& [idx, coef] : coefficients)
      if (!idx.is_interaction()) ++c;
    return c;
  }

  int n_interaction() const {
    int c = 0;
    for (const auto& [idx, coef] : coefficients)
      if (idx.is_interaction()) ++c;
    return c;
  }
};

}  // namespace samint
