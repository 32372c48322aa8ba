#pragma once

#include <Eigen/Dense>
#include <memory>
#include <tuple>
#include <vector>

#include "samint/splines.hpp"
#include "samint/util.hpp"

namespace samint {

// Identifies one coefficient block: a main effect (k < 0) or an ordered
// covariate pair j < k. Canonical order is all mains by index, then all
// pairs lexicographically; every container of blocks follows it.
struct BlockIndex {
  int j = -1;
  int k = -1;

  bool is_interaction() const { return k >= 0; }

  static BlockIndex main(int j) { return BlockIndex{j, -1}; }
  static BlockIndex pair(int j, int k) {
    if (j == k) throw UsageError("interaction requires two distinct covariates");
    if (j > k) std::swap(j, k);
    return BlockIndex{j, k};
  }

  friend bool operator==(const BlockIndex& a, const BlockIndex& b) {
    return a.j == b.j && a.k == b.k;
  }
  friend bool operator!=(const BlockIndex& a, const BlockIndex& b) { return !(a == b); }
  friend bool operator<(const BlockIndex& a, const BlockIndex& b) {
    if (a.is_interaction() != b.is_interaction()) return !a.is_interaction();
    return std::tie(a.j, a.k) < std::tie(b.j, b.k);
  }

  // Stable integer id given the covariate count: mains occupy [0, p), pairs
  // follow in lexicographic order.
  long to_id(int p) const {
    if (!is_interaction()) return j;
    long jl = j, kl = k, pl = p;
    return pl + jl * (2 * pl - jl - 1) / 2 + (kl - jl - 1);
  }

  static BlockIndex from_id(long id, int p) {
    if (id < p) return main(static_cast<int>(id));
    long rem = id - p;
    for (int j = 0; j < p; ++j) {
      long row = p - j - 1;
      if (rem < row) return pair(j, j + 1 + static_cast<int>(rem));
      rem -= row;
    }
    throw UsageError("block id out of range");
  }

  std::string label() const {
    if (!is_interaction()) return "main(" + std::to_string(j) + ")";
    return "int(" + std::to_string(j) + "," + std::to_string(k) + ")";
  }
};

// One block of the additive design: its (implicitly centered) basis columns,
// roughness penalty, and the kernels the solver needs. Main effects hold one
// banded basis; interactions hold the two marginal bases and synthesize the
// row-wise Kronecker product on the fly, so the tensor matrix never has to
// be materialized for fitting. Centering by training column means is applied
// implicitly through rank-one corrections.
class Block {
 public:
  BlockIndex index;

  static Block main(BlockIndex idx, std::shared_ptr<const BandedBasis> basis,
                    Eigen::MatrixXd penalty, Eigen::VectorXd col_means) {
    Block b;
    b.index = idx;
    b.a_ = std::move(basis);
    b.penalty_ = std::make_shared<const Eigen::MatrixXd>(std::move(penalty));
    b.col_means_ = std::move(col_means);
    b.cols_ = b.a_->n_cols;
    b.unit_row_sum_ = true;  // B-spline rows form a partition of unity
    b.check_dims();
    return b;
  }

  static Block interaction(BlockIndex idx, std::shared_ptr<const BandedBasis> a,
                           std::shared_ptr<const BandedBasis> b,
                           std::shared_ptr<const Eigen::MatrixXd> penalty,
                           Eigen::VectorXd col_means) {
    Block blk;
    blk.index = idx;
    blk.a_ = std::move(a);
    blk.b_ = std::move(b);
    blk.penalty_ = std::move(penalty);
    blk.col_means_ = std::move(col_means);
    blk.cols_ = blk.a_->n_cols * blk.b_->n_cols;
    blk.unit_row_sum_ = true;  // tensor of two partitions of unity
    blk.check_dims();
    return blk;
  }

  // Convenience for tests and small problems: a raw dense design matrix,
  // optionally centered. Set unit_row_sum when the rows of m sum to one so
  // the solver can regularize the resulting constant-direction null space.
  static Block from_dense(BlockIndex idx, const Eigen::MatrixXd& m,
                          Eigen::MatrixXd penalty, bool center = false,
                          bool unit_row_sum = false) {
    Eigen::VectorXd means;
    if (center) means = m.colwise().mean();
    Block b;
    b.index = idx;
    b.a_ = std::make_shared<const BandedBasis>(BandedBasis::wrap_dense(m));
    b.penalty_ = std::make_shared<const Eigen::MatrixXd>(std::move(penalty));
    b.col_means_ = std::move(means);
    b.cols_ = b.a_->n_cols;
    b.unit_row_sum_ = unit_row_sum;
    b.check_dims();
    return b;
  }

  int cols() const { return cols_; }
  Eigen::Index rows() const { return a_->rows(); }
  bool is_interaction() const { return static_cast<bool>(b_); }
  bool centered() const { return col_means_.size() > 0; }
  bool unit_row_sum() const { return unit_row_sum_; }
  // Stable within-process identity for factorization caching (interactions
  // share marginal bases, so both pointers are needed).
  std::pair<const void*, const void*> identity() const {
    return {static_cast<const void*>(a_.get()), static_cast<const void*>(b_.get())};
  }
  const Eigen::VectorXd& col_means() const { return col_means_; }
  const Eigen::MatrixXd& penalty() const { return *penalty_; }
  const BandedBasis& basis_a() const { return *a_; }
  const BandedBasis& basis_b() const { return *b_; }

  double quad_penalty(const Eigen::VectorXd& coef) const {
    if (penalty_->size() == 0)
      throw UsageError("block " + index.label() + " has no penalty matrix");
    return coef.dot(*penalty_ * coef);
  }

  // B~' r  (B~ = B - 1 m')
  Eigen::VectorXd xt_r(const Eigen::VectorXd& r) const {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(cols_);
    const Eigen::Index n = rows();
    if (!b_) {
      const int w = a_->width();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double ri = r[i];
        if (ri == 0.0) continue;
        const int off = a_->offsets[i];
        const double* va = a_->values.row(i).data();
        for (int t = 0; t < w; ++t) acc[off + t] += va[t] * ri;
      }
    } else {
      const int wa = a_->width(), wb = b_->width();
      const int kb = b_->n_cols;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double ri = r[i];
        if (ri == 0.0) continue;
        const int oa = a_->offsets[i], ob = b_->offsets[i];
        const double* va = a_->values.row(i).data();
        const double* vb = b_->values.row(i).data();
        for (int t1 = 0; t1 < wa; ++t1) {
          const double w1 = va[t1] * ri;
          double* slot = acc.data() + (oa + t1) * kb + ob;
          for (int t2 = 0; t2 < wb; ++t2) slot[t2] += w1 * vb[t2];
        }
      }
    }
    if (centered()) acc.noalias() -= col_means_ * r.sum();
    return acc;
  }

  // out += scale * B~ coef
  void add_fitted(Eigen::VectorXd& out, const Eigen::VectorXd& coef,
                  double scale = 1.0) const {
    const Eigen::Index n = rows();
    if (!b_) {
      const int w = a_->width();
      for (Eigen::Index i = 0; i < n; ++i) {
        const int off = a_->offsets[i];
        const double* va = a_->values.row(i).data();
        double s = 0.0;
        for (int t = 0; t < w; ++t) s += va[t] * coef[off + t];
        out[i] += scale * s;
      }
    } else {
      const int wa = a_->width(), wb = b_->width();
      const int kb = b_->n_cols;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int oa = a_->offsets[i], ob = b_->offsets[i];
        const double* va = a_->values.row(i).data();
        const double* vb = b_->values.row(i).data();
        double s = 0.0;
        for (int t1 = 0; t1 < wa; ++t1) {
          const double* c = coef.data() + (oa + t1) * kb + ob;
          double inner = 0.0;
          for (int t2 = 0; t2 < wb; ++t2) inner += vb[t2] * c[t2];
          s += va[t1] * inner;
        }
        out[i] += scale * s;
      }
    }
    if (centered()) out.array() -= scale * col_means_.dot(coef);
  }

  Eigen::VectorXd fitted(const Eigen::VectorXd& coef) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(rows());
    add_fitted(out, coef, 1.0);
    return out;
  }

  // B~' B~ = B' B - n m m'
  Eigen::MatrixXd gram() const {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(cols_, cols_);
    const Eigen::Index n = rows();
    if (!b_) {
      const int w = a_->width();
      for (Eigen::Index i = 0; i < n; ++i) {
        const int off = a_->offsets[i];
        const double* va = a_->values.row(i).data();
        for (int t1 = 0; t1 < w; ++t1) {
          double* row = g.data() + static_cast<std::ptrdiff_t>(off + t1) * cols_ + off;
          for (int t2 = 0; t2 < w; ++t2) row[t2] += va[t1] * va[t2];
        }
      }
      // column-major Eigen: the scatter above actually fills (off+t2, off+t1);
      // symmetric accumulation makes the distinction irrelevant
    } else {
      const int wa = a_->width(), wb = b_->width();
      const int kb = b_->n_cols;
      const int ww = wa * wb;
      std::vector<double> local(static_cast<std::size_t>(ww));
      std::vector<int> cols_idx(static_cast<std::size_t>(ww));
      for (Eigen::Index i = 0; i < n; ++i) {
        const int oa = a_->offsets[i], ob = b_->offsets[i];
        const double* va = a_->values.row(i).data();
        const double* vb = b_->values.row(i).data();
        int c = 0;
        for (int t1 = 0; t1 < wa; ++t1)
          for (int t2 = 0; t2 < wb; ++t2, ++c) {
            local[static_cast<std::size_t>(c)] = va[t1] * vb[t2];
            cols_idx[static_cast<std::size_t>(c)] = (oa + t1) * kb + ob + t2;
          }
        for (int u = 0; u < ww; ++u) {
          const double lu = local[static_cast<std::size_t>(u)];
          double* col = g.data() + static_cast<std::ptrdiff_t>(cols_idx[static_cast<std::size_t>(u)]) * cols_;
          for (int v = 0; v < ww; ++v)
            col[cols_idx[static_cast<std::size_t>(v)]] += lu * local[static_cast<std::size_t>(v)];
        }
      }
    }
    if (centered())
      g.noalias() -= static_cast<double>(n) * col_means_ * col_means_.transpose();
    return g;
  }

  // Column means of the raw (uncentered) basis; used to build col_means.
  Eigen::VectorXd raw_col_means() const {
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(rows());
    Block raw = *this;
    raw.col_means_.resize(0);
    return raw.xt_r(ones) / static_cast<double>(rows());
  }

 private:
  void check_dims() const {
    // An empty penalty marks an evaluation-only block (prediction paths).
    if (penalty_->size() != 0 &&
        (penalty_->rows() != cols_ || penalty_->cols() != cols_))
      throw UsageError("block " + index.label() + ": penalty dimension mismatch");
    if (col_means_.size() != 0 && col_means_.size() != cols_)
      throw UsageError("block " + index.label() + ": col_means dimension mismatch");
  }

  std::shared_ptr<const BandedBasis> a_;
  std::shared_ptr<const BandedBasis> b_;
  std::shared_ptr<const Eigen::MatrixXd> penalty_;
  Eigen::VectorXd col_means_;
  int cols_ = 0;
  bool unit_row_sum_ = false;
};

// Anything that can hand out blocks in canonical order.
class BlockProvider {
 public:
  virtual ~BlockProvider() = default;
  virtual const std::vector<BlockIndex>& indices() const = 0;
  virtual const Block& block(const BlockIndex& idx) const = 0;
  virtual Eigen::Index n_rows() const = 0;
};

// Restriction of another provider to a subset of its blocks; used for
// support-restricted refits.
class SubsetBlockProvider : public BlockProvider {
 public:
  SubsetBlockProvider(const BlockProvider& base, std::vector<BlockIndex> subset)
      : base_(&base), subset_(std::move(subset)) {
    std::sort(subset_.begin(), subset_.end());
    subset_.erase(std::unique(subset_.begin(), subset_.end()), subset_.end());
    for (const auto& idx : subset_) base.block(idx);  // validate early
  }

  const std::vector<BlockIndex>& indices() const override { return subset_; }
  const Block& block(const BlockIndex& idx) const override { return base_->block(idx); }
  Eigen::Index n_rows() const override { return base_->n_rows(); }

 private:
  const BlockProvider* base_;
  std::vector<BlockIndex> subset_;
};

// Plain in-memory provider for tests and small problems.
class SimpleBlockProvider : public BlockProvider {
 public:
  explicit SimpleBlockProvider(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
    std::sort(blocks_.begin(), blocks_.end(),
              [](const Block& a, const Block& b) { return a.index < b.index; });
    for (const auto& b : blocks_) indices_.push_back(b.index);
  }

  const std::vector<BlockIndex>& indices() const override { return indices_; }

  const Block& block(const BlockIndex& idx) const override {
    auto it = std::lower_bound(indices_.begin(), indices_.end(), idx);
    if (it == indices_.end() || *it != idx)
      throw UsageError("unknown block " + idx.label());
    return blocks_[static_cast<std::size_t>(it - indices_.begin())];
  }

  Eigen::Index n_rows() const override {
    return blocks_.empty() ? 0 : blocks_.front().rows();
  }

 private:
  std::vector<Block> blocks_;
  std::vector<BlockIndex> indices_;
};

}  // namespace samint
