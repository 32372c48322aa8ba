#pragma once

#include <Eigen/Dense>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <utility>
#include <vector>

#include "samint/block.hpp"
#include "samint/splines.hpp"

namespace samint {

inline std::vector<std::pair<int, int>> all_pairs(int p) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(p) * static_cast<std::size_t>(p - 1) / 2);
  for (int j = 0; j < p; ++j)
    for (int k = j + 1; k < p; ++k) out.emplace_back(j, k);
  return out;
}

// The full additive design over standardized training data: one spline block
// per covariate plus one tensor-product block per requested pair. Marginal
// bases are evaluated once per covariate in banded form; interaction blocks
// are assembled lazily from them (cheap), and dense tensor matrices are only
// materialized on request through a byte-budgeted LRU cache. Penalty
// matrices are shared across blocks of equal dimension.
class BlockSet : public BlockProvider {
 public:
  BlockSet(const Eigen::MatrixXd& x_std, const SplineConfig& config,
           const std::vector<std::pair<int, int>>* pairs = nullptr,
           std::size_t dense_cache_bytes = std::size_t{1} << 30,
           const std::vector<std::string>* feature_names = nullptr)
      : config_(config), n_(x_std.rows()), p_(static_cast<int>(x_std.cols())),
        dense_cache_budget_(dense_cache_bytes) {
    config_.validate();
    if (p_ < 1) throw DataError("need at least one covariate");

    auto name_of = [&](int j) {
      if (feature_names && static_cast<std::size_t>(j) < feature_names->size())
        return (*feature_names)[static_cast<std::size_t>(j)];
      return "covariate " + std::to_string(j);
    };

    main_knots_.resize(static_cast<std::size_t>(p_));
    int_knots_.resize(static_cast<std::size_t>(p_));
    main_bases_.resize(static_cast<std::size_t>(p_));
    int_bases_.resize(static_cast<std::size_t>(p_));
    for (int j = 0; j < p_; ++j) {
      try {
        main_knots_[static_cast<std::size_t>(j)] =
            make_knots(x_std.col(j), config_.n_knots_main, config_.degree,
                       config_.knot_placement);
        int_knots_[static_cast<std::size_t>(j)] =
            make_knots(x_std.col(j), config_.n_knots_interaction_per_axis,
                       config_.degree, config_.knot_placement);
      } catch (const DataError& e) {
        throw DataError("covariate '" + name_of(j) + "': " + e.what());
      }
      main_bases_[static_cast<std::size_t>(j)] = std::make_shared<const BandedBasis>(
          bspline_basis_banded(x_std.col(j), main_knots_[static_cast<std::size_t>(j)],
                               config_.degree));
      int_bases_[static_cast<std::size_t>(j)] = std::make_shared<const BandedBasis>(
          bspline_basis_banded(x_std.col(j), int_knots_[static_cast<std::size_t>(j)],
                               config_.degree));
    }

    std::vector<std::pair<int, int>> pair_list = pairs ? *pairs : all_pairs(p_);
    for (int j = 0; j < p_; ++j) indices_.push_back(BlockIndex::main(j));
    for (auto [j, k] : pair_list) {
      if (j < 0 || k < 0 || j >= p_ || k >= p_)
        throw UsageError("interaction pair out of range");
      indices_.push_back(BlockIndex::pair(j, k));
    }
    std::sort(indices_.begin() + p_, indices_.end());
  }

  int p() const { return p_; }
  const SplineConfig& config() const { return config_; }
  Eigen::Index n_rows() const override { return n_; }
  const std::vector<BlockIndex>& indices() const override { return indices_; }

  const Eigen::VectorXd& main_knots(int j) const {
    return main_knots_[static_cast<std::size_t>(j)];
  }
  const Eigen::VectorXd& interaction_knots(int j) const {
    return int_knots_[static_cast<std::size_t>(j)];
  }
  const BandedBasis& main_banded(int j) const {
    return *main_bases_[static_cast<std::size_t>(j)];
  }
  const BandedBasis& interaction_banded(int j) const {
    return *int_bases_[static_cast<std::size_t>(j)];
  }

  // Lazy, memoized block materialization; safe under concurrent access.
  const Block& block(const BlockIndex& idx) const override {
    {
      std::shared_lock lock(blocks_mutex_);
      auto it = blocks_.find(idx);
      if (it != blocks_.end()) return it->second;
    }
    std::unique_lock lock(blocks_mutex_);
    auto it = blocks_.find(idx);
    if (it != blocks_.end()) return it->second;
    return blocks_.emplace(idx, materialize(idx)).first->second;
  }

  // Dense per-covariate basis view (raw, uncentered).
  SplineBasis main_basis(int j) const {
    const BandedBasis& b = main_banded(j);
    SplineBasis sb;
    sb.degree = config_.degree;
    sb.knots = b.knots;
    sb.basis_matrix = b.dense();
    sb.diff_matrix = difference_penalty(b.n_cols);
    sb.penalty_matrix = sb.diff_matrix.transpose() * sb.diff_matrix;
    return sb;
  }

  // Dense tensor block through the LRU cache.
  std::shared_ptr<const InteractionBasis> interaction_basis(int j, int k) const {
    BlockIndex idx = BlockIndex::pair(j, k);
    std::scoped_lock lock(dense_mutex_);
    auto hit = dense_lookup_.find(idx);
    if (hit != dense_lookup_.end()) {
      dense_lru_.splice(dense_lru_.begin(), dense_lru_, hit->second);
      ++dense_hits_;
      return hit->second->value;
    }
    ++dense_misses_;
    auto ib = std::make_shared<InteractionBasis>();
    const BandedBasis& ba = interaction_banded(idx.j);
    const BandedBasis& bb = interaction_banded(idx.k);
    ib->basis_matrix = tensor_rows(ba, bb);
    ib->penalty_matrix = *interaction_penalty_for(ba.n_cols, bb.n_cols);
    ib->knots_a = ba.knots;
    ib->knots_b = bb.knots;
    ib->dim_a = ba.n_cols;
    ib->dim_b = bb.n_cols;
    ib->degree = config_.degree;
    std::size_t bytes = static_cast<std::size_t>(ib->basis_matrix.size() +
                                                 ib->penalty_matrix.size()) *
                        sizeof(double);
    dense_lru_.push_front(DenseEntry{idx, ib, bytes});
    dense_lookup_[idx] = dense_lru_.begin();
    dense_bytes_ += bytes;
    while (dense_bytes_ > dense_cache_budget_ && dense_lru_.size() > 1) {
      const DenseEntry& back = dense_lru_.back();
      dense_bytes_ -= back.bytes;
      dense_lookup_.erase(back.key);
      dense_lru_.pop_back();
    }
    return ib;
  }

  std::size_t dense_cache_hits() const { return dense_hits_; }
  std::size_t dense_cache_misses() const { return dense_misses_; }
  std::size_t dense_cache_bytes() const { return dense_bytes_; }

 private:
  Block materialize(const BlockIndex& idx) const {
    if (idx.j < 0 || idx.j >= p_ || (idx.is_interaction() && idx.k >= p_))
      throw UsageError("unknown block " + idx.label());
    if (!idx.is_interaction()) {
      auto basis = main_bases_[static_cast<std::size_t>(idx.j)];
      Eigen::MatrixXd d = difference_penalty(basis->n_cols);
      Block raw = Block::main(idx, basis, d.transpose() * d, Eigen::VectorXd());
      Eigen::VectorXd means = raw.raw_col_means();
      return Block::main(idx, basis, d.transpose() * d, std::move(means));
    }
    bool listed = std::binary_search(indices_.begin() + p_, indices_.end(), idx);
    if (!listed) throw UsageError("interaction pair " + idx.label() + " not requested");
    auto a = int_bases_[static_cast<std::size_t>(idx.j)];
    auto b = int_bases_[static_cast<std::size_t>(idx.k)];
    auto penalty = interaction_penalty_for(a->n_cols, b->n_cols);
    Block raw = Block::interaction(idx, a, b, penalty, Eigen::VectorXd());
    Eigen::VectorXd means = raw.raw_col_means();
    return Block::interaction(idx, a, b, penalty, std::move(means));
  }

  std::shared_ptr<const Eigen::MatrixXd> interaction_penalty_for(int ka, int kb) const {
    auto key = std::make_pair(ka, kb);
    std::scoped_lock lock(penalty_mutex_);
    auto it = shared_penalties_.find(key);
    if (it != shared_penalties_.end()) return it->second;
    Eigen::MatrixXd da = difference_penalty(ka);
    Eigen::MatrixXd db = difference_penalty(kb);
    auto s = std::make_shared<const Eigen::MatrixXd>(interaction_penalty(da, db));
    shared_penalties_[key] = s;
    return s;
  }

  static Eigen::MatrixXd tensor_rows(const BandedBasis& a, const BandedBasis& b) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), a.n_cols * b.n_cols);
    const int wa = a.width(), wb = b.width();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const int oa = a.offsets[i], ob = b.offsets[i];
      for (int t1 = 0; t1 < wa; ++t1)
        for (int t2 = 0; t2 < wb; ++t2)
          out(i, (oa + t1) * b.n_cols + ob + t2) = a.values(i, t1) * b.values(i, t2);
    }
    return out;
  }

  SplineConfig config_;
  Eigen::Index n_ = 0;
  int p_ = 0;
  std::vector<BlockIndex> indices_;
  std::vector<Eigen::VectorXd> main_knots_, int_knots_;
  std::vector<std::shared_ptr<const BandedBasis>> main_bases_, int_bases_;

  mutable std::shared_mutex blocks_mutex_;
  mutable std::map<BlockIndex, Block> blocks_;
  mutable std::mutex penalty_mutex_;
  mutable std::map<std::pair<int, int>, std::shared_ptr<const Eigen::MatrixXd>>
      shared_penalties_;

  struct DenseEntry {
    BlockIndex key;
    std::shared_ptr<const InteractionBasis> value;
    std::size_t bytes;
  };
  std::size_t dense_cache_budget_;
  mutable std::mutex dense_mutex_;
  mutable std::list<DenseEntry> dense_lru_;
  mutable std::map<BlockIndex, std::list<DenseEntry>::iterator> dense_lookup_;
  mutable std::size_t dense_bytes_ = 0;
  mutable std::size_t dense_hits_ = 0;
  mutable std::size_t dense_misses_ = 0;
};

// Evaluates fitted blocks on new (standardized) data using the training
// knots and training column means. Bases for every covariate are prepared at
// construction, so accumulation is const and thread-safe.
class BasisEvaluator {
 public:
  BasisEvaluator(const BlockSet& blocks, const Eigen::MatrixXd& x_std)
      : set_(&blocks), n_(x_std.rows()) {
    if (x_std.cols() != blocks.p())
      throw DataError("evaluation data has wrong covariate count");
    main_.reserve(static_cast<std::size_t>(blocks.p()));
    inter_.reserve(static_cast<std::size_t>(blocks.p()));
    for (int j = 0; j < blocks.p(); ++j) {
      main_.push_back(std::make_shared<const BandedBasis>(bspline_basis_banded(
          x_std.col(j), blocks.main_knots(j), blocks.config().degree)));
      inter_.push_back(std::make_shared<const BandedBasis>(bspline_basis_banded(
          x_std.col(j), blocks.interaction_knots(j), blocks.config().degree)));
    }
  }

  Eigen::Index n() const { return n_; }

  // Sum of block contributions (centered scale, i.e. without intercept).
  Eigen::VectorXd accumulate(
      const std::map<BlockIndex, Eigen::VectorXd>& coefficients) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
    for (const auto& [idx, coef] : coefficients) add_block(out, idx, coef);
    return out;
  }

  void add_block(Eigen::VectorXd& out, const BlockIndex& idx,
                 const Eigen::VectorXd& coef, double scale = 1.0) const {
    const Block& train_block = set_->block(idx);
    Block eval = idx.is_interaction()
                     ? Block::interaction(idx, inter_[static_cast<std::size_t>(idx.j)],
                                          inter_[static_cast<std::size_t>(idx.k)],
                                          std::make_shared<const Eigen::MatrixXd>(
                                              train_block.penalty()),
                                          train_block.col_means())
                     : Block::main(idx, main_[static_cast<std::size_t>(idx.j)],
                                   train_block.penalty(), train_block.col_means());
    eval.add_fitted(out, coef, scale);
  }

 private:
  const BlockSet* set_;
  Eigen::Index n_;
  std::vector<std::shared_ptr<const BandedBasis>> main_, inter_;
};

}  // namespace samint
