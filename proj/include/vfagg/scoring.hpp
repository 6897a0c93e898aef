#pragma once

// Batched evaluation of the aggregation strategies for one target prefix.
//
// The reference functions in aggregation.hpp materialize every expert's
// prediction as a VisualField. During learning-rate tuning the same target
// prefix is scored at every grid point, so this path factors the work:
// predictions are ybar + s_i (d - dbar) plus a sparse correction where the
// clamp to [-30, 0] is active, and the weighted sums over experts for all
// learning rates reduce to one matrix product per pool.

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

#include "vfagg/aggregation.hpp"
#include "vfagg/core.hpp"
#include "vfagg/experts.hpp"

namespace vfagg {

/// Slopes of one pool stacked as rows.
struct PoolMatrix {
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Method method = Method::PatientWiseLR;
  Matrix slopes;

  static PoolMatrix from_pool(const ExpertPool& pool);
  std::size_t size() const noexcept { return static_cast<std::size_t>(slopes.rows()); }
};

/// Level-1 aggregates of every pool for a list of learning rates.
struct Level1 {
  std::vector<double> etas;
  // Per pool: raw weighted sums laid out [eta][slot][point], where slot
  // t < n is the t-th prefix date and slot n the target date.
  std::vector<std::vector<double>> numerators;
  std::vector<std::vector<double>> weight_sums;  // [pool][eta]
};

class PrefixScorer {
public:
  PrefixScorer(std::span<const PoolMatrix> pools, std::span<const Observation> prefix,
               double target_date, UpdateRule rule = UpdateRule::Batch);

  std::size_t pool_count() const noexcept { return pools_.size(); }
  std::size_t rounds() const noexcept { return rounds_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t expert_count(std::size_t pool) const { return pools_[pool].experts; }
  std::size_t total_experts() const;

  Level1 level1(std::span<const double> etas) const;
  /// Same, refilling `out` so repeated calls reuse its buffers.
  void level1(std::span<const double> etas, Level1& out) const;

  /// Intermediate predictor of one pool at a slot (0..n).
  VisualField intermediate(const Level1& l1, std::size_t pool, std::size_t eta_index,
                           std::size_t slot) const;

  VisualField single(const Level1& l1, std::size_t pool, std::size_t eta_index) const {
    return intermediate(l1, pool, eta_index, rounds_);
  }
  /// Every expert of every pool weighted together at etas[eta_index].
  VisualField flat(const Level1& l1, std::size_t eta_index) const;
  /// Level 2 over the intermediates selected by eta_index_per_pool.
  VisualField hierarchical(const Level1& l1, std::span<const std::size_t> eta_index_per_pool,
                           double top_eta) const;

  /// Target prediction of the expert with the largest weight (smallest
  /// cumulative prefix loss, ties to the lowest index) within one pool.
  VisualField best_expert(std::size_t pool) const;
  /// Same over the concatenation of all pools.
  VisualField best_expert_overall() const;

private:
  struct PoolState {
    const PoolMatrix* matrix = nullptr;
    std::size_t experts = 0;
    std::vector<double> round_losses;      // [expert][round]
    std::vector<double> cumulative;        // [expert]
    double min_cumulative = 0.0;
    std::vector<std::size_t> correction_offsets;  // CSR over experts
    std::vector<std::size_t> correction_index;    // slot * D + point
    std::vector<double> correction_value;         // clamped - raw
  };

  VisualField expert_target_prediction(const PoolState& pool, std::size_t expert) const;
  std::vector<double> pool_weights(const PoolState& pool, double eta) const;

  std::vector<PoolState> pools_;
  std::size_t rounds_ = 0;
  std::size_t dim_ = 0;
  UpdateRule rule_;
  std::vector<double> offsets_;      // d_t - dbar for every slot
  std::vector<double> mean_field_;   // ybar over the prefix
  std::vector<VisualField> observed_;
};

}  // namespace vfagg
