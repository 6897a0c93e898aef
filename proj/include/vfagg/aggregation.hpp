#pragma once

// Exponentially weighted average forecaster over linear experts.
//
// Weights follow w_i <- w_i * exp(-eta * loss_i) per round (online form) or
// w_i = exp(-eta * sum of past losses_i) (batch form); from unit initial
// weights the two coincide. Batch weights are shifted by the smallest
// cumulative loss so they never underflow to all-zero.

#include <cstddef>
#include <span>
#include <vector>

#include "vfagg/core.hpp"
#include "vfagg/experts.hpp"

namespace vfagg {

enum class UpdateRule { Batch, Online };

struct WeightState {
  std::vector<double> weights;            // raw, nonnegative
  std::vector<double> cumulative_losses;
  double eta = 0.0;

  std::size_t size() const noexcept { return weights.size(); }
  std::vector<double> normalized() const;
};

/// Unit weights, zero losses.
WeightState initial_state(std::size_t experts, double eta);

/// Rows are rounds, columns are experts.
using LossMatrix = std::vector<std::vector<double>>;

/// Weighted mean of expert predictions. Throws std::domain_error when the
/// weights do not sum to a positive finite value.
VisualField aggregate_prediction(std::span<const double> weights,
                                 std::span<const VisualField> predictions);

/// w_i <- w_i exp(-eta l_i). If a weight underflows to zero, or all fall
/// below 1e-200, weights are rebuilt as exp(-eta (L_i - min L)) from the
/// cumulative losses, which assumes the trajectory began at unit weights.
WeightState online_update(WeightState state, std::span<const double> losses);

WeightState batch_weights(const LossMatrix& losses, std::size_t experts, double eta);

/// Replays online_update from unit weights over every row of the matrix.
WeightState online_weights(const LossMatrix& losses, std::size_t experts, double eta);

WeightState compute_weights(const LossMatrix& losses, std::size_t experts, double eta,
                            UpdateRule rule);

/// sqrt(8 ln N / n), the learning rate minimizing the worst-case regret bound.
double rg_optimal_eta(std::size_t experts, std::size_t rounds);

/// Loss of every expert at every prefix observation (rows = rounds).
LossMatrix expert_loss_matrix(std::span<const Expert> experts, std::span<const Observation> prefix);

/// All experts of all pools weighted together. Pools must be fit to the prefix.
VisualField flat_predict(std::span<const ExpertPool> pools, std::span<const Observation> prefix,
                         double eta, double target_date, UpdateRule rule = UpdateRule::Batch);

/// Learning rates of the two aggregation levels.
struct HierarchicalEta {
  std::vector<double> per_pool;  // level 1, one per pool
  double top = 0.0;              // level 2

  static HierarchicalEta shared(double eta, std::size_t pools);
};

/// Level 1 aggregates each pool into an intermediate predictor; level 2
/// weights the intermediates by their own losses on the prefix.
VisualField hierarchical_predict(std::span<const ExpertPool> pools,
                                 std::span<const Observation> prefix, const HierarchicalEta& eta,
                                 double target_date, UpdateRule rule = UpdateRule::Batch);

VisualField hierarchical_predict(std::span<const ExpertPool> pools,
                                 std::span<const Observation> prefix, double eta,
                                 double target_date, UpdateRule rule = UpdateRule::Batch);

struct RegretLedger {
  double forecaster_loss_sum = 0.0;
  std::vector<double> per_expert_loss_sums;
  std::size_t rounds = 0;

  void record(double forecaster_loss, std::span<const double> expert_losses);
};

/// Forecaster cumulative loss minus the best expert's cumulative loss.
double regret(const RegretLedger& ledger);

}  // namespace vfagg
