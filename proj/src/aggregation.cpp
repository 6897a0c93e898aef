#include "vfagg/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vfagg {

namespace {

void check_losses(std::span<const double> losses, std::size_t experts) {
  if (losses.size() != experts) {
    throw std::invalid_argument("loss row has " + std::to_string(losses.size()) +
                                " entries for " + std::to_string(experts) + " experts");
  }
}

std::vector<VisualField> predictions_at(std::span<const Expert> experts, double date) {
  std::vector<VisualField> out;
  out.reserve(experts.size());
  for (const auto& e : experts) out.push_back(predict_linear(e, date));
  return out;
}

}  // namespace

std::vector<double> WeightState::normalized() const {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::domain_error("WeightState: weights do not sum to a positive finite value");
  }
  std::vector<double> out(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) out[i] = weights[i] / total;
  return out;
}

WeightState initial_state(std::size_t experts, double eta) {
  if (experts == 0) throw std::invalid_argument("initial_state: no experts");
  return WeightState{std::vector<double>(experts, 1.0), std::vector<double>(experts, 0.0), eta};
}

VisualField aggregate_prediction(std::span<const double> weights,
                                 std::span<const VisualField> predictions) {
  if (predictions.empty() || weights.size() != predictions.size()) {
    throw std::invalid_argument("aggregate_prediction: need one weight per prediction");
  }
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("aggregate_prediction: negative weight");
    total += w;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::domain_error("aggregate_prediction: weights sum to zero (numerical underflow?)");
  }
  const std::size_t dim = predictions.front().size();
  std::vector<double> out(dim, 0.0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != dim) {
      throw std::invalid_argument("aggregate_prediction: dimension mismatch");
    }
    if (weights[i] == 0.0) continue;
    const double share = weights[i] / total;
    for (std::size_t j = 0; j < dim; ++j) out[j] += share * predictions[i][j];
  }
  return VisualField::clamped(std::move(out));
}

WeightState online_update(WeightState state, std::span<const double> losses) {
  check_losses(losses, state.size());
  bool lost = false;
  double largest = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double before = state.weights[i];
    state.weights[i] *= std::exp(-state.eta * losses[i]);
    state.cumulative_losses[i] += losses[i];
    lost = lost || (before > 0.0 && state.weights[i] == 0.0);
    largest = std::max(largest, state.weights[i]);
  }
  if (lost || largest < 1e-200) {
    // Underflow: rebuild from cumulative losses, i.e. the telescoped product from unit weights.
    const double best = *std::min_element(state.cumulative_losses.begin(), state.cumulative_losses.end());
    for (std::size_t i = 0; i < state.size(); ++i) {
      state.weights[i] = std::exp(-state.eta * (state.cumulative_losses[i] - best));
    }
  }
  return state;
}

WeightState batch_weights(const LossMatrix& losses, std::size_t experts, double eta) {
  WeightState state = initial_state(experts, eta);
  for (const auto& row : losses) {
    check_losses(row, experts);
    for (std::size_t i = 0; i < experts; ++i) state.cumulative_losses[i] += row[i];
  }
  const double best =
      *std::min_element(state.cumulative_losses.begin(), state.cumulative_losses.end());
  for (std::size_t i = 0; i < experts; ++i) {
    state.weights[i] = std::exp(-eta * (state.cumulative_losses[i] - best));
  }
  return state;
}

WeightState online_weights(const LossMatrix& losses, std::size_t experts, double eta) {
  WeightState state = initial_state(experts, eta);
  for (const auto& row : losses) state = online_update(std::move(state), row);
  return state;
}

WeightState compute_weights(const LossMatrix& losses, std::size_t experts, double eta,
                            UpdateRule rule) {
  return rule == UpdateRule::Batch ? batch_weights(losses, experts, eta)
                                   : online_weights(losses, experts, eta);
}

double rg_optimal_eta(std::size_t experts, std::size_t rounds) {
  if (experts == 0) throw std::invalid_argument("rg_optimal_eta: N must be at least 1");
  if (rounds == 0) throw std::invalid_argument("rg_optimal_eta: n must be at least 1");
  return std::sqrt(8.0 * std::log(static_cast<double>(experts)) / static_cast<double>(rounds));
}

LossMatrix expert_loss_matrix(std::span<const Expert> experts, std::span<const Observation> prefix) {
  LossMatrix out;
  out.reserve(prefix.size());
  for (const auto& obs : prefix) {
    std::vector<double> row;
    row.reserve(experts.size());
    for (const auto& e : experts) row.push_back(loss(predict_linear(e, obs.date), obs.field));
    out.push_back(std::move(row));
  }
  return out;
}

VisualField flat_predict(std::span<const ExpertPool> pools, std::span<const Observation> prefix,
                         double eta, double target_date, UpdateRule rule) {
  if (prefix.empty()) throw std::invalid_argument("flat_predict: empty prefix");
  std::vector<Expert> all;
  for (const auto& pool : pools) all.insert(all.end(), pool.experts.begin(), pool.experts.end());
  if (all.empty()) throw std::invalid_argument("flat_predict: no experts");

  const WeightState state = compute_weights(expert_loss_matrix(all, prefix), all.size(), eta, rule);
  return aggregate_prediction(state.weights, predictions_at(all, target_date));
}

HierarchicalEta HierarchicalEta::shared(double eta, std::size_t pools) {
  return HierarchicalEta{std::vector<double>(pools, eta), eta};
}

VisualField hierarchical_predict(std::span<const ExpertPool> pools,
                                 std::span<const Observation> prefix, const HierarchicalEta& eta,
                                 double target_date, UpdateRule rule) {
  if (prefix.empty()) throw std::invalid_argument("hierarchical_predict: empty prefix");
  if (pools.empty()) throw std::invalid_argument("hierarchical_predict: no pools");
  if (eta.per_pool.size() != pools.size()) {
    throw std::invalid_argument("hierarchical_predict: one level-1 eta per pool required");
  }

  // Level 1: each pool becomes one intermediate predictor, evaluated at every
  // prefix date and at the target date.
  const std::size_t rounds = prefix.size();
  std::vector<std::vector<VisualField>> intermediate(pools.size());
  for (std::size_t k = 0; k < pools.size(); ++k) {
    const auto& experts = pools[k].experts;
    if (experts.empty()) throw std::invalid_argument("hierarchical_predict: empty pool");
    const WeightState w =
        compute_weights(expert_loss_matrix(experts, prefix), experts.size(), eta.per_pool[k], rule);
    for (std::size_t t = 0; t <= rounds; ++t) {
      const double date = t < rounds ? prefix[t].date : target_date;
      intermediate[k].push_back(aggregate_prediction(w.weights, predictions_at(experts, date)));
    }
  }

  // Level 2 over the intermediates.
  LossMatrix top_losses(rounds, std::vector<double>(pools.size()));
  for (std::size_t t = 0; t < rounds; ++t) {
    for (std::size_t k = 0; k < pools.size(); ++k) {
      top_losses[t][k] = loss(intermediate[k][t], prefix[t].field);
    }
  }
  const WeightState top = compute_weights(top_losses, pools.size(), eta.top, rule);
  std::vector<VisualField> finals;
  finals.reserve(pools.size());
  for (const auto& series : intermediate) finals.push_back(series[rounds]);
  return aggregate_prediction(top.weights, finals);
}

VisualField hierarchical_predict(std::span<const ExpertPool> pools,
                                 std::span<const Observation> prefix, double eta,
                                 double target_date, UpdateRule rule) {
  return hierarchical_predict(pools, prefix, HierarchicalEta::shared(eta, pools.size()),
                              target_date, rule);
}

void RegretLedger::record(double forecaster_loss, std::span<const double> expert_losses) {
  if (rounds == 0 && per_expert_loss_sums.empty()) {
    per_expert_loss_sums.assign(expert_losses.size(), 0.0);
  }
  check_losses(expert_losses, per_expert_loss_sums.size());
  forecaster_loss_sum += forecaster_loss;
  for (std::size_t i = 0; i < expert_losses.size(); ++i) per_expert_loss_sums[i] += expert_losses[i];
  ++rounds;
}

double regret(const RegretLedger& ledger) {
  if (ledger.rounds == 0 || ledger.per_expert_loss_sums.empty()) {
    throw std::invalid_argument("regret: empty ledger");
  }
  const double best =
      *std::min_element(ledger.per_expert_loss_sums.begin(), ledger.per_expert_loss_sums.end());
  return ledger.forecaster_loss_sum - best;
}

}  // namespace vfagg
