#include "vfagg/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vfagg {

PoolMatrix PoolMatrix::from_pool(const ExpertPool& pool) {
  if (pool.empty()) throw std::invalid_argument("PoolMatrix: empty pool");
  const std::size_t dim = pool.experts.front().slope.size();
  PoolMatrix out;
  out.method = pool.method;
  out.slopes.resize(static_cast<Eigen::Index>(pool.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& s = pool.experts[i].slope;
    if (s.size() != dim) throw std::invalid_argument("PoolMatrix: dimension mismatch");
    for (std::size_t j = 0; j < dim; ++j) out.slopes(Eigen::Index(i), Eigen::Index(j)) = s[j];
  }
  return out;
}

PrefixScorer::PrefixScorer(std::span<const PoolMatrix> pools, std::span<const Observation> prefix,
                           double target_date, UpdateRule rule)
    : rounds_(prefix.size()), rule_(rule) {
  if (prefix.empty()) throw std::invalid_argument("PrefixScorer: empty prefix");
  if (pools.empty()) throw std::invalid_argument("PrefixScorer: no pools");
  dim_ = prefix.front().field.size();

  double mean_date = 0.0;
  mean_field_.assign(dim_, 0.0);
  for (const auto& obs : prefix) {
    if (obs.field.size() != dim_) throw std::invalid_argument("PrefixScorer: dimension mismatch");
    mean_date += obs.date;
    for (std::size_t j = 0; j < dim_; ++j) mean_field_[j] += obs.field[j];
    observed_.push_back(obs.field);
  }
  const double count = static_cast<double>(rounds_);
  mean_date /= count;
  for (double& v : mean_field_) v /= count;
  for (const auto& obs : prefix) offsets_.push_back(obs.date - mean_date);
  offsets_.push_back(target_date - mean_date);

  const double scale = 30.0 * std::sqrt(static_cast<double>(dim_));
  const Eigen::Index d = static_cast<Eigen::Index>(dim_);
  const Eigen::Index r = static_cast<Eigen::Index>(rounds_);
  const Eigen::Map<const Eigen::ArrayXd> mean(mean_field_.data(), d);

  // Reciprocal headroom of ybar below the ceiling and above the floor. A
  // prediction ybar + s*delta stays unclamped while delta times the largest
  // s_j / headroom_j stays below 1.
  constexpr double kNoRoom = 1e300;
  constexpr double kSafe = 1.0 - 1e-9;
  Eigen::ArrayXd inv_up(d), inv_down(d);
  bool inside = true;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double up = kTdCeiling - mean[j];
    const double down = mean[j] - kTdFloor;
    inside = inside && up >= 0.0 && down >= 0.0;
    inv_up[j] = up > 0.0 ? 1.0 / up : kNoRoom;
    inv_down[j] = down > 0.0 ? 1.0 / down : kNoRoom;
  }

  // residual.col(t) = ybar - y_t, so an unclamped round loss expands to
  // |r_t|^2 + 2 delta_t s.r_t + delta_t^2 |s|^2.
  Eigen::MatrixXd residual(d, r);
  for (std::size_t t = 0; t < rounds_; ++t) {
    residual.col(static_cast<Eigen::Index>(t)) =
        (mean - Eigen::Map<const Eigen::ArrayXd>(observed_[t].values().data(), d)).matrix();
  }
  const Eigen::VectorXd residual_norms = residual.colwise().squaredNorm().transpose();

  for (const auto& matrix : pools) {
    if (static_cast<std::size_t>(matrix.slopes.cols()) != dim_ || matrix.size() == 0) {
      throw std::invalid_argument("PrefixScorer: pool dimension mismatch");
    }
    PoolState state;
    state.matrix = &matrix;
    state.experts = matrix.size();
    state.round_losses.assign(state.experts * rounds_, 0.0);
    state.cumulative.assign(state.experts, 0.0);
    state.correction_offsets.reserve(state.experts + 1);
    state.correction_offsets.push_back(0);

    const Eigen::MatrixXd cross = matrix.slopes * residual;  // s_i . r_t
    const Eigen::VectorXd slope_norms = matrix.slopes.rowwise().squaredNorm();
    Eigen::ArrayXd raw(d), value(d), up(d), down(d);
    for (std::size_t i = 0; i < state.experts; ++i) {
      const Eigen::Map<const Eigen::ArrayXd> slope(matrix.slopes.data() + i * dim_, d);
      up = slope * inv_up;
      down = slope * inv_down;
      const double rate_forward = std::max(up.maxCoeff(), -down.minCoeff());
      const double rate_backward = std::max(-up.minCoeff(), down.maxCoeff());
      const Eigen::Index row = static_cast<Eigen::Index>(i);

      for (std::size_t t = 0; t <= rounds_; ++t) {
        const double delta = offsets_[t];
        const bool free = inside && (delta >= 0.0 ? delta * rate_forward : -delta * rate_backward) < kSafe;
        double sq = -1.0;
        if (free && t < rounds_) {
          const double terms = residual_norms[Eigen::Index(t)] + delta * delta * slope_norms[row];
          sq = terms + 2.0 * delta * cross(row, Eigen::Index(t));
          if (sq < 0.01 * terms) sq = -1.0;  // cancellation, recompute directly
        }
        if (!free || (t < rounds_ && sq < 0.0)) {
          raw = mean + slope * delta;
          const bool clamped = raw.minCoeff() < kTdFloor || raw.maxCoeff() > kTdCeiling;
          if (clamped) {
            value = raw.max(kTdFloor).min(kTdCeiling);
            for (Eigen::Index j = 0; j < d; ++j) {
              if (value[j] != raw[j]) {
                state.correction_index.push_back(t * dim_ + static_cast<std::size_t>(j));
                state.correction_value.push_back(value[j] - raw[j]);
              }
            }
          }
          if (t < rounds_) {
            const Eigen::Map<const Eigen::ArrayXd> y(observed_[t].values().data(), d);
            sq = clamped ? (value - y).square().sum() : (raw - y).square().sum();
          }
        }
        if (t < rounds_) {
          const double l = std::sqrt(sq) / scale;
          state.round_losses[i * rounds_ + t] = l;
          state.cumulative[i] += l;
        }
      }
      state.correction_offsets.push_back(state.correction_index.size());
    }
    state.min_cumulative = *std::min_element(state.cumulative.begin(), state.cumulative.end());
    pools_.push_back(std::move(state));
  }
}

std::size_t PrefixScorer::total_experts() const {
  std::size_t total = 0;
  for (const auto& p : pools_) total += p.experts;
  return total;
}

std::vector<double> PrefixScorer::pool_weights(const PoolState& pool, double eta) const {
  std::vector<double> w(pool.experts);
  if (rule_ == UpdateRule::Batch) {
    for (std::size_t i = 0; i < pool.experts; ++i) {
      w[i] = std::exp(-eta * (pool.cumulative[i] - pool.min_cumulative));
    }
  } else {
    LossMatrix losses(rounds_, std::vector<double>(pool.experts));
    for (std::size_t i = 0; i < pool.experts; ++i) {
      for (std::size_t t = 0; t < rounds_; ++t) losses[t][i] = pool.round_losses[i * rounds_ + t];
    }
    w = online_weights(losses, pool.experts, eta).weights;
    // Best expert at 1, the batch convention, so pools combine the same way under both rules.
    const double top = *std::max_element(w.begin(), w.end());
    for (double& v : w) v /= top;
  }
  return w;
}

Level1 PrefixScorer::level1(std::span<const double> etas) const {
  Level1 out;
  level1(etas, out);
  return out;
}

void PrefixScorer::level1(std::span<const double> etas, Level1& out) const {
  const std::size_t grid = etas.size();
  const std::size_t slots = rounds_ + 1;
  out.etas.assign(etas.begin(), etas.end());
  out.numerators.resize(pools_.size());
  out.weight_sums.resize(pools_.size());

  // Scratch kept per thread; tuning calls this for every target and n.
  // Eigen-aligned like a Matrix, so the products round the same way.
  using Aligned = std::vector<double, Eigen::aligned_allocator<double>>;
  thread_local Aligned weight_buffer, slope_buffer;
  thread_local std::vector<double> corrections;
  using RowMajor = PoolMatrix::Matrix;
  for (std::size_t k = 0; k < pools_.size(); ++k) {
    const PoolState& pool = pools_[k];
    // Wt(i, g): weight of expert i at etas[g].
    weight_buffer.resize(pool.experts * grid);
    Eigen::Map<RowMajor, Eigen::AlignedMax> wt(weight_buffer.data(), static_cast<Eigen::Index>(pool.experts),
                            static_cast<Eigen::Index>(grid));
    if (rule_ == UpdateRule::Batch) {
      for (std::size_t i = 0; i < pool.experts; ++i) {
        const double shifted = pool.cumulative[i] - pool.min_cumulative;
        double* wrow = wt.data() + i * grid;
        for (std::size_t g = 0; g < grid; ++g) wrow[g] = -etas[g] * shifted;
      }
      wt = wt.array().exp().matrix();
    } else {
      for (std::size_t g = 0; g < grid; ++g) {
        const std::vector<double> w = pool_weights(pool, etas[g]);
        for (std::size_t i = 0; i < pool.experts; ++i) wt(Eigen::Index(i), Eigen::Index(g)) = w[i];
      }
    }
    std::vector<double>& sums = out.weight_sums[k];
    sums.assign(grid, 0.0);
    for (std::size_t i = 0; i < pool.experts; ++i) {
      const double* wrow = wt.data() + i * grid;
      for (std::size_t g = 0; g < grid; ++g) sums[g] += wrow[g];
    }
    for (std::size_t g = 0; g < grid; ++g) {
      if (!(sums[g] > 0.0) || !std::isfinite(sums[g])) {
        throw std::domain_error("PrefixScorer: weights sum to zero (numerical underflow?)");
      }
    }

    // Linear part: sum_i w_i s_i for every eta.
    slope_buffer.resize(grid * dim_);
    Eigen::Map<Eigen::MatrixXd, Eigen::AlignedMax> weighted_slopes(slope_buffer.data(), static_cast<Eigen::Index>(grid),
                                                static_cast<Eigen::Index>(dim_));
    weighted_slopes.noalias() = wt.transpose() * pool.matrix->slopes;

    // Clamp corrections, accumulated as [slot * D + point][eta].
    corrections.assign(slots * dim_ * grid, 0.0);
    for (std::size_t i = 0; i < pool.experts; ++i) {
      const double* wrow = wt.data() + i * grid;
      for (std::size_t e = pool.correction_offsets[i]; e < pool.correction_offsets[i + 1]; ++e) {
        double* dst = corrections.data() + pool.correction_index[e] * grid;
        const double c = pool.correction_value[e];
        for (std::size_t g = 0; g < grid; ++g) dst[g] += c * wrow[g];
      }
    }

    std::vector<double>& numer = out.numerators[k];
    numer.resize(grid * slots * dim_);
    for (std::size_t g = 0; g < grid; ++g) {
      for (std::size_t t = 0; t < slots; ++t) {
        for (std::size_t j = 0; j < dim_; ++j) {
          numer[(g * slots + t) * dim_ + j] = sums[g] * mean_field_[j] +
                                              weighted_slopes(Eigen::Index(g), Eigen::Index(j)) * offsets_[t] +
                                              corrections[(t * dim_ + j) * grid + g];
        }
      }
    }
  }
}

VisualField PrefixScorer::intermediate(const Level1& l1, std::size_t pool, std::size_t eta_index,
                                       std::size_t slot) const {
  const std::size_t slots = rounds_ + 1;
  const double* src = l1.numerators[pool].data() + (eta_index * slots + slot) * dim_;
  const double sum = l1.weight_sums[pool][eta_index];
  std::vector<double> out(dim_);
  for (std::size_t j = 0; j < dim_; ++j) out[j] = src[j] / sum;
  return VisualField::clamped(std::move(out));
}

VisualField PrefixScorer::flat(const Level1& l1, std::size_t eta_index) const {
  const double eta = l1.etas[eta_index];
  const std::size_t slots = rounds_ + 1;
  double global_min = std::numeric_limits<double>::infinity();
  for (const auto& p : pools_) global_min = std::min(global_min, p.min_cumulative);

  std::vector<double> numer(dim_, 0.0);
  double denom = 0.0;
  for (std::size_t k = 0; k < pools_.size(); ++k) {
    const double factor = std::exp(-eta * (pools_[k].min_cumulative - global_min));
    if (factor == 0.0) continue;
    const double* src = l1.numerators[k].data() + (eta_index * slots + rounds_) * dim_;
    for (std::size_t j = 0; j < dim_; ++j) numer[j] += factor * src[j];
    denom += factor * l1.weight_sums[k][eta_index];
  }
  for (double& v : numer) v /= denom;
  return VisualField::clamped(std::move(numer));
}

VisualField PrefixScorer::hierarchical(const Level1& l1,
                                       std::span<const std::size_t> eta_index_per_pool,
                                       double top_eta) const {
  if (eta_index_per_pool.size() != pools_.size()) {
    throw std::invalid_argument("PrefixScorer::hierarchical: one eta index per pool required");
  }
  const std::size_t slots = rounds_ + 1;
  const double scale = 30.0 * std::sqrt(static_cast<double>(dim_));
  LossMatrix losses(rounds_, std::vector<double>(pools_.size()));
  std::vector<VisualField> finals;
  for (std::size_t k = 0; k < pools_.size(); ++k) {
    const std::size_t g = eta_index_per_pool[k];
    const double sum = l1.weight_sums[k][g];
    for (std::size_t t = 0; t < rounds_; ++t) {
      const double* src = l1.numerators[k].data() + (g * slots + t) * dim_;
      const auto y = observed_[t].values();
      double sq = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) {
        const double diff = std::clamp(src[j] / sum, kTdFloor, kTdCeiling) - y[j];
        sq += diff * diff;
      }
      losses[t][k] = std::sqrt(sq) / scale;
    }
    finals.push_back(intermediate(l1, k, g, rounds_));
  }
  const WeightState top = compute_weights(losses, pools_.size(), top_eta, rule_);
  return aggregate_prediction(top.weights, finals);
}

VisualField PrefixScorer::expert_target_prediction(const PoolState& pool, std::size_t expert) const {
  const double* slope = pool.matrix->slopes.data() + expert * dim_;
  std::vector<double> out(dim_);
  for (std::size_t j = 0; j < dim_; ++j) out[j] = mean_field_[j] + slope[j] * offsets_[rounds_];
  return VisualField::clamped(std::move(out));
}

VisualField PrefixScorer::best_expert(std::size_t pool) const {
  const auto& p = pools_[pool];
  const auto it = std::min_element(p.cumulative.begin(), p.cumulative.end());
  return expert_target_prediction(p, static_cast<std::size_t>(it - p.cumulative.begin()));
}

VisualField PrefixScorer::best_expert_overall() const {
  std::size_t best_pool = 0;
  for (std::size_t k = 1; k < pools_.size(); ++k) {
    if (pools_[k].min_cumulative < pools_[best_pool].min_cumulative) best_pool = k;
  }
  return best_expert(best_pool);
}

}  // namespace vfagg
