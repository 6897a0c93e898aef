#pragma once

// Hand-rolled generators and brute-force oracles shared by the unit and
// acceptance tests. The oracles work from the formulas with long double
// arithmetic and do not call into the library's numerical code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vfagg/core.hpp"
#include "vfagg/experts.hpp"

namespace testing {

class Gen {
public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  std::size_t integer(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
  }
  double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }
  bool coin() { return integer(0, 1) == 1; }

  std::vector<double> field_values(std::size_t dim) {
    std::vector<double> v(dim);
    for (double& x : v) x = uniform(-30.0, 0.0);
    return v;
  }
  vfagg::VisualField field(std::size_t dim) { return vfagg::VisualField(field_values(dim)); }

  std::vector<double> slope(std::size_t dim, double scale = 3.0) {
    std::vector<double> v(dim);
    for (double& x : v) x = uniform(-scale, scale * 0.2);
    return v;
  }

  /// Random increasing dates starting at 0 and random fields.
  vfagg::PatientSeries series(const std::string& id, std::size_t dim, std::size_t length) {
    std::vector<vfagg::Observation> obs;
    double date = 0.0;
    for (std::size_t t = 0; t < length; ++t) {
      if (t > 0) date += uniform(0.1, 1.0);
      obs.push_back({date, field(dim)});
    }
    return vfagg::PatientSeries(id, std::move(obs));
  }

  /// Pool of experts with random slopes, intercepts unset.
  vfagg::ExpertPool pool(vfagg::Method method, std::size_t dim, std::size_t size, double scale = 3.0) {
    vfagg::ExpertPool p;
    p.method = method;
    for (std::size_t i = 0; i < size; ++i) {
      vfagg::Expert e;
      e.slope = slope(dim, scale);
      e.source = method;
      e.origin_id = "e" + std::to_string(i);
      p.experts.push_back(std::move(e));
    }
    return p;
  }

  std::mt19937_64& engine() { return engine_; }

private:
  std::mt19937_64 engine_;
};

using Real = long double;
using Field = std::vector<Real>;

inline Field to_field(const vfagg::VisualField& f) {
  Field out;
  for (double v : f.values()) out.push_back(v);
  return out;
}

inline Real oracle_loss(const Field& x, const Field& y) {
  Real s = 0;
  for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - y[j]) * (x[j] - y[j]);
  return std::sqrt(s) / (30.0L * std::sqrt(static_cast<Real>(x.size())));
}

inline Real oracle_rmse(const Field& x, const Field& y) {
  Real s = 0;
  for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - y[j]) * (x[j] - y[j]);
  return std::sqrt(s / static_cast<Real>(x.size()));
}

/// Expert as plain slope and target-fitted intercept.
struct LineExpert {
  Field slope;
  Field intercept;

  Field at(Real date) const {
    Field out(slope.size());
    for (std::size_t j = 0; j < slope.size(); ++j) {
      out[j] = std::clamp(slope[j] * date + intercept[j], -30.0L, 0.0L);
    }
    return out;
  }
};

inline LineExpert oracle_fit(const std::vector<double>& slope, const std::vector<vfagg::Observation>& prefix) {
  LineExpert e;
  e.slope.assign(slope.begin(), slope.end());
  e.intercept.assign(slope.size(), 0.0L);
  for (const auto& obs : prefix) {
    for (std::size_t j = 0; j < slope.size(); ++j) e.intercept[j] += obs.field[j] - e.slope[j] * obs.date;
  }
  for (Real& v : e.intercept) v /= static_cast<Real>(prefix.size());
  return e;
}

/// Weighted average with weights exp(-eta * cumulative loss), no shift.
inline Field oracle_average(const std::vector<Field>& predictions, const std::vector<Real>& cumulative, Real eta) {
  Real total = 0;
  Field out(predictions.front().size(), 0.0L);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const Real w = std::exp(-eta * cumulative[i]);
    total += w;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * predictions[i][j];
  }
  for (Real& v : out) v /= total;
  return out;
}

/// Aggregate of a set of predictors, each given by its predictions at every
/// prefix date followed by the target date.
inline std::vector<Field> oracle_layer(const std::vector<std::vector<Field>>& tracks,
                                       const std::vector<vfagg::Observation>& prefix, Real eta) {
  const std::size_t slots = prefix.size() + 1;
  std::vector<Real> cumulative(tracks.size(), 0.0L);
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    for (std::size_t t = 0; t < prefix.size(); ++t) cumulative[i] += oracle_loss(tracks[i][t], to_field(prefix[t].field));
  }
  std::vector<Field> out;
  for (std::size_t s = 0; s < slots; ++s) {
    std::vector<Field> at_slot;
    for (const auto& track : tracks) at_slot.push_back(track[s]);
    out.push_back(oracle_average(at_slot, cumulative, eta));
  }
  return out;
}

inline std::vector<Field> oracle_track(const LineExpert& e, const std::vector<vfagg::Observation>& prefix,
                                       double target_date) {
  std::vector<Field> track;
  for (const auto& obs : prefix) track.push_back(e.at(obs.date));
  track.push_back(e.at(target_date));
  return track;
}

inline Field oracle_flat(const std::vector<vfagg::ExpertPool>& pools, const std::vector<vfagg::Observation>& prefix,
                         Real eta, double target_date) {
  std::vector<std::vector<Field>> tracks;
  for (const auto& pool : pools) {
    for (const auto& e : pool.experts) tracks.push_back(oracle_track(oracle_fit(e.slope, prefix), prefix, target_date));
  }
  return oracle_layer(tracks, prefix, eta).back();
}

inline Field oracle_hierarchical(const std::vector<vfagg::ExpertPool>& pools,
                                 const std::vector<vfagg::Observation>& prefix, const std::vector<Real>& eta_pool,
                                 Real eta_top, double target_date) {
  std::vector<std::vector<Field>> intermediates;
  for (std::size_t k = 0; k < pools.size(); ++k) {
    std::vector<std::vector<Field>> tracks;
    for (const auto& e : pools[k].experts) tracks.push_back(oracle_track(oracle_fit(e.slope, prefix), prefix, target_date));
    intermediates.push_back(oracle_layer(tracks, prefix, eta_pool[k]));
  }
  return oracle_layer(intermediates, prefix, eta_top).back();
}

inline Real max_abs_diff(const Field& a, const vfagg::VisualField& b) {
  Real m = 0;
  for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::fabs(a[j] - static_cast<Real>(b[j])));
  return m;
}

inline double relative_error(double got, double want) {
  if (want == 0.0) return std::fabs(got);
  return std::fabs(got - want) / std::fabs(want);
}

}  // namespace testing
