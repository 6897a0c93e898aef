#include "vfagg/experts.hpp"

#include "vfagg/rng.hpp"

namespace vfagg {

namespace {

void require_same_cohort(std::span<const PatientSeries> training, const SpatialClustering& spatial) {
  if (spatial.assignment.size() != training.size()) {
    throw std::invalid_argument("spatial clustering was computed over a different cohort");
  }
  for (std::size_t i = 0; i < training.size(); ++i) {
    if (spatial.patient_ids[i] != training[i].id()) {
      throw std::invalid_argument("spatial clustering was computed over a different cohort");
    }
  }
}

}  // namespace

ExpertPool build_lr_experts(std::span<const PatientSeries> training) {
  ExpertPool pool{Method::PatientWiseLR, {}};
  pool.experts.reserve(training.size());
  for (const auto& patient : training) {
    pool.experts.push_back(Expert{ols_slope(patient.observations()), {}, Method::PatientWiseLR,
                                  patient.id()});
  }
  return pool;
}

ExpertPool build_tslr_experts(std::span<const PatientSeries> training,
                              const SpatialClustering& spatial, std::vector<std::string>* warnings) {
  require_same_cohort(training, spatial);
  ExpertPool pool{Method::TSLR, {}};
  for (std::size_t cluster : spatial.retained_clusters()) {
    const auto members = spatial.members(cluster);
    const std::size_t dim = training[members.front()].dimension();
    std::vector<double> sxy(dim, 0.0);
    double sxx = 0.0;
    for (std::size_t m : members) {
      const auto obs = training[m].observations();
      double mean_date = 0.0;
      std::vector<double> mean_y(dim, 0.0);
      for (const auto& o : obs) {
        mean_date += o.date;
        for (std::size_t j = 0; j < dim; ++j) mean_y[j] += o.field[j];
      }
      const double count = static_cast<double>(obs.size());
      mean_date /= count;
      for (double& v : mean_y) v /= count;
      for (const auto& o : obs) {
        const double dx = o.date - mean_date;
        sxx += dx * dx;
        for (std::size_t j = 0; j < dim; ++j) sxy[j] += dx * (o.field[j] - mean_y[j]);
      }
    }
    if (!(sxx > 0.0)) {
      if (warnings) {
        warnings->push_back("tslr: cluster " + std::to_string(cluster) +
                            " has zero pooled date variance; skipped");
      }
      continue;
    }
    for (double& v : sxy) v /= sxx;
    pool.experts.push_back(Expert{std::move(sxy), {}, Method::TSLR, "cluster-" + std::to_string(cluster)});
  }
  if (pool.empty()) throw InsufficientDataError("tslr: no retained cluster yields an expert");
  return pool;
}

ExpertPool build_sc_experts(std::span<const PatientSeries> training,
                            const SpatialClustering& spatial, std::size_t c, std::uint64_t seed) {
  require_same_cohort(training, spatial);
  if (c == 0) throw std::invalid_argument("build_sc_experts: C must be positive");
  ExpertPool pool{Method::SlopeClustering, {}};
  for (std::size_t cluster : spatial.retained_clusters()) {
    const auto members = spatial.members(cluster);
    std::vector<std::vector<double>> slopes;
    slopes.reserve(members.size());
    for (std::size_t m : members) slopes.push_back(ols_slope(training[m].observations()));

    const SlopeSet rates = cluster_slopes(slopes, c, derive_seed(seed, {cluster}));
    for (std::size_t k = 0; k < members.size(); ++k) {
      std::vector<double> quantized(slopes[k].size());
      for (std::size_t j = 0; j < quantized.size(); ++j) {
        quantized[j] = rates.rates[rates.assignment[k][j]];
      }
      pool.experts.push_back(
          Expert{std::move(quantized), {}, Method::SlopeClustering, training[members[k]].id()});
    }
  }
  if (pool.empty()) throw InsufficientDataError("sc: no retained cluster");
  return pool;
}

ExpertPool fit_pool_to_target(ExpertPool pool, std::span<const Observation> target_prefix) {
  if (target_prefix.empty()) throw std::invalid_argument("fit_pool_to_target: empty prefix");
  for (auto& expert : pool.experts) expert.intercept = fit_intercept(expert.slope, target_prefix);
  return pool;
}

}  // namespace vfagg
