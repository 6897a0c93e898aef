#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vfagg/clustering.hpp"
#include "vfagg/core.hpp"

namespace vfagg {

/// Experts from one generating method. Slopes are fixed at training time;
/// intercepts stay empty until fit_pool_to_target.
struct ExpertPool {
  Method method = Method::PatientWiseLR;
  std::vector<Expert> experts;

  std::size_t size() const noexcept { return experts.size(); }
  bool empty() const noexcept { return experts.empty(); }
};

/// Raised when a training cohort yields no expert for a method (for example
/// no spatial cluster survives the minimum-size rule).
class InsufficientDataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// One expert per training patient; slope is the patient's own OLS slope.
ExpertPool build_lr_experts(std::span<const PatientSeries> training);

/// One expert per retained cluster. The slope per point is the pooled
/// within-patient regression slope: every patient keeps its own intercept
/// (equivalently its own time shift) while the cluster shares the rate.
/// Clusters whose pooled date variance is zero are skipped with a warning.
ExpertPool build_tslr_experts(std::span<const PatientSeries> training,
                              const SpatialClustering& spatial,
                              std::vector<std::string>* warnings = nullptr);

/// One expert per patient of a retained cluster, with each point's slope
/// replaced by the representative rate of its slope cluster.
ExpertPool build_sc_experts(std::span<const PatientSeries> training,
                            const SpatialClustering& spatial, std::size_t c, std::uint64_t seed);

/// Copy of the pool with every intercept fit to the target's observations.
ExpertPool fit_pool_to_target(ExpertPool pool, std::span<const Observation> target_prefix);

}  // namespace vfagg
