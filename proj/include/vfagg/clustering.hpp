#pragma once

// Spatial clustering of patients by normalized progression pattern, and
// within-cluster quantization of per-point slopes into at most C rates.
//
// The spatial step is k-means over unit-length per-point OLS slope vectors.
// It stands in for an EM over spatial centers and temporal features; the
// expert pools downstream only need a partition of the training cohort.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vfagg/core.hpp"

namespace vfagg {

/// Row-major set of equal-length points.
class PointSet {
public:
  explicit PointSet(std::size_t dim) : dim_(dim) {}

  void add(std::span<const double> point);
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> operator[](std::size_t i) const {
    return std::span<const double>(data_).subspan(i * dim_, dim_);
  }

private:
  std::size_t dim_;
  std::vector<double> data_;
};

struct KMeansOptions {
  std::size_t restarts = 10;
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // relative objective change
};

struct KMeansResult {
  std::vector<std::vector<double>> centers;  // at most k; fewer when the data has fewer distinct points
  std::vector<std::size_t> assignment;
  double objective = 0.0;
  /// Objective after every assignment step of the winning restart.
  std::vector<double> objective_trace;
};

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` runs.
/// Ties in assignment go to the lowest center index. An emptied center is
/// moved to the point farthest from its current center.
KMeansResult kmeans(const PointSet& points, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options = {});

struct SpatialClustering {
  std::vector<std::string> patient_ids;       // cohort order
  std::vector<std::size_t> assignment;        // cohort index -> cluster
  std::vector<std::vector<double>> centers;   // normalized slope patterns
  std::vector<std::size_t> sizes;
  std::vector<bool> retained;                 // size >= min_size
  std::size_t min_size = 3;

  std::size_t cluster_count() const noexcept { return centers.size(); }
  std::vector<std::size_t> members(std::size_t cluster) const;
  std::vector<std::size_t> retained_clusters() const;
};

struct SlopeSet {
  std::vector<double> rates;                          // ascending, at most C
  std::vector<std::vector<std::size_t>> assignment;   // [member][point] -> rate index
};

/// Progression-pattern vector: per-point OLS slope of TD against date.
std::vector<double> patient_feature(const PatientSeries& series);

SpatialClustering cluster_spatial(std::span<const PatientSeries> cohort, std::size_t k,
                                  std::size_t min_size, std::uint64_t seed);

SlopeSet cluster_slopes(std::span<const PatientSeries> members, std::size_t c, std::uint64_t seed);

/// Same as above but from precomputed per-member slope vectors.
SlopeSet cluster_slopes(std::span<const std::vector<double>> member_slopes, std::size_t c,
                        std::uint64_t seed);

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

}  // namespace vfagg
