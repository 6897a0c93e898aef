#pragma once

// Seeded generator of glaucoma-like cohorts: planted spatial patterns,
// discrete progression rates, linear decline with Gaussian noise.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vfagg/core.hpp"

namespace vfagg {

struct Range {
  double min = 0.0;
  double max = 0.0;
};

struct CountRange {
  std::size_t min = 0;
  std::size_t max = 0;
};

struct CohortConfig {
  std::size_t patients = 1000;
  std::size_t D = kDefaultFieldSize;
  std::size_t K_true = 8;
  std::size_t C_true = 3;
  double noise_sd = 2.0;                 // dB
  CountRange series_length{5, 15};
  Range date_gap{0.2, 0.8};              // years
  Range intercept{-12.0, -1.0};          // dB, per point baseline
  Range rate{0.25, 1.5};                 // dB/year at the pattern's peak
  bool skew = false;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Defaults with `skew` set; see generate_cohort.
  static CohortConfig skewed();
};

struct GroundTruth {
  std::size_t cluster = 0;       // planted spatial pattern
  std::size_t rate_index = 0;
  double rate = 0.0;
  std::vector<double> slope;     // dB/year per point
  std::vector<double> baseline;  // dB per point at date 0
};

struct Cohort {
  std::vector<PatientSeries> patients;
  std::vector<GroundTruth> truth;
  std::vector<std::vector<double>> patterns;  // K_true peak-normalized patterns
  std::vector<double> rates;                  // C_true planted rates
};

/// Each patient draws a spatial pattern, a rate and a baseline field. Values
/// follow baseline - rate * pattern * date plus i.i.d. noise, clamped to
/// [-30, 0]; the first visit is at date 0.
///
/// With `skew`, the progression rate is tied to the pattern (pattern k uses
/// rate k mod C_true), so every spatial cluster shares one rate exactly and
/// cluster-level regression beats any individual fit.
Cohort generate_cohort(const CohortConfig& config);

}  // namespace vfagg
