#include "vfagg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "vfagg/rng.hpp"

namespace vfagg {

namespace {

std::vector<double> random_pattern(std::size_t dim, Rng& rng) {
  std::vector<std::size_t> order(dim);
  for (std::size_t j = 0; j < dim; ++j) order[j] = j;
  for (std::size_t i = dim; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const std::size_t region = std::max<std::size_t>(1, dim / 4);

  std::vector<double> pattern(dim);
  for (std::size_t j = 0; j < dim; ++j) pattern[j] = rng.uniform(0.05, 0.15);
  for (std::size_t r = 0; r < region; ++r) pattern[order[r]] = rng.uniform(0.6, 1.0);
  const double peak = *std::max_element(pattern.begin(), pattern.end());
  for (double& v : pattern) v /= peak;
  return pattern;
}

std::string patient_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%05zu", index);
  return buf;
}

}  // namespace

void CohortConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("config field '" + field + "': " + why);
  };
  if (patients == 0) fail("patients", "must be positive");
  if (D == 0) fail("D", "must be positive");
  if (K_true == 0) fail("K_true", "must be at least 1");
  if (C_true == 0) fail("C_true", "must be at least 1");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) fail("noise_sd", "must be finite and >= 0");
  if (series_length.min < 2) fail("series_length_min", "must be at least 2");
  if (series_length.max < series_length.min) fail("series_length_max", "must be >= series_length_min");
  if (!(date_gap.min > 0.0)) fail("date_gap_min", "must be positive");
  if (!(date_gap.max >= date_gap.min)) fail("date_gap_max", "must be >= date_gap_min");
  if (!(intercept.min >= kTdFloor)) fail("intercept_min", "must be >= -30");
  if (!(intercept.max <= kTdCeiling)) fail("intercept_max", "must be <= 0");
  if (!(intercept.max >= intercept.min)) fail("intercept_max", "must be >= intercept_min");
  if (!(rate.min >= 0.0)) fail("rate_min", "must be >= 0");
  if (!(rate.max >= rate.min) || !std::isfinite(rate.max)) fail("rate_max", "must be finite and >= rate_min");
}

CohortConfig CohortConfig::skewed() {
  CohortConfig config;
  config.skew = true;
  return config;
}

Cohort generate_cohort(const CohortConfig& config) {
  config.validate();
  Cohort cohort;

  Rng shared(derive_seed(config.seed, {0}));
  for (std::size_t k = 0; k < config.K_true; ++k) cohort.patterns.push_back(random_pattern(config.D, shared));
  for (std::size_t c = 0; c < config.C_true; ++c) {
    const double frac = config.C_true == 1 ? 0.5
                                           : static_cast<double>(c) / static_cast<double>(config.C_true - 1);
    cohort.rates.push_back(config.rate.min + (config.rate.max - config.rate.min) * frac);
  }

  for (std::size_t p = 0; p < config.patients; ++p) {
    Rng rng(derive_seed(config.seed, {1, p}));
    GroundTruth truth;
    truth.cluster = rng.index(config.K_true);
    truth.rate_index = config.skew ? truth.cluster % config.C_true : rng.index(config.C_true);
    truth.rate = cohort.rates[truth.rate_index];
    const auto& pattern = cohort.patterns[truth.cluster];
    truth.slope.resize(config.D);
    truth.baseline.resize(config.D);
    for (std::size_t j = 0; j < config.D; ++j) {
      truth.slope[j] = -truth.rate * pattern[j];
      truth.baseline[j] = rng.uniform(config.intercept.min, config.intercept.max);
    }

    const std::size_t length = rng.integer(config.series_length.min, config.series_length.max);
    std::vector<Observation> observations;
    observations.reserve(length);
    double date = 0.0;
    for (std::size_t t = 0; t < length; ++t) {
      if (t > 0) date += rng.uniform(config.date_gap.min, config.date_gap.max);
      std::vector<double> values(config.D);
      for (std::size_t j = 0; j < config.D; ++j) {
        values[j] = truth.baseline[j] + truth.slope[j] * date;
        if (config.noise_sd > 0.0) values[j] += config.noise_sd * rng.normal();
      }
      observations.push_back({date, VisualField::clamped(std::move(values))});
    }
    cohort.patients.emplace_back(patient_id(p), std::move(observations));
    cohort.truth.push_back(std::move(truth));
  }
  return cohort;
}

}  // namespace vfagg
