#pragma once

// Experimental harness: per-patient RMSE records, the Improvement Rate over
// the patient-wise LR baseline, learning-rate tuning by inner
// cross-validation over an eta*sqrt(n) grid, the outer cross-validated
// experiment, and the one-sided binomial sign test.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vfagg/aggregation.hpp"
#include "vfagg/clustering.hpp"
#include "vfagg/core.hpp"
#include "vfagg/experts.hpp"
#include "vfagg/scoring.hpp"

namespace vfagg {

enum class Strategy { LR, SC, TSLR, Flat, Hierarchical };

inline constexpr std::array<Strategy, 5> kAllStrategies = {
    Strategy::LR, Strategy::SC, Strategy::TSLR, Strategy::Flat, Strategy::Hierarchical};

std::string_view strategy_tag(Strategy s);
Strategy parse_strategy(std::string_view tag);

/// Log-spaced multipliers g; the learning rate at n observations is g / sqrt(n).
struct EtaGrid {
  double min = 1e-2;
  double max = 1e4;
  std::size_t points = 61;

  std::vector<double> multipliers() const;
};

struct RunConfig {
  std::size_t D = kDefaultFieldSize;
  std::size_t K = 40;
  std::size_t C = 5;
  std::size_t min_cluster_size = 3;
  EtaGrid eta_grid;
  std::size_t folds = 10;
  std::size_t inner_folds = 10;
  std::size_t n_min = 2;
  std::size_t n_max = 10;
  std::uint64_t seed = 1;
  std::vector<Strategy> strategies{kAllStrategies.begin(), kAllStrategies.end()};
  bool eta_ir = true;
  bool eta_rg = true;
  std::optional<double> eta_fixed;
  UpdateRule update = UpdateRule::Batch;
  std::size_t threads = 0;  // 0: hardware concurrency

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Pools in the fixed order LR, SC, TSLR.
inline constexpr std::size_t kPoolLR = 0;
inline constexpr std::size_t kPoolSC = 1;
inline constexpr std::size_t kPoolTSLR = 2;

struct TrainedModel {
  SpatialClustering spatial;
  std::vector<ExpertPool> pools;
  std::vector<PoolMatrix> matrices;
};

/// Clusters the learning cohort and builds the three expert pools.
/// Throws InsufficientDataError when a pool would be empty.
TrainedModel train_model(std::span<const PatientSeries> learning, const RunConfig& config,
                         std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

struct EvaluationRecord {
  std::string patient_id;
  std::size_t n = 0;
  std::string method;
  double rmse_method = 0.0;
  double rmse_lr_baseline = 0.0;
  std::size_t series_length = 0;

  bool evaluated() const noexcept { return n < series_length; }
};

struct IrPoint {
  std::size_t n = 0;
  double ir = 0.0;
  std::size_t count = 0;     // N(n)
  double stdev = 0.0;        // sample standard deviation of a_i(n)
  std::size_t excluded = 0;  // RMSE_LR = 0 with RMSE_f > 0
};

/// Mean over patients of a_i(n) = 1 - RMSE_f / RMSE_LR when n < L_i, else 0.
/// Only records with the given n are used.
IrPoint improvement_rate(std::span<const EvaluationRecord> records, std::size_t n);

/// P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double binomial_test(std::size_t wins, std::size_t losses);
/// P(X >= k) and P(X <= k) for X ~ Binomial(m, 1/2), from exact integer sums.
double binomial_upper_tail(std::size_t k, std::size_t m);
double binomial_lower_tail(std::size_t k, std::size_t m);

/// Index of the expert with the largest batch weight over the prefix, i.e. the
/// smallest cumulative loss; ties go to the lowest index.
std::size_t best_expert_index(std::span<const Expert> fitted, std::span<const Observation> prefix);

double best_expert_rmse(std::span<const Expert> fitted, std::span<const Observation> prefix,
                        const Observation& target);

/// Prediction of the target's final-date field from its own OLS line over the prefix.
VisualField lr_baseline_prediction(std::span<const Observation> prefix, double target_date);

/// Patient index -> fold in [0, folds), from a seeded shuffle; fold sizes differ by at most one.
std::vector<std::size_t> fold_assignment(std::size_t patients, std::size_t folds, std::uint64_t seed);

struct EtaTuning {
  Strategy strategy = Strategy::Flat;
  std::vector<std::size_t> n_values;
  std::vector<double> eta;                   // IR-optimal per n
  std::vector<std::vector<double>> ir_curve; // [n][grid point]
};

/// IR-optimal learning rate per n for one strategy. Ties go to the smaller eta.
EtaTuning tune_eta_ir(std::span<const PatientSeries> learning, Strategy strategy,
                      std::span<const double> grid, std::size_t folds, std::uint64_t seed,
                      const RunConfig& config, std::vector<std::string>* warnings = nullptr);

/// Same, for every strategy at once (the inner folds are shared).
std::map<Strategy, EtaTuning> tune_all(std::span<const PatientSeries> learning,
                                       const RunConfig& config, std::uint64_t seed,
                                       std::vector<std::string>* warnings = nullptr);

struct Comparison {
  std::string method;
  std::string reference;
  std::size_t n = 0;
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
  std::optional<double> p_value;
};

struct FoldSummary {
  std::size_t fold = 0;
  std::size_t learning = 0;
  std::size_t test = 0;
  bool skipped = false;
  std::array<std::size_t, 3> pool_sizes{};
  std::map<std::string, std::vector<double>> eta_ir;  // strategy tag -> eta per n
};

struct ExperimentReport {
  std::vector<std::size_t> n_values;
  std::vector<std::string> table_rows;             // row keys for the IR table
  std::map<std::string, std::vector<IrPoint>> ir;  // row key -> per n
  std::vector<EvaluationRecord> records;           // method = row key
  std::vector<Comparison> comparisons;
  std::vector<FoldSummary> folds;
  std::vector<double> grid;                                             // eta*sqrt(n) multipliers
  std::map<std::string, std::vector<std::vector<double>>> eta_curves;   // fold-averaged [n][grid]
  std::vector<std::string> warnings;

  double mean_rmse(const std::string& row, std::size_t n) const;
};

/// Row keys: "baseline", "<strategy>/<ir|rg|fixed>", "<lr|sc|tslr>/best",
/// "flat/best" (best expert over all pools).
ExperimentReport run_experiment(std::span<const PatientSeries> cohort, const RunConfig& config);

}  // namespace vfagg
