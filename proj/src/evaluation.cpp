#include "vfagg/evaluation.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "parallel.hpp"
#include "vfagg/rng.hpp"

namespace vfagg {

namespace {

constexpr double kTieTolerance = 1e-12;

std::size_t strategy_index(Strategy s) { return static_cast<std::size_t>(s); }

std::size_t pool_of(Strategy s) {
  switch (s) {
    case Strategy::LR: return kPoolLR;
    case Strategy::SC: return kPoolSC;
    case Strategy::TSLR: return kPoolTSLR;
    default: break;
  }
  throw std::logic_error("pool_of: not a single-method strategy");
}

bool is_single(Strategy s) {
  return s == Strategy::LR || s == Strategy::SC || s == Strategy::TSLR;
}

/// a_i(n) for an evaluated patient; nullopt when undefined (RMSE_LR = 0 < RMSE_f).
std::optional<double> improvement(double rmse_method, double rmse_lr) {
  if (rmse_lr == 0.0) {
    if (rmse_method == 0.0) return 0.0;
    return std::nullopt;
  }
  return 1.0 - rmse_method / rmse_lr;
}

// Held-out IR accumulators over strategies x n x grid.
struct GridScores {
  std::size_t strategies = kAllStrategies.size();
  std::size_t n_count = 0;
  std::size_t grid = 0;
  std::vector<double> sum;
  std::vector<std::size_t> count;
  bool valid = false;

  GridScores(std::size_t n_count_, std::size_t grid_)
      : n_count(n_count_), grid(grid_),
        sum(strategies * n_count_ * grid_, 0.0), count(strategies * n_count_ * grid_, 0) {}

  std::size_t at(std::size_t s, std::size_t n, std::size_t g) const {
    return (s * n_count + n) * grid + g;
  }
  void merge(const GridScores& other) {
    for (std::size_t i = 0; i < sum.size(); ++i) {
      sum[i] += other.sum[i];
      count[i] += other.count[i];
    }
  }
};

std::vector<PatientSeries> select(std::span<const PatientSeries> cohort,
                                  const std::vector<std::size_t>& folds, std::size_t fold,
                                  bool inside) {
  std::vector<PatientSeries> out;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if ((folds[i] == fold) == inside) out.push_back(cohort[i]);
  }
  return out;
}

void score_heldout(const TrainedModel& model, const PatientSeries& patient,
                   const RunConfig& config, std::span<const double> grid,
                   std::span<const Strategy> strategies, GridScores& scores) {
  const std::size_t pools = model.matrices.size();
  for (std::size_t n = config.n_min; n <= config.n_max; ++n) {
    const std::size_t ni = n - config.n_min;
    if (n >= patient.length()) {
      for (Strategy s : strategies) {
        for (std::size_t g = 0; g < grid.size(); ++g) ++scores.count[scores.at(strategy_index(s), ni, g)];
      }
      continue;
    }
    const auto prefix = patient.prefix(n);
    const Observation& target = patient.back();
    const double rmse_lr = rmse(lr_baseline_prediction(prefix, target.date), target.field);

    std::vector<double> etas(grid.size());
    const double root_n = std::sqrt(static_cast<double>(n));
    for (std::size_t g = 0; g < grid.size(); ++g) etas[g] = grid[g] / root_n;

    const PrefixScorer scorer(model.matrices, prefix, target.date, config.update);
    thread_local Level1 l1;
    scorer.level1(etas, l1);

    for (Strategy s : strategies) {
      for (std::size_t g = 0; g < grid.size(); ++g) {
        VisualField pred;
        if (is_single(s)) {
          pred = scorer.single(l1, pool_of(s), g);
        } else if (s == Strategy::Flat) {
          pred = scorer.flat(l1, g);
        } else {
          const std::vector<std::size_t> idx(pools, g);
          pred = scorer.hierarchical(l1, idx, etas[g]);
        }
        const auto a = improvement(rmse(pred, target.field), rmse_lr);
        if (!a) continue;
        const std::size_t at = scores.at(strategy_index(s), ni, g);
        scores.sum[at] += *a;
        ++scores.count[at];
      }
    }
  }
}

GridScores score_inner_fold(std::span<const PatientSeries> learning,
                            const std::vector<std::size_t>& folds, std::size_t fold,
                            const RunConfig& config, std::span<const double> grid,
                            std::span<const Strategy> strategies, std::uint64_t seed,
                            std::vector<std::string>& warnings) {
  GridScores scores(config.n_max - config.n_min + 1, grid.size());
  const auto train = select(learning, folds, fold, false);
  const auto held = select(learning, folds, fold, true);
  try {
    const TrainedModel model = train_model(train, config, derive_seed(seed, {fold}), &warnings);
    for (const auto& patient : held) score_heldout(model, patient, config, grid, strategies, scores);
    scores.valid = true;
  } catch (const InsufficientDataError& e) {
    warnings.push_back("inner fold " + std::to_string(fold) + " skipped: " + e.what());
  }
  return scores;
}

std::map<Strategy, EtaTuning> finalize_tuning(const GridScores& scores, const RunConfig& config,
                                              std::span<const double> grid,
                                              std::span<const Strategy> strategies) {
  std::map<Strategy, EtaTuning> out;
  for (Strategy s : strategies) {
    EtaTuning tuning;
    tuning.strategy = s;
    for (std::size_t n = config.n_min; n <= config.n_max; ++n) {
      const std::size_t ni = n - config.n_min;
      std::vector<double> curve(grid.size(), 0.0);
      std::size_t best = 0;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const std::size_t at = scores.at(strategy_index(s), ni, g);
        curve[g] = scores.count[at] == 0 ? 0.0 : scores.sum[at] / static_cast<double>(scores.count[at]);
        if (curve[g] > curve[best]) best = g;
      }
      tuning.n_values.push_back(n);
      tuning.eta.push_back(grid[best] / std::sqrt(static_cast<double>(n)));
      tuning.ir_curve.push_back(std::move(curve));
    }
    out.emplace(s, std::move(tuning));
  }
  return out;
}

std::map<Strategy, EtaTuning> tune_strategies(std::span<const PatientSeries> learning,
                                              std::span<const Strategy> strategies,
                                              std::span<const double> grid, std::size_t folds,
                                              std::uint64_t seed, const RunConfig& config,
                                              std::vector<std::string>* warnings) {
  if (grid.empty()) throw std::invalid_argument("tune_eta_ir: empty grid");
  if (folds < 2 || learning.size() < folds) {
    throw std::invalid_argument("tune_eta_ir: " + std::to_string(learning.size()) +
                                " patients cannot form " + std::to_string(folds) + " folds");
  }
  const auto assignment = fold_assignment(learning.size(), folds, derive_seed(seed, {0}));
  std::vector<GridScores> parts(folds, GridScores(config.n_max - config.n_min + 1, grid.size()));
  std::vector<std::vector<std::string>> notes(folds);
  detail::parallel_for(folds, config.threads, [&](std::size_t f) {
    parts[f] = score_inner_fold(learning, assignment, f, config, grid, strategies,
                                derive_seed(seed, {1}), notes[f]);
  });
  GridScores total(config.n_max - config.n_min + 1, grid.size());
  for (std::size_t f = 0; f < folds; ++f) {
    if (parts[f].valid) {
      total.merge(parts[f]);
      total.valid = true;
    }
    if (warnings) warnings->insert(warnings->end(), notes[f].begin(), notes[f].end());
  }
  if (!total.valid) throw InsufficientDataError("tune_eta_ir: every inner fold was skipped");
  return finalize_tuning(total, config, grid, strategies);
}

std::string row_key(Strategy s, std::string_view eta_choice) {
  return std::string(strategy_tag(s)) + "/" + std::string(eta_choice);
}

}  // namespace

std::string_view strategy_tag(Strategy s) {
  switch (s) {
    case Strategy::LR: return "lr";
    case Strategy::SC: return "sc";
    case Strategy::TSLR: return "tslr";
    case Strategy::Flat: return "flat";
    case Strategy::Hierarchical: return "hier";
  }
  return "?";
}

Strategy parse_strategy(std::string_view tag) {
  for (Strategy s : kAllStrategies) {
    if (strategy_tag(s) == tag) return s;
  }
  throw std::invalid_argument("unknown strategy '" + std::string(tag) + "'");
}

std::vector<double> EtaGrid::multipliers() const {
  if (points == 0) throw std::invalid_argument("eta_grid_points: empty grid");
  if (!(min > 0.0) || !(max >= min)) throw std::invalid_argument("eta_grid_min/eta_grid_max: need 0 < min <= max");
  if (points == 1) return {min};
  std::vector<double> out(points);
  const double lo = std::log10(min);
  const double hi = std::log10(max);
  for (std::size_t i = 0; i < points; ++i) {
    out[i] = std::pow(10.0, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
  }
  return out;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("config field '" + field + "': " + why);
  };
  if (D == 0) fail("D", "must be positive");
  if (K == 0) fail("K", "must be positive");
  if (C == 0) fail("C", "must be positive");
  if (folds < 2) fail("folds", "must be at least 2");
  if (inner_folds < 2) fail("inner_folds", "must be at least 2");
  if (n_min < 1) fail("n_min", "must be at least 1");
  if (n_max < n_min) fail("n_max", "must be >= n_min");
  if (eta_grid.points == 0) fail("eta_grid_points", "must be positive");
  if (!(eta_grid.min > 0.0)) fail("eta_grid_min", "must be positive");
  if (!(eta_grid.max >= eta_grid.min)) fail("eta_grid_max", "must be >= eta_grid_min");
  if (strategies.empty()) fail("strategies", "select at least one strategy");
  if (!eta_ir && !eta_rg && !eta_fixed) fail("eta", "select at least one learning-rate choice");
  if (eta_fixed && !(*eta_fixed >= 0.0)) fail("eta", "fixed learning rate must be nonnegative");
}

TrainedModel train_model(std::span<const PatientSeries> learning, const RunConfig& config,
                         std::uint64_t seed, std::vector<std::string>* warnings) {
  if (learning.size() < config.K) {
    throw InsufficientDataError("learning cohort of " + std::to_string(learning.size()) +
                                " patients is smaller than K = " + std::to_string(config.K));
  }
  TrainedModel model;
  model.spatial = cluster_spatial(learning, config.K, config.min_cluster_size, derive_seed(seed, {1}));
  if (model.spatial.retained_clusters().empty()) {
    throw InsufficientDataError("no spatial cluster has at least " +
                                std::to_string(config.min_cluster_size) + " members");
  }
  model.pools.push_back(build_lr_experts(learning));
  model.pools.push_back(build_sc_experts(learning, model.spatial, config.C, derive_seed(seed, {2})));
  model.pools.push_back(build_tslr_experts(learning, model.spatial, warnings));
  for (const auto& pool : model.pools) model.matrices.push_back(PoolMatrix::from_pool(pool));
  return model;
}

IrPoint improvement_rate(std::span<const EvaluationRecord> records, std::size_t n) {
  IrPoint out;
  out.n = n;
  std::vector<double> values;
  for (const auto& r : records) {
    if (r.n != n) continue;
    if (!r.evaluated()) {
      values.push_back(0.0);
      continue;
    }
    const auto a = improvement(r.rmse_method, r.rmse_lr_baseline);
    if (a) {
      values.push_back(*a);
    } else {
      ++out.excluded;
    }
  }
  out.count = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.ir = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.ir) * (v - out.ir);
    out.stdev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

namespace {

double binomial_tail(std::size_t lo, std::size_t hi, std::size_t m) {
  using boost::multiprecision::cpp_int;
  using Float = boost::multiprecision::cpp_bin_float_100;
  cpp_int coefficient = 1;
  cpp_int total = 0;
  for (std::size_t i = 0; i <= m; ++i) {
    if (i >= lo && i <= hi) total += coefficient;
    coefficient = coefficient * (m - i) / (i + 1);
  }
  const Float ratio = boost::multiprecision::ldexp(Float(total), -static_cast<int>(m));
  return static_cast<double>(ratio);
}

}  // namespace

double binomial_upper_tail(std::size_t k, std::size_t m) {
  if (k > m) return 0.0;
  return binomial_tail(k, m, m);
}

double binomial_lower_tail(std::size_t k, std::size_t m) {
  return binomial_tail(0, std::min(k, m), m);
}

double binomial_test(std::size_t wins, std::size_t losses) {
  if (wins + losses == 0) throw std::invalid_argument("binomial_test: no untied comparisons");
  return binomial_upper_tail(wins, wins + losses);
}

std::size_t best_expert_index(std::span<const Expert> fitted, std::span<const Observation> prefix) {
  if (fitted.empty()) throw std::invalid_argument("best_expert_index: no experts");
  const LossMatrix losses = expert_loss_matrix(fitted, prefix);
  std::vector<double> cumulative(fitted.size(), 0.0);
  for (const auto& row : losses) {
    for (std::size_t i = 0; i < row.size(); ++i) cumulative[i] += row[i];
  }
  return static_cast<std::size_t>(std::min_element(cumulative.begin(), cumulative.end()) -
                                  cumulative.begin());
}

double best_expert_rmse(std::span<const Expert> fitted, std::span<const Observation> prefix,
                        const Observation& target) {
  const std::size_t best = best_expert_index(fitted, prefix);
  return rmse(predict_linear(fitted[best], target.date), target.field);
}

VisualField lr_baseline_prediction(std::span<const Observation> prefix, double target_date) {
  Expert own{ols_slope(prefix), {}, Method::PatientWiseLR, "baseline"};
  own.intercept = fit_intercept(own.slope, prefix);
  return predict_linear(own, target_date);
}

std::vector<std::size_t> fold_assignment(std::size_t patients, std::size_t folds, std::uint64_t seed) {
  if (folds == 0) throw std::invalid_argument("fold_assignment: folds must be positive");
  std::vector<std::size_t> order(patients);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = patients; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  std::vector<std::size_t> out(patients);
  for (std::size_t pos = 0; pos < patients; ++pos) out[order[pos]] = pos % folds;
  return out;
}

EtaTuning tune_eta_ir(std::span<const PatientSeries> learning, Strategy strategy,
                      std::span<const double> grid, std::size_t folds, std::uint64_t seed,
                      const RunConfig& config, std::vector<std::string>* warnings) {
  const std::array<Strategy, 1> only{strategy};
  auto all = tune_strategies(learning, only, grid, folds, seed, config, warnings);
  return std::move(all.at(strategy));
}

std::map<Strategy, EtaTuning> tune_all(std::span<const PatientSeries> learning,
                                       const RunConfig& config, std::uint64_t seed,
                                       std::vector<std::string>* warnings) {
  const auto grid = config.eta_grid.multipliers();
  return tune_strategies(learning, config.strategies, grid, config.inner_folds, seed, config,
                         warnings);
}

double ExperimentReport::mean_rmse(const std::string& row, std::size_t n) const {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : records) {
    if (r.method == row && r.n == n && r.evaluated()) {
      sum += r.rmse_method;
      ++count;
    }
  }
  return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(count);
}

namespace {

// One (patient, n) evaluation: RMSE of every table row.
struct PatientResult {
  std::size_t cohort_index = 0;
  std::size_t n = 0;
  bool evaluated = false;
  double rmse_lr = 0.0;
  std::vector<double> rmse;  // aligned with row keys
};

struct RowPlan {
  std::string key;
  enum class Kind { Single, Flat, Hier, Best, BestOverall } kind;
  Strategy strategy = Strategy::Flat;
  enum class Eta { Ir, Rg, Fixed, None } eta = Eta::None;
};

std::vector<RowPlan> plan_rows(const RunConfig& config) {
  std::vector<RowPlan> rows;
  for (Strategy s : config.strategies) {
    const RowPlan::Kind kind = is_single(s)                ? RowPlan::Kind::Single
                               : s == Strategy::Flat ? RowPlan::Kind::Flat
                                                     : RowPlan::Kind::Hier;
    if (config.eta_ir) rows.push_back({row_key(s, "ir"), kind, s, RowPlan::Eta::Ir});
    if (config.eta_rg) rows.push_back({row_key(s, "rg"), kind, s, RowPlan::Eta::Rg});
    if (config.eta_fixed) rows.push_back({row_key(s, "fixed"), kind, s, RowPlan::Eta::Fixed});
    if (is_single(s)) rows.push_back({row_key(s, "best"), RowPlan::Kind::Best, s, RowPlan::Eta::None});
    if (s == Strategy::Flat) {
      rows.push_back({row_key(s, "best"), RowPlan::Kind::BestOverall, s, RowPlan::Eta::None});
    }
  }
  return rows;
}

class EtaList {
public:
  std::size_t add(double eta) {
    for (std::size_t i = 0; i < etas_.size(); ++i) {
      if (etas_[i] == eta) return i;
    }
    etas_.push_back(eta);
    return etas_.size() - 1;
  }
  const std::vector<double>& etas() const { return etas_; }

private:
  std::vector<double> etas_;
};

PatientResult evaluate_test_patient(const TrainedModel& model,
                                    const std::map<Strategy, EtaTuning>& tuning,
                                    const PatientSeries& patient, std::size_t n,
                                    const RunConfig& config, const std::vector<RowPlan>& rows) {
  PatientResult result;
  result.n = n;
  result.rmse.assign(rows.size(), 0.0);
  if (n >= patient.length()) return result;
  result.evaluated = true;

  const auto prefix = patient.prefix(n);
  const Observation& target = patient.back();
  result.rmse_lr = rmse(lr_baseline_prediction(prefix, target.date), target.field);

  const PrefixScorer scorer(model.matrices, prefix, target.date, config.update);
  const std::size_t pools = scorer.pool_count();
  const std::size_t ni = n - config.n_min;

  // Learning rates needed by each row, as indices into one shared list.
  EtaList list;
  struct Need {
    std::vector<std::size_t> level1;
    double top = 0.0;
  };
  std::vector<Need> needs(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const RowPlan& row = rows[r];
    if (row.kind == RowPlan::Kind::Best || row.kind == RowPlan::Kind::BestOverall) continue;
    Need& need = needs[r];
    if (row.eta == RowPlan::Eta::Ir) {
      const double eta = tuning.at(row.strategy).eta[ni];
      need.level1.assign(pools, list.add(eta));
      need.top = eta;
    } else if (row.eta == RowPlan::Eta::Fixed) {
      need.level1.assign(pools, list.add(*config.eta_fixed));
      need.top = *config.eta_fixed;
    } else if (row.kind == RowPlan::Kind::Single) {
      const std::size_t k = pool_of(row.strategy);
      need.level1.assign(pools, list.add(rg_optimal_eta(scorer.expert_count(k), n)));
    } else if (row.kind == RowPlan::Kind::Flat) {
      need.level1.assign(pools, list.add(rg_optimal_eta(scorer.total_experts(), n)));
    } else {
      for (std::size_t k = 0; k < pools; ++k) {
        need.level1.push_back(list.add(rg_optimal_eta(scorer.expert_count(k), n)));
      }
      need.top = rg_optimal_eta(pools, n);
    }
  }

  const Level1 l1 = scorer.level1(list.etas());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const RowPlan& row = rows[r];
    VisualField pred;
    switch (row.kind) {
      case RowPlan::Kind::Single: {
        const std::size_t k = pool_of(row.strategy);
        pred = scorer.single(l1, k, needs[r].level1[k]);
        break;
      }
      case RowPlan::Kind::Flat: pred = scorer.flat(l1, needs[r].level1.front()); break;
      case RowPlan::Kind::Hier: pred = scorer.hierarchical(l1, needs[r].level1, needs[r].top); break;
      case RowPlan::Kind::Best: pred = scorer.best_expert(pool_of(row.strategy)); break;
      case RowPlan::Kind::BestOverall: pred = scorer.best_expert_overall(); break;
    }
    result.rmse[r] = rmse(pred, target.field);
  }
  return result;
}

}  // namespace

ExperimentReport run_experiment(std::span<const PatientSeries> cohort, const RunConfig& config) {
  config.validate();
  if (cohort.size() < config.folds) {
    throw std::invalid_argument("run_experiment: " + std::to_string(cohort.size()) +
                                " patients cannot form " + std::to_string(config.folds) + " folds");
  }
  for (const auto& p : cohort) {
    if (p.dimension() != config.D) {
      throw std::invalid_argument("run_experiment: patient '" + p.id() + "' has dimension " +
                                  std::to_string(p.dimension()) + ", config D = " +
                                  std::to_string(config.D));
    }
  }

  ExperimentReport report;
  report.grid = config.eta_grid.multipliers();
  for (std::size_t n = config.n_min; n <= config.n_max; ++n) report.n_values.push_back(n);
  const std::vector<RowPlan> rows = plan_rows(config);
  const std::size_t n_count = report.n_values.size();
  const std::size_t folds = config.folds;
  const std::size_t inner = config.inner_folds;

  const auto outer = fold_assignment(cohort.size(), folds, derive_seed(config.seed, {0}));
  std::vector<std::vector<PatientSeries>> learning(folds);
  for (std::size_t f = 0; f < folds; ++f) learning[f] = select(cohort, outer, f, false);
  std::vector<std::vector<std::size_t>> inner_assignment(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    if (learning[f].size() < inner) {
      throw std::invalid_argument("run_experiment: learning split of fold " + std::to_string(f) +
                                  " cannot form " + std::to_string(inner) + " inner folds");
    }
    inner_assignment[f] =
        fold_assignment(learning[f].size(), inner, derive_seed(config.seed, {1, f, 0}));
  }

  // Phase 1: inner tuning folds and the outer model of every fold.
  const std::size_t per_fold = inner + 1;
  std::vector<GridScores> inner_scores(folds * inner, GridScores(n_count, report.grid.size()));
  std::vector<std::optional<TrainedModel>> models(folds);
  std::vector<std::vector<std::string>> notes(folds * per_fold);
  detail::parallel_for(folds * per_fold, config.threads, [&](std::size_t unit) {
    const std::size_t f = unit / per_fold;
    const std::size_t i = unit % per_fold;
    if (i < inner) {
      inner_scores[f * inner + i] =
          score_inner_fold(learning[f], inner_assignment[f], i, config, report.grid,
                           config.strategies, derive_seed(config.seed, {1, f, 1}), notes[unit]);
    } else {
      try {
        models[f] = train_model(learning[f], config, derive_seed(config.seed, {2, f}), &notes[unit]);
      } catch (const InsufficientDataError& e) {
        notes[unit].push_back("fold " + std::to_string(f) + " skipped: " + e.what());
      }
    }
  });
  for (const auto& n : notes) report.warnings.insert(report.warnings.end(), n.begin(), n.end());

  std::vector<std::optional<std::map<Strategy, EtaTuning>>> tuning(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    GridScores total(n_count, report.grid.size());
    for (std::size_t i = 0; i < inner; ++i) {
      if (inner_scores[f * inner + i].valid) {
        total.merge(inner_scores[f * inner + i]);
        total.valid = true;
      }
    }
    if (total.valid) {
      tuning[f] = finalize_tuning(total, config, report.grid, config.strategies);
    } else if (models[f]) {
      report.warnings.push_back("fold " + std::to_string(f) + " skipped: no inner fold could be scored");
    }
  }

  // Phase 2: score the test patients of every usable fold.
  std::vector<std::vector<PatientResult>> fold_results(folds);
  detail::parallel_for(folds, config.threads, [&](std::size_t f) {
    if (!models[f] || !tuning[f]) return;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      if (outer[i] != f) continue;
      for (std::size_t n = config.n_min; n <= config.n_max; ++n) {
        PatientResult r = evaluate_test_patient(*models[f], *tuning[f], cohort[i], n, config, rows);
        r.cohort_index = i;
        fold_results[f].push_back(std::move(r));
      }
    }
  });

  for (std::size_t f = 0; f < folds; ++f) {
    FoldSummary summary;
    summary.fold = f;
    summary.learning = learning[f].size();
    summary.test = cohort.size() - learning[f].size();
    summary.skipped = !models[f] || !tuning[f];
    if (models[f]) {
      for (std::size_t k = 0; k < 3; ++k) summary.pool_sizes[k] = models[f]->pools[k].size();
    }
    if (tuning[f]) {
      for (const auto& [s, t] : *tuning[f]) summary.eta_ir[std::string(strategy_tag(s))] = t.eta;
    }
    report.folds.push_back(std::move(summary));
  }

  // Records in cohort order.
  std::vector<const PatientResult*> ordered;
  for (const auto& fr : fold_results) {
    for (const auto& r : fr) ordered.push_back(&r);
  }
  std::stable_sort(ordered.begin(), ordered.end(), [](const PatientResult* a, const PatientResult* b) {
    return a->cohort_index != b->cohort_index ? a->cohort_index < b->cohort_index : a->n < b->n;
  });

  std::vector<std::string> keys{"baseline"};
  for (const auto& row : rows) keys.push_back(row.key);
  const bool all_selected = config.strategies.size() == kAllStrategies.size();
  report.table_rows = all_selected ? keys : std::vector<std::string>(keys.begin() + 1, keys.end());

  std::map<std::string, std::vector<EvaluationRecord>> by_row;
  for (const PatientResult* r : ordered) {
    const PatientSeries& patient = cohort[r->cohort_index];
    for (std::size_t k = 0; k < keys.size(); ++k) {
      EvaluationRecord rec{patient.id(), r->n, keys[k], k == 0 ? r->rmse_lr : r->rmse[k - 1],
                           r->rmse_lr, patient.length()};
      report.records.push_back(rec);
      by_row[keys[k]].push_back(std::move(rec));
    }
  }
  for (const auto& key : keys) {
    auto& curve = report.ir[key];
    for (std::size_t n : report.n_values) curve.push_back(improvement_rate(by_row[key], n));
  }

  // Sign tests: every row against the baseline, hierarchical against flat,
  // and each aggregate against its pool's best expert.
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& row : rows) pairs.emplace_back(row.key, "baseline");
  for (const auto& row : rows) {
    if (row.kind == RowPlan::Kind::Hier) {
      const std::string flat_key = "flat/" + row.key.substr(row.key.find('/') + 1);
      if (std::find(keys.begin(), keys.end(), flat_key) != keys.end()) pairs.emplace_back(row.key, flat_key);
    }
    if ((row.kind == RowPlan::Kind::Single || row.kind == RowPlan::Kind::Flat)) {
      const std::string best_key = row_key(row.strategy, "best");
      pairs.emplace_back(row.key, best_key);
    }
  }
  auto column = [&](const std::string& key) {
    return static_cast<std::size_t>(std::find(keys.begin(), keys.end(), key) - keys.begin());
  };
  for (const auto& [method, reference] : pairs) {
    const std::size_t a = column(method);
    const std::size_t b = column(reference);
    for (std::size_t n : report.n_values) {
      Comparison c{method, reference, n, 0, 0, 0, std::nullopt};
      for (const PatientResult* r : ordered) {
        if (r->n != n || !r->evaluated) continue;
        const double ra = a == 0 ? r->rmse_lr : r->rmse[a - 1];
        const double rb = b == 0 ? r->rmse_lr : r->rmse[b - 1];
        if (std::abs(ra - rb) <= kTieTolerance) {
          ++c.ties;
        } else if (ra < rb) {
          ++c.wins;
        } else {
          ++c.losses;
        }
      }
      if (c.wins + c.losses > 0) c.p_value = binomial_test(c.wins, c.losses);
      report.comparisons.push_back(std::move(c));
    }
  }

  // IR versus eta*sqrt(n), averaged over usable folds.
  for (Strategy s : config.strategies) {
    std::vector<std::vector<double>> mean(n_count, std::vector<double>(report.grid.size(), 0.0));
    std::size_t used = 0;
    for (std::size_t f = 0; f < folds; ++f) {
      if (!tuning[f] || !models[f]) continue;
      const auto& curve = tuning[f]->at(s).ir_curve;
      for (std::size_t ni = 0; ni < n_count; ++ni) {
        for (std::size_t g = 0; g < report.grid.size(); ++g) mean[ni][g] += curve[ni][g];
      }
      ++used;
    }
    if (used > 0) {
      for (auto& row : mean) {
        for (double& v : row) v /= static_cast<double>(used);
      }
    }
    report.eta_curves[std::string(strategy_tag(s))] = std::move(mean);
  }
  return report;
}

}  // namespace vfagg
