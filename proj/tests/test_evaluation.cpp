#include <cmath>
#include <cstdint>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "vfagg/evaluation.hpp"
#include "vfagg/synthdata.hpp"

using namespace vfagg;
using testing::Gen;

namespace {

EvaluationRecord rec(double f, double lr, std::size_t n = 2, std::size_t length = 5) {
  return EvaluationRecord{"p", n, "m", f, lr, length};
}

// Exact tail via 64-bit binomial coefficients (valid for m <= 62).
double oracle_upper_tail(std::size_t k, std::size_t m) {
  std::uint64_t total = 0;
  std::uint64_t c = 1;
  for (std::size_t i = 0; i <= m; ++i) {
    if (i >= k) total += c;
    c = c * (m - i) / (i + 1);
  }
  return static_cast<double>(total) / std::ldexp(1.0, static_cast<int>(m));
}

RunConfig small_config() {
  RunConfig c;
  c.D = 6;
  c.K = 4;
  c.C = 2;
  c.folds = 3;
  c.inner_folds = 3;
  c.n_min = 2;
  c.n_max = 4;
  c.eta_grid.points = 5;
  c.threads = 1;
  return c;
}

Cohort small_cohort(std::size_t patients, std::uint64_t seed) {
  CohortConfig config;
  config.patients = patients;
  config.D = 6;
  config.K_true = 3;
  config.series_length = {3, 7};
  config.seed = seed;
  return generate_cohort(config);
}

}  // namespace

TEST_CASE("improvement rate examples") {
  const std::vector<EvaluationRecord> same{rec(2.0, 2.0), rec(1.5, 1.5), rec(3.0, 3.0)};
  CHECK(improvement_rate(same, 2).ir == 0.0);

  const std::vector<EvaluationRecord> perfect{rec(0.0, 2.0), rec(0.0, 0.5)};
  CHECK(improvement_rate(perfect, 2).ir == 1.0);

  const std::vector<EvaluationRecord> two{rec(0.5, 1.0), rec(0.9, 1.0)};
  const IrPoint p = improvement_rate(two, 2);
  CHECK(p.ir == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(p.count == 2);
  CHECK(p.stdev == doctest::Approx(std::sqrt(0.08)).epsilon(1e-12));
}

TEST_CASE("short series count as zero improvement") {
  const std::vector<EvaluationRecord> records{rec(0.0, 4.0, 5, 5), rec(0.0, 4.0, 5, 4), rec(1.0, 2.0, 5, 9)};
  const IrPoint p = improvement_rate(records, 5);
  CHECK(p.count == 3);
  CHECK(p.ir == doctest::Approx(0.5 / 3.0).epsilon(1e-12));
  // Records of other n are ignored.
  CHECK(improvement_rate(records, 3).count == 0);
}

TEST_CASE("zero baseline error") {
  const std::vector<EvaluationRecord> records{rec(0.0, 0.0), rec(0.3, 0.0), rec(1.0, 2.0)};
  const IrPoint p = improvement_rate(records, 2);
  CHECK(p.excluded == 1);
  CHECK(p.count == 2);
  CHECK(p.ir == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("improvement rate never exceeds one") {
  Gen gen(51);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<EvaluationRecord> records;
    for (std::size_t i = 0, count = gen.integer(1, 20); i < count; ++i) {
      records.push_back(rec(gen.uniform(0, 10), gen.uniform(0.01, 10), gen.integer(2, 10), gen.integer(2, 15)));
    }
    for (std::size_t n = 2; n <= 10; ++n) CHECK(improvement_rate(records, n).ir <= 1.0);
  }
}

TEST_CASE("binomial test") {
  CHECK(binomial_test(10, 0) == 1.0 / 1024.0);
  CHECK(binomial_test(5, 5) == doctest::Approx(638.0 / 1024.0).epsilon(1e-15));
  CHECK(binomial_test(5, 5) == doctest::Approx(0.623047).epsilon(1e-6));
  CHECK(binomial_test(0, 7) == 1.0);
  CHECK_THROWS_AS(binomial_test(0, 0), std::invalid_argument);
  for (std::size_t m = 1; m <= 62; ++m) {
    for (std::size_t k = 0; k <= m; ++k) {
      CHECK(binomial_upper_tail(k, m) == oracle_upper_tail(k, m));
      if (k > 0) CHECK(binomial_upper_tail(k, m) + binomial_lower_tail(k - 1, m) == 1.0);
    }
  }
  // Large counts stay finite and monotone.
  CHECK(binomial_test(600, 400) < binomial_test(550, 450));
  CHECK(binomial_test(600, 400) > 0.0);
}

TEST_CASE("best expert") {
  const std::vector<Observation> prefix{{0.0, VisualField({-1.0})}, {1.0, VisualField({-2.0})}};
  const Observation target{3.0, VisualField({-4.0})};
  std::vector<Expert> fitted{Expert{{-1.0}, {-1.0}, Method::PatientWiseLR, "exact"}};
  CHECK(best_expert_rmse(fitted, prefix, target) == 0.0);

  fitted = {Expert{{0.0}, {-1.5}, Method::PatientWiseLR, "flat"}, Expert{{-1.0}, {-1.0}, Method::PatientWiseLR, "exact"},
            Expert{{-3.0}, {0.0}, Method::PatientWiseLR, "steep"}};
  CHECK(best_expert_index(fitted, prefix) == 1);

  // Ties go to the lowest index.
  fitted = {Expert{{0.0}, {-1.5}, Method::PatientWiseLR, "a"}, Expert{{0.0}, {-1.5}, Method::PatientWiseLR, "b"}};
  CHECK(best_expert_index(fitted, prefix) == 0);

  Gen gen(52);
  for (int trial = 0; trial < 50; ++trial) {
    const PatientSeries s = gen.series("t", 3, 4);
    std::vector<Expert> experts;
    for (int i = 0; i < 3; ++i) {
      Expert e{gen.slope(3), {}, Method::PatientWiseLR, "e"};
      e.intercept = fit_intercept(e.slope, s.prefix(3));
      experts.push_back(e);
    }
    std::size_t best = 0;
    double best_loss = 1e300;
    for (std::size_t i = 0; i < 3; ++i) {
      double total = 0.0;
      for (const auto& o : s.prefix(3)) {
        total += static_cast<double>(testing::oracle_loss(testing::to_field(predict_linear(experts[i], o.date)),
                                                         testing::to_field(o.field)));
      }
      if (total < best_loss) best_loss = total, best = i;
    }
    CHECK(best_expert_index(experts, s.prefix(3)) == best);
  }
}

TEST_CASE("lr baseline prediction") {
  const std::vector<Observation> prefix{{0.0, VisualField({-1.0})}, {1.0, VisualField({-2.0})}};
  CHECK(lr_baseline_prediction(prefix, 3.0)[0] == doctest::Approx(-4.0).epsilon(1e-14));
}

TEST_CASE("fold assignment partitions the cohort") {
  for (std::size_t patients : {10u, 11u, 97u, 1086u}) {
    const auto folds = fold_assignment(patients, 10, 7);
    std::vector<std::size_t> sizes(10, 0);
    for (std::size_t f : folds) ++sizes.at(f);
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    CHECK(*hi - *lo <= 1);
    CHECK(fold_assignment(patients, 10, 7) == folds);
  }
  const auto folds = fold_assignment(1086, 10, 3);
  std::size_t test = 0;
  for (std::size_t f : folds) test += f == 0;
  CHECK(1086 - test == 977);
  CHECK(test == 109);
}

TEST_CASE("eta grid") {
  EtaGrid g;
  const auto m = g.multipliers();
  REQUIRE(m.size() == 61);
  CHECK(m.front() == doctest::Approx(1e-2).epsilon(1e-14));
  CHECK(m.back() == doctest::Approx(1e4).epsilon(1e-14));
  CHECK(m[10] == doctest::Approx(1e-1).epsilon(1e-14));
  CHECK(m[40] == doctest::Approx(1e2).epsilon(1e-14));
  EtaGrid one{0.5, 0.5, 1};
  CHECK(one.multipliers() == std::vector<double>{0.5});
}

TEST_CASE("run config validation names the field") {
  RunConfig c;
  c.folds = 1;
  try {
    c.validate();
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("folds") != std::string::npos);
  }
  RunConfig d;
  d.strategies.clear();
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}

TEST_CASE("tune_eta_ir") {
  const Cohort cohort = small_cohort(60, 3);
  const RunConfig config = small_config();

  SUBCASE("single grid point is selected") {
    const std::vector<double> grid{0.7};
    const EtaTuning t = tune_eta_ir(cohort.patients, Strategy::Flat, grid, 3, 5, config);
    for (std::size_t i = 0; i < t.n_values.size(); ++i) {
      CHECK(t.eta[i] == doctest::Approx(0.7 / std::sqrt(static_cast<double>(t.n_values[i]))).epsilon(1e-15));
    }
  }

  SUBCASE("selection is the argmax of the curve, reproducibly") {
    const auto grid = config.eta_grid.multipliers();
    const EtaTuning t = tune_eta_ir(cohort.patients, Strategy::Hierarchical, grid, 3, 5, config);
    const EtaTuning again = tune_eta_ir(cohort.patients, Strategy::Hierarchical, grid, 3, 5, config);
    CHECK(t.eta == again.eta);
    CHECK(t.ir_curve == again.ir_curve);
    for (std::size_t i = 0; i < t.n_values.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t g = 1; g < grid.size(); ++g) {
        if (t.ir_curve[i][g] > t.ir_curve[i][best]) best = g;
      }
      CHECK(t.eta[i] == grid[best] / std::sqrt(static_cast<double>(t.n_values[i])));
    }
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(tune_eta_ir(cohort.patients, Strategy::Flat, std::vector<double>{}, 3, 5, config),
                    std::invalid_argument);
    CHECK_THROWS_AS(tune_eta_ir(std::span(cohort.patients).first(2), Strategy::Flat, std::vector<double>{1.0}, 3, 5, config),
                    std::invalid_argument);
  }
}

TEST_CASE("run_experiment on a small cohort") {
  const Cohort cohort = small_cohort(60, 4);
  const RunConfig config = small_config();
  const ExperimentReport r = run_experiment(cohort.patients, config);

  CHECK(r.n_values == std::vector<std::size_t>{2, 3, 4});
  CHECK(r.table_rows.front() == "baseline");
  REQUIRE(r.folds.size() == 3);
  std::size_t tested = 0;
  for (const auto& f : r.folds) {
    tested += f.test;
    CHECK(f.learning + f.test == cohort.patients.size());
  }
  CHECK(tested == cohort.patients.size());

  // Every patient is scored exactly once per (n, row).
  std::set<std::tuple<std::string, std::size_t, std::string>> seen;
  for (const auto& rec : r.records) CHECK(seen.insert({rec.patient_id, rec.n, rec.method}).second);
  CHECK(seen.size() == cohort.patients.size() * 3 * (r.table_rows.size()));

  for (const auto& p : r.ir.at("baseline")) CHECK(p.ir == 0.0);
  for (const auto& rec : r.records) {
    CHECK(rec.rmse_method >= 0.0);
    CHECK(rec.rmse_lr_baseline >= 0.0);
  }
  for (const auto& c : r.comparisons) {
    if (c.wins + c.losses > 0) CHECK(c.p_value.has_value());
  }

  const ExperimentReport again = run_experiment(cohort.patients, config);
  REQUIRE(again.records.size() == r.records.size());
  for (std::size_t i = 0; i < r.records.size(); ++i) CHECK(again.records[i].rmse_method == r.records[i].rmse_method);

  RunConfig threaded = config;
  threaded.threads = 4;
  const ExperimentReport parallel = run_experiment(cohort.patients, threaded);
  for (std::size_t i = 0; i < r.records.size(); ++i) CHECK(parallel.records[i].rmse_method == r.records[i].rmse_method);
}

TEST_CASE("run_experiment with one strategy") {
  const Cohort cohort = small_cohort(45, 5);
  RunConfig config = small_config();
  config.strategies = {Strategy::TSLR};
  const ExperimentReport r = run_experiment(cohort.patients, config);
  CHECK(r.table_rows == std::vector<std::string>{"tslr/ir", "tslr/rg", "tslr/best"});
}

TEST_CASE("run_experiment on identical noise-free patients") {
  std::vector<PatientSeries> cohort;
  for (int i = 0; i < 30; ++i) {
    std::vector<Observation> obs;
    for (int t = 0; t < 5; ++t) {
      obs.push_back({0.5 * t, VisualField({-2.0 - 0.5 * t, -3.0 - 1.0 * t, -1.0})});
    }
    cohort.emplace_back("p" + std::to_string(i), obs);
  }
  RunConfig config = small_config();
  config.D = 3;
  config.C = 3;  // one slope group per distinct rate, so SC is exact too
  const ExperimentReport r = run_experiment(cohort, config);
  for (const auto& rec : r.records) {
    CHECK(rec.rmse_method <= 1e-9);
  }
  for (const auto& [row, curve] : r.ir) {
    for (const auto& p : curve) CHECK(std::fabs(p.ir) <= 1e-6);
  }
}

TEST_CASE("run_experiment input checks") {
  const Cohort cohort = small_cohort(20, 6);
  RunConfig config = small_config();
  config.folds = 30;
  CHECK_THROWS_AS(run_experiment(cohort.patients, config), std::invalid_argument);
  config = small_config();
  config.D = 7;
  CHECK_THROWS_AS(run_experiment(cohort.patients, config), std::invalid_argument);
}
