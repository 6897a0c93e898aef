#include "vfagg/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <list>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "vfagg/aggregation.hpp"
#include "vfagg/evaluation.hpp"
#include "vfagg/experts.hpp"
#include "vfagg/io.hpp"
#include "vfagg/report.hpp"
#include "vfagg/rng.hpp"
#include "vfagg/synthdata.hpp"

namespace vfagg {

namespace {

enum class Kind { Count, Real, Text, List, Flag };

// A command-line flag that overrides one config key when given.
struct Override {
  std::string key;
  Kind kind;
  std::string value;
  std::vector<std::string> values;
  bool flag = false;
  CLI::Option* option = nullptr;
};

struct Common {
  std::string config;
  std::string dataset;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::list<Override> overrides;  // stable addresses for CLI11 bindings
};

std::string flag_name(const std::string& key) {
  std::string name = "--" + key;
  std::replace(name.begin(), name.end(), '_', '-');
  return name;
}

void add_override(CLI::App* cmd, Common& common, const std::string& key, Kind kind,
                  const std::string& help) {
  Override& o = common.overrides.emplace_back();
  o.key = key;
  o.kind = kind;
  const std::string name = flag_name(key);
  if (kind == Kind::Flag) {
    o.option = cmd->add_flag(name, o.flag, help);
  } else if (kind == Kind::List) {
    o.option = cmd->add_option(name, o.values, help)->delimiter(',');
  } else {
    o.option = cmd->add_option(name, o.value, help);
  }
}

void add_run_overrides(CLI::App* cmd, Common& common) {
  add_override(cmd, common, "D", Kind::Count, "visual field points per examination");
  add_override(cmd, common, "K", Kind::Count, "spatial clusters");
  add_override(cmd, common, "C", Kind::Count, "slope clusters per spatial cluster");
  add_override(cmd, common, "min_cluster_size", Kind::Count, "smallest retained spatial cluster");
  add_override(cmd, common, "eta_grid_min", Kind::Real, "smallest eta*sqrt(n) grid value");
  add_override(cmd, common, "eta_grid_max", Kind::Real, "largest eta*sqrt(n) grid value");
  add_override(cmd, common, "eta_grid_points", Kind::Count, "grid size");
  add_override(cmd, common, "folds", Kind::Count, "outer cross-validation folds");
  add_override(cmd, common, "inner_folds", Kind::Count, "folds used to tune eta");
  add_override(cmd, common, "n_min", Kind::Count, "fewest observations used for prediction");
  add_override(cmd, common, "n_max", Kind::Count, "most observations used for prediction");
  add_override(cmd, common, "threads", Kind::Count, "worker threads (0: all cores)");
  Override& strategy = common.overrides.emplace_back();
  strategy.key = "strategies";
  strategy.kind = Kind::List;
  strategy.option = cmd->add_option("--strategy", strategy.values, "lr, sc, tslr, flat, hier or all")
                        ->delimiter(',');
  add_override(cmd, common, "eta", Kind::Text, "ir, rg, both or a fixed learning rate");
  add_override(cmd, common, "update", Kind::Text, "batch or online");
}

void add_cohort_overrides(CLI::App* cmd, Common& common) {
  add_override(cmd, common, "patients", Kind::Count, "number of patients");
  add_override(cmd, common, "D", Kind::Count, "visual field points per examination");
  add_override(cmd, common, "K_true", Kind::Count, "planted spatial patterns");
  add_override(cmd, common, "C_true", Kind::Count, "planted progression rates");
  add_override(cmd, common, "noise_sd", Kind::Real, "measurement noise, dB");
  add_override(cmd, common, "skew", Kind::Flag, "tie each pattern to one progression rate");
}

void add_common(CLI::App* cmd, Common& common, bool dataset, bool out_required) {
  cmd->add_option("--config", common.config, "flat JSON config file");
  cmd->add_option("--seed", common.seed, "global seed");
  if (dataset) cmd->add_option("--dataset", common.dataset, "cohort in JSON-lines form")->required();
  auto* out = cmd->add_option("--out", common.out, "output path");
  if (out_required) out->required();
}

Json override_value(const Override& o) {
  auto fail = [&](const std::string& why) { throw ConfigError("config field '" + o.key + "': " + why); };
  switch (o.kind) {
    case Kind::Count: {
      std::size_t used = 0;
      unsigned long long v = 0;
      try {
        if (!o.value.empty() && o.value.front() == '-') fail("expected a nonnegative integer");
        v = std::stoull(o.value, &used);
      } catch (const std::logic_error&) {
        fail("expected a nonnegative integer");
      }
      if (used != o.value.size()) fail("expected a nonnegative integer");
      return Json(static_cast<std::uint64_t>(v));
    }
    case Kind::Real: {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(o.value, &used);
      } catch (const std::logic_error&) {
        fail("expected a number");
      }
      if (used != o.value.size()) fail("expected a number");
      return Json(v);
    }
    case Kind::Text: {
      if (o.key == "eta" && o.value != "ir" && o.value != "rg" && o.value != "both") {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(o.value, &used);
        } catch (const std::logic_error&) {
          fail("expected ir, rg, both or a number");
        }
        if (used != o.value.size()) fail("expected ir, rg, both or a number");
        return Json(v);
      }
      return Json(o.value);
    }
    case Kind::List: return Json(o.values);
    case Kind::Flag: return Json(o.flag);
  }
  return Json();
}

Json merged_document(const Common& common) {
  Json doc = common.config.empty() ? Json::object() : load_config(common.config);
  for (const auto& o : common.overrides) {
    if (o.option->count() > 0) doc[o.key] = override_value(o);
  }
  if (common.seed) doc["seed"] = *common.seed;
  return doc;
}

RunConfig run_config(const Common& common) { return parse_run_config(merged_document(common)); }

std::vector<PatientSeries> load_cohort(const Common& common, const RunConfig& config) {
  return read_dataset(std::filesystem::path(common.dataset), config.D);
}

int cmd_synth(const Common& common, std::ostream& out) {
  const CohortConfig config = parse_cohort_config(merged_document(common));
  const Cohort cohort = generate_cohort(config);
  const std::filesystem::path path(common.out);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_dataset(path, cohort.patients);
  write_text(path.string() + ".truth.json", ground_truth_to_json(cohort).dump(2) + "\n");
  out << "wrote " << cohort.patients.size() << " patients to " << path.string() << '\n';
  return kExitOk;
}

int cmd_experts(const Common& common, std::ostream& out) {
  const RunConfig config = run_config(common);
  const auto cohort = load_cohort(common, config);
  std::vector<std::string> warnings;
  const TrainedModel model = train_model(cohort, config, derive_seed(config.seed, {2}), &warnings);
  Json doc;
  doc["clustering"] = spatial_to_json(model.spatial);
  Json pools = Json::array();
  for (const auto& pool : model.pools) pools.push_back(pool_to_json(pool));
  doc["pools"] = std::move(pools);
  doc["warnings"] = warnings;
  const std::string text = doc.dump(2) + "\n";
  if (common.out.empty()) {
    out << text;
  } else {
    write_text(common.out, text);
    out << "pools: lr " << model.pools[kPoolLR].size() << ", sc " << model.pools[kPoolSC].size()
        << ", tslr " << model.pools[kPoolTSLR].size() << '\n';
  }
  return kExitOk;
}

int cmd_tune(const Common& common, std::ostream& out) {
  const RunConfig config = run_config(common);
  const auto cohort = load_cohort(common, config);
  std::vector<std::string> warnings;
  const auto tuning = tune_all(cohort, config, derive_seed(config.seed, {1}), &warnings);
  Json doc;
  doc["grid"] = config.eta_grid.multipliers();
  Json strategies = Json::object();
  for (Strategy s : config.strategies) {
    const EtaTuning& t = tuning.at(s);
    Json item;
    item["n"] = t.n_values;
    item["eta"] = t.eta;
    item["ir_curve"] = t.ir_curve;
    strategies[std::string(strategy_tag(s))] = std::move(item);
  }
  doc["strategies"] = std::move(strategies);
  doc["warnings"] = warnings;
  const std::string text = doc.dump(2) + "\n";
  if (common.out.empty()) {
    out << text;
  } else {
    write_text(common.out, text);
    for (Strategy s : config.strategies) {
      out << strategy_tag(s) << ':';
      for (double eta : tuning.at(s).eta) out << ' ' << full_precision(eta);
      out << '\n';
    }
  }
  return kExitOk;
}

// Learning rate for one strategy at n observations under the configured choice.
struct PredictEta {
  std::vector<double> per_pool;
  double top = 0.0;
};

PredictEta predict_eta(Strategy s, std::size_t n, const RunConfig& config,
                       const std::vector<ExpertPool>& pools,
                       const std::map<Strategy, EtaTuning>* tuning) {
  PredictEta eta;
  double shared = 0.0;
  if (config.eta_fixed) {
    shared = *config.eta_fixed;
  } else if (config.eta_ir) {
    // Tuned multipliers exist for n in [n_min, n_max]; outside it the nearest
    // multiplier is rescaled to n.
    const std::size_t tuned_n = std::clamp(n, config.n_min, config.n_max);
    const double g = tuning->at(s).eta[tuned_n - config.n_min] * std::sqrt(static_cast<double>(tuned_n));
    shared = g / std::sqrt(static_cast<double>(n));
  } else {
    std::size_t total = 0;
    for (const auto& p : pools) total += p.size();
    switch (s) {
      case Strategy::LR: shared = rg_optimal_eta(pools[kPoolLR].size(), n); break;
      case Strategy::SC: shared = rg_optimal_eta(pools[kPoolSC].size(), n); break;
      case Strategy::TSLR: shared = rg_optimal_eta(pools[kPoolTSLR].size(), n); break;
      case Strategy::Flat: shared = rg_optimal_eta(total, n); break;
      case Strategy::Hierarchical:
        for (const auto& p : pools) eta.per_pool.push_back(rg_optimal_eta(p.size(), n));
        eta.top = rg_optimal_eta(pools.size(), n);
        return eta;
    }
  }
  eta.per_pool.assign(pools.size(), shared);
  eta.top = shared;
  return eta;
}

int cmd_predict(const Common& common, const std::string& targets_path, std::optional<std::size_t> n_opt,
                std::ostream& out) {
  const RunConfig config = run_config(common);
  const auto cohort = load_cohort(common, config);
  const auto targets = read_dataset(std::filesystem::path(targets_path), config.D);
  if (n_opt && *n_opt < 1) throw ConfigError("config field 'n': must be at least 1");

  std::vector<std::string> warnings;
  const TrainedModel model = train_model(cohort, config, derive_seed(config.seed, {2}), &warnings);
  std::optional<std::map<Strategy, EtaTuning>> tuning;
  if (config.eta_ir && !config.eta_fixed) tuning = tune_all(cohort, config, derive_seed(config.seed, {1}), &warnings);

  std::ostringstream lines;
  for (const auto& patient : targets) {
    const std::size_t n = std::min(n_opt.value_or(patient.length() - 1), patient.length() - 1);
    const auto prefix = patient.prefix(n);
    const Observation& target = patient.back();
    std::vector<ExpertPool> fitted;
    for (const auto& pool : model.pools) fitted.push_back(fit_pool_to_target(pool, prefix));

    for (Strategy s : config.strategies) {
      const PredictEta eta = predict_eta(s, n, config, model.pools, tuning ? &*tuning : nullptr);
      VisualField pred;
      switch (s) {
        case Strategy::LR:
          pred = flat_predict(std::span(fitted).subspan(kPoolLR, 1), prefix, eta.top, target.date, config.update);
          break;
        case Strategy::SC:
          pred = flat_predict(std::span(fitted).subspan(kPoolSC, 1), prefix, eta.top, target.date, config.update);
          break;
        case Strategy::TSLR:
          pred = flat_predict(std::span(fitted).subspan(kPoolTSLR, 1), prefix, eta.top, target.date,
                              config.update);
          break;
        case Strategy::Flat: pred = flat_predict(fitted, prefix, eta.top, target.date, config.update); break;
        case Strategy::Hierarchical:
          pred = hierarchical_predict(fitted, prefix, HierarchicalEta{eta.per_pool, eta.top}, target.date,
                                      config.update);
          break;
      }
      Json line;
      line["id"] = patient.id();
      line["n"] = n;
      line["strategy"] = std::string(strategy_tag(s));
      line["eta"] = eta.top;
      line["date"] = target.date;
      line["values"] = std::vector<double>(pred.values().begin(), pred.values().end());
      line["rmse"] = rmse(pred, target.field);
      line["rmse_lr_baseline"] = rmse(lr_baseline_prediction(prefix, target.date), target.field);
      lines << line.dump() << '\n';
    }
  }
  if (common.out.empty()) {
    out << lines.str();
  } else {
    write_text(common.out, lines.str());
    out << "wrote predictions for " << targets.size() << " patients to " << common.out << '\n';
  }
  return kExitOk;
}

int cmd_evaluate(const Common& common, std::ostream& out) {
  const RunConfig config = run_config(common);
  const auto cohort = load_cohort(common, config);
  const ExperimentReport report = run_experiment(cohort, config);
  write_report(common.out, report, config);
  out << ir_table_text(report);
  return kExitOk;
}

int cmd_report(const std::string& dir, std::ostream& out) {
  const std::filesystem::path path = std::filesystem::path(dir) / "summary.json";
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  Json summary;
  try {
    summary = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataError("'" + path.string() + "': invalid JSON (" + e.what() + ")");
  }
  out << ir_table_text(summary);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Aggregation of clustering-based visual field progression predictors", "vfagg"};
  app.require_subcommand(1);
  Common common;

  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  add_common(synth, common, false, true);
  add_cohort_overrides(synth, common);

  auto* experts = app.add_subcommand("experts", "cluster a cohort and dump the expert pools");
  add_common(experts, common, true, false);
  add_run_overrides(experts, common);

  auto* tune = app.add_subcommand("tune", "IR-optimal learning rate per n by cross-validation");
  add_common(tune, common, true, false);
  add_run_overrides(tune, common);

  std::string targets;
  std::optional<std::size_t> n_obs;
  auto* predict = app.add_subcommand("predict", "predict the final examination of target patients");
  add_common(predict, common, true, false);
  add_run_overrides(predict, common);
  predict->add_option("--targets", targets, "target patients in JSON-lines form")->required();
  predict->add_option("--n", n_obs, "observations used per target (default: all but the last)");

  auto* evaluate = app.add_subcommand("evaluate", "cross-validated experiment and report files");
  add_common(evaluate, common, true, true);
  add_run_overrides(evaluate, common);

  auto* report = app.add_subcommand("report", "print the IR table of an evaluate output directory");
  report->add_option("--out", common.out, "directory written by evaluate")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(common, out);
    if (*experts) return cmd_experts(common, out);
    if (*tune) return cmd_tune(common, out);
    if (*predict) return cmd_predict(common, targets, n_obs, out);
    if (*evaluate) return cmd_evaluate(common, out);
    if (*report) return cmd_report(common.out, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const InsufficientDataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace vfagg
