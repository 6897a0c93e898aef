#include "vfagg/io.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace vfagg {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      // run
      "D", "K", "C", "min_cluster_size", "eta_grid_min", "eta_grid_max", "eta_grid_points", "folds",
      "inner_folds", "n_min", "n_max", "seed", "strategies", "eta", "update", "threads",
      // cohort
      "patients", "K_true", "C_true", "noise_sd", "series_length_min", "series_length_max",
      "date_gap_min", "date_gap_max", "intercept_min", "intercept_max", "rate_min", "rate_max",
      "skew"};
  return keys;
}

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw ConfigError("config field '" + field + "': " + why);
}

void check_keys(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!known_keys().contains(key)) bad(key, "unknown field");
  }
}

std::size_t get_count(const Json& doc, const std::string& key, std::size_t fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& v = doc.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) bad(key, "expected a nonnegative integer");
  return v.get<std::size_t>();
}

std::uint64_t get_seed(const Json& doc, std::uint64_t fallback) {
  if (!doc.contains("seed")) return fallback;
  const auto& v = doc.at("seed");
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  bad("seed", "expected a nonnegative integer");
}

double get_real(const Json& doc, const std::string& key, double fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& v = doc.at(key);
  if (!v.is_number()) bad(key, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) bad(key, "expected a finite number");
  return x;
}

bool get_bool(const Json& doc, const std::string& key, bool fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& v = doc.at(key);
  if (!v.is_boolean()) bad(key, "expected true or false");
  return v.get<bool>();
}

std::string context(std::size_t line) { return "line " + std::to_string(line) + ": "; }

PatientSeries parse_patient(const std::string& text, std::size_t line,
                            std::optional<std::size_t> dimension) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw DataError(context(line) + "invalid JSON (" + e.what() + ")");
  }
  if (!doc.is_object()) throw DataError(context(line) + "expected a JSON object");
  if (!doc.contains("id") || !(doc["id"].is_string() || doc["id"].is_number_integer())) {
    throw DataError(context(line) + "missing patient 'id'");
  }
  const std::string id = doc["id"].is_string() ? doc["id"].get<std::string>() : doc["id"].dump();
  if (!doc.contains("observations") || !doc["observations"].is_array()) {
    throw DataError(context(line) + "patient '" + id + "' has no 'observations' array");
  }
  std::vector<Observation> observations;
  for (const auto& obs : doc["observations"]) {
    if (!obs.is_object() || !obs.contains("date") || !obs["date"].is_number() ||
        !obs.contains("values") || !obs["values"].is_array()) {
      throw DataError(context(line) + "patient '" + id +
                      "': each observation needs numeric 'date' and array 'values'");
    }
    std::vector<double> values;
    values.reserve(obs["values"].size());
    for (const auto& v : obs["values"]) {
      if (!v.is_number()) {
        throw DataError(context(line) + "patient '" + id + "': missing or non-numeric TD value");
      }
      values.push_back(v.get<double>());
    }
    if (dimension && values.size() != *dimension) {
      throw DataError(context(line) + "patient '" + id + "': expected " + std::to_string(*dimension) +
                      " values, found " + std::to_string(values.size()));
    }
    try {
      observations.push_back({obs["date"].get<double>(), VisualField(std::move(values))});
    } catch (const std::invalid_argument& e) {
      throw DataError(context(line) + "patient '" + id + "': " + e.what());
    }
  }
  try {
    return PatientSeries(id, std::move(observations));
  } catch (const std::invalid_argument& e) {
    throw DataError(context(line) + e.what());
  }
}

}  // namespace

std::vector<PatientSeries> read_dataset(std::istream& in, std::optional<std::size_t> dimension) {
  std::vector<PatientSeries> out;
  std::set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    PatientSeries patient = parse_patient(text, line, dimension);
    if (!seen.insert(patient.id()).second) {
      throw DataError(context(line) + "duplicate patient id '" + patient.id() + "'");
    }
    if (!out.empty() && patient.dimension() != out.front().dimension()) {
      throw DataError(context(line) + "patient '" + patient.id() + "' has dimension " +
                      std::to_string(patient.dimension()) + ", earlier patients have " +
                      std::to_string(out.front().dimension()));
    }
    out.push_back(std::move(patient));
  }
  return out;
}

std::vector<PatientSeries> read_dataset(const std::filesystem::path& path,
                                        std::optional<std::size_t> dimension) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  return read_dataset(in, dimension);
}

void write_dataset(std::ostream& out, std::span<const PatientSeries> patients) {
  for (const auto& p : patients) {
    Json doc;
    doc["id"] = p.id();
    Json observations = Json::array();
    for (const auto& obs : p.observations()) {
      Json o;
      o["date"] = obs.date;
      o["values"] = std::vector<double>(obs.field.values().begin(), obs.field.values().end());
      observations.push_back(std::move(o));
    }
    doc["observations"] = std::move(observations);
    out << doc.dump() << '\n';
  }
}

void write_dataset(const std::filesystem::path& path, std::span<const PatientSeries> patients) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset '" + path.string() + "'");
  write_dataset(out, patients);
}

Json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    Json doc = Json::parse(in);
    check_keys(doc);
    return doc;
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': invalid JSON (" + e.what() + ")");
  }
}

RunConfig parse_run_config(const Json& doc, RunConfig base) {
  check_keys(doc);
  RunConfig c = std::move(base);
  c.D = get_count(doc, "D", c.D);
  c.K = get_count(doc, "K", c.K);
  c.C = get_count(doc, "C", c.C);
  c.min_cluster_size = get_count(doc, "min_cluster_size", c.min_cluster_size);
  c.eta_grid.min = get_real(doc, "eta_grid_min", c.eta_grid.min);
  c.eta_grid.max = get_real(doc, "eta_grid_max", c.eta_grid.max);
  c.eta_grid.points = get_count(doc, "eta_grid_points", c.eta_grid.points);
  c.folds = get_count(doc, "folds", c.folds);
  c.inner_folds = get_count(doc, "inner_folds", c.inner_folds);
  c.n_min = get_count(doc, "n_min", c.n_min);
  c.n_max = get_count(doc, "n_max", c.n_max);
  c.seed = get_seed(doc, c.seed);
  c.threads = get_count(doc, "threads", c.threads);

  if (doc.contains("strategies")) {
    const auto& v = doc["strategies"];
    std::vector<std::string> tags;
    if (v.is_string()) {
      tags.push_back(v.get<std::string>());
    } else if (v.is_array()) {
      for (const auto& t : v) {
        if (!t.is_string()) bad("strategies", "expected strategy names");
        tags.push_back(t.get<std::string>());
      }
    } else {
      bad("strategies", "expected a name or an array of names");
    }
    c.strategies.clear();
    for (const auto& tag : tags) {
      if (tag == "all") {
        c.strategies.assign(kAllStrategies.begin(), kAllStrategies.end());
        continue;
      }
      try {
        const Strategy s = parse_strategy(tag);
        if (std::find(c.strategies.begin(), c.strategies.end(), s) == c.strategies.end()) c.strategies.push_back(s);
      } catch (const std::invalid_argument&) {
        bad("strategies", "unknown strategy '" + tag + "' (lr, sc, tslr, flat, hier, all)");
      }
    }
  }
  if (doc.contains("eta")) {
    const auto& v = doc["eta"];
    if (v.is_number()) {
      c.eta_fixed = v.get<double>();
      c.eta_ir = c.eta_rg = false;
    } else if (v.is_string() && v == "ir") {
      c.eta_ir = true, c.eta_rg = false, c.eta_fixed.reset();
    } else if (v.is_string() && v == "rg") {
      c.eta_ir = false, c.eta_rg = true, c.eta_fixed.reset();
    } else if (v.is_string() && v == "both") {
      c.eta_ir = c.eta_rg = true, c.eta_fixed.reset();
    } else {
      bad("eta", "expected \"ir\", \"rg\", \"both\" or a number");
    }
  }
  if (doc.contains("update")) {
    const auto& v = doc["update"];
    if (v == "batch") {
      c.update = UpdateRule::Batch;
    } else if (v == "online") {
      c.update = UpdateRule::Online;
    } else {
      bad("update", "expected \"batch\" or \"online\"");
    }
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

CohortConfig parse_cohort_config(const Json& doc, CohortConfig base) {
  check_keys(doc);
  CohortConfig c = base;
  c.patients = get_count(doc, "patients", c.patients);
  c.D = get_count(doc, "D", c.D);
  c.K_true = get_count(doc, "K_true", c.K_true);
  c.C_true = get_count(doc, "C_true", c.C_true);
  c.noise_sd = get_real(doc, "noise_sd", c.noise_sd);
  c.series_length.min = get_count(doc, "series_length_min", c.series_length.min);
  c.series_length.max = get_count(doc, "series_length_max", c.series_length.max);
  c.date_gap.min = get_real(doc, "date_gap_min", c.date_gap.min);
  c.date_gap.max = get_real(doc, "date_gap_max", c.date_gap.max);
  c.intercept.min = get_real(doc, "intercept_min", c.intercept.min);
  c.intercept.max = get_real(doc, "intercept_max", c.intercept.max);
  c.rate.min = get_real(doc, "rate_min", c.rate.min);
  c.rate.max = get_real(doc, "rate_max", c.rate.max);
  c.skew = get_bool(doc, "skew", c.skew);
  c.seed = get_seed(doc, c.seed);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

Json run_config_to_json(const RunConfig& c) {
  Json doc;
  doc["D"] = c.D;
  doc["K"] = c.K;
  doc["C"] = c.C;
  doc["min_cluster_size"] = c.min_cluster_size;
  doc["eta_grid_min"] = c.eta_grid.min;
  doc["eta_grid_max"] = c.eta_grid.max;
  doc["eta_grid_points"] = c.eta_grid.points;
  doc["folds"] = c.folds;
  doc["inner_folds"] = c.inner_folds;
  doc["n_min"] = c.n_min;
  doc["n_max"] = c.n_max;
  doc["seed"] = c.seed;
  Json strategies = Json::array();
  for (Strategy s : c.strategies) strategies.push_back(std::string(strategy_tag(s)));
  doc["strategies"] = std::move(strategies);
  if (c.eta_fixed) {
    doc["eta"] = *c.eta_fixed;
  } else {
    doc["eta"] = c.eta_ir && c.eta_rg ? "both" : (c.eta_ir ? "ir" : "rg");
  }
  doc["update"] = c.update == UpdateRule::Batch ? "batch" : "online";
  return doc;
}

Json cohort_config_to_json(const CohortConfig& c) {
  Json doc;
  doc["patients"] = c.patients;
  doc["D"] = c.D;
  doc["K_true"] = c.K_true;
  doc["C_true"] = c.C_true;
  doc["noise_sd"] = c.noise_sd;
  doc["series_length_min"] = c.series_length.min;
  doc["series_length_max"] = c.series_length.max;
  doc["date_gap_min"] = c.date_gap.min;
  doc["date_gap_max"] = c.date_gap.max;
  doc["intercept_min"] = c.intercept.min;
  doc["intercept_max"] = c.intercept.max;
  doc["rate_min"] = c.rate.min;
  doc["rate_max"] = c.rate.max;
  doc["skew"] = c.skew;
  doc["seed"] = c.seed;
  return doc;
}

Json pool_to_json(const ExpertPool& pool) {
  Json doc;
  doc["method"] = std::string(method_tag(pool.method));
  Json experts = Json::array();
  for (const auto& e : pool.experts) {
    Json item;
    item["origin"] = e.origin_id;
    item["slope"] = e.slope;
    if (e.has_intercept()) item["intercept"] = e.intercept;
    experts.push_back(std::move(item));
  }
  doc["experts"] = std::move(experts);
  return doc;
}

ExpertPool pool_from_json(const Json& doc) {
  try {
    ExpertPool pool;
    pool.method = parse_method_tag(doc.at("method").get<std::string>());
    for (const auto& item : doc.at("experts")) {
      Expert e;
      e.source = pool.method;
      e.origin_id = item.at("origin").get<std::string>();
      e.slope = item.at("slope").get<std::vector<double>>();
      if (item.contains("intercept")) e.intercept = item.at("intercept").get<std::vector<double>>();
      pool.experts.push_back(std::move(e));
    }
    return pool;
  } catch (const Json::exception& e) {
    throw DataError(std::string("expert pool: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("expert pool: ") + e.what());
  }
}

Json spatial_to_json(const SpatialClustering& spatial) {
  Json doc;
  doc["clusters"] = spatial.cluster_count();
  doc["min_size"] = spatial.min_size;
  doc["sizes"] = spatial.sizes;
  Json retained = Json::array();
  for (std::size_t c : spatial.retained_clusters()) retained.push_back(c);
  doc["retained"] = std::move(retained);
  Json assignment = Json::object();
  for (std::size_t i = 0; i < spatial.patient_ids.size(); ++i) {
    assignment[spatial.patient_ids[i]] = spatial.assignment[i];
  }
  doc["assignment"] = std::move(assignment);
  return doc;
}

Json ground_truth_to_json(const Cohort& cohort) {
  Json doc;
  doc["patterns"] = cohort.patterns;
  doc["rates"] = cohort.rates;
  Json patients = Json::array();
  for (std::size_t i = 0; i < cohort.patients.size(); ++i) {
    const auto& t = cohort.truth[i];
    Json p;
    p["id"] = cohort.patients[i].id();
    p["cluster"] = t.cluster;
    p["rate_index"] = t.rate_index;
    p["rate"] = t.rate;
    p["slope"] = t.slope;
    p["baseline"] = t.baseline;
    patients.push_back(std::move(p));
  }
  doc["patients"] = std::move(patients);
  return doc;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace vfagg
