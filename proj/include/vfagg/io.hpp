#pragma once

// File formats: the JSON-lines cohort dataset, the flat JSON config shared
// by every subcommand, and JSON dumps of expert pools and ground truth.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include "json.hpp"
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vfagg/clustering.hpp"
#include "vfagg/core.hpp"
#include "vfagg/evaluation.hpp"
#include "vfagg/experts.hpp"
#include "vfagg/synthdata.hpp"

namespace vfagg {

using Json = nlohmann::ordered_json;

/// Malformed input data; the message carries the source line when known.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration document or value; the message names the field.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// One JSON object per line: {"id", "observations": [{"date", "values": [D]}]}.
/// Blank lines are skipped. Throws DataError with the 1-based line number.
std::vector<PatientSeries> read_dataset(std::istream& in, std::optional<std::size_t> dimension = {});
std::vector<PatientSeries> read_dataset(const std::filesystem::path& path,
                                        std::optional<std::size_t> dimension = {});

void write_dataset(std::ostream& out, std::span<const PatientSeries> patients);
void write_dataset(const std::filesystem::path& path, std::span<const PatientSeries> patients);

/// Reads a flat JSON object; throws ConfigError on parse failure.
Json load_config(const std::filesystem::path& path);

/// Both parsers accept the union of run and cohort keys, so one file can
/// drive every subcommand. Unknown keys and bad values raise ConfigError.
RunConfig parse_run_config(const Json& doc, RunConfig base = {});
CohortConfig parse_cohort_config(const Json& doc, CohortConfig base = {});

Json run_config_to_json(const RunConfig& config);
Json cohort_config_to_json(const CohortConfig& config);

/// {"method", "experts": [{"origin", "slope", "intercept"?}]}
Json pool_to_json(const ExpertPool& pool);
ExpertPool pool_from_json(const Json& doc);

Json spatial_to_json(const SpatialClustering& spatial);
Json ground_truth_to_json(const Cohort& cohort);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace vfagg
