#include "vfagg/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vfagg {

namespace {

void require_same_size(const VisualField& a, const VisualField& b, const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                                ")");
  }
}

double squared_distance(const VisualField& a, const VisualField& b) {
  double sum = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    sum += diff * diff;
  }
  return sum;
}

}  // namespace

VisualField::VisualField(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) {
    throw std::invalid_argument("VisualField: no values");
  }
  for (std::size_t j = 0; j < values_.size(); ++j) {
    const double v = values_[j];
    if (!std::isfinite(v)) {
      throw std::invalid_argument("VisualField: value " + std::to_string(j) + " is missing or non-finite");
    }
    if (v < kTdFloor || v > kTdCeiling) {
      throw std::invalid_argument("VisualField: value " + std::to_string(j) + " = " +
                                  std::to_string(v) + " outside [-30, 0]");
    }
  }
}

VisualField VisualField::clamped(std::vector<double> raw) {
  for (double& v : raw) {
    if (!std::isnan(v)) v = std::clamp(v, kTdFloor, kTdCeiling);
  }
  return VisualField(std::move(raw));
}

PatientSeries::PatientSeries(std::string id, std::vector<Observation> observations)
    : id_(std::move(id)), observations_(std::move(observations)) {
  if (observations_.size() < 2) {
    throw std::invalid_argument("PatientSeries '" + id_ + "': needs at least 2 observations");
  }
  const std::size_t dim = observations_.front().field.size();
  for (std::size_t t = 0; t < observations_.size(); ++t) {
    const auto& obs = observations_[t];
    if (obs.field.size() != dim || dim == 0) {
      throw std::invalid_argument("PatientSeries '" + id_ + "': observation " + std::to_string(t) +
                                  " has inconsistent dimension");
    }
    if (!std::isfinite(obs.date)) {
      throw std::invalid_argument("PatientSeries '" + id_ + "': non-finite date");
    }
    if (t > 0 && !(obs.date > observations_[t - 1].date)) {
      throw std::invalid_argument("PatientSeries '" + id_ + "': dates must strictly increase");
    }
  }
}

std::span<const Observation> PatientSeries::prefix(std::size_t n) const {
  if (n == 0 || n > observations_.size()) {
    throw std::out_of_range("PatientSeries::prefix: n = " + std::to_string(n) +
                            " outside [1, " + std::to_string(observations_.size()) + "]");
  }
  return std::span<const Observation>(observations_).first(n);
}

std::string_view method_tag(Method m) {
  switch (m) {
    case Method::PatientWiseLR: return "lr";
    case Method::TSLR: return "tslr";
    case Method::SlopeClustering: return "sc";
  }
  return "?";
}

Method parse_method_tag(std::string_view tag) {
  if (tag == "lr") return Method::PatientWiseLR;
  if (tag == "tslr") return Method::TSLR;
  if (tag == "sc") return Method::SlopeClustering;
  throw std::invalid_argument("unknown method tag '" + std::string(tag) + "'");
}

double loss(const VisualField& x, const VisualField& y) {
  require_same_size(x, y, "loss");
  const double d = static_cast<double>(x.size());
  return std::sqrt(squared_distance(x, y)) / (30.0 * std::sqrt(d));
}

double rmse(const VisualField& pred, const VisualField& obs) {
  require_same_size(pred, obs, "rmse");
  return std::sqrt(squared_distance(pred, obs) / static_cast<double>(pred.size()));
}

VisualField predict_linear(const Expert& expert, double date) {
  if (!expert.has_intercept()) {
    throw std::logic_error("predict_linear: expert '" + expert.origin_id + "' has no intercept");
  }
  if (expert.slope.size() != expert.intercept.size()) {
    throw std::invalid_argument("predict_linear: slope/intercept dimension mismatch");
  }
  std::vector<double> raw(expert.slope.size());
  for (std::size_t j = 0; j < raw.size(); ++j) {
    raw[j] = expert.slope[j] * date + expert.intercept[j];
  }
  return VisualField::clamped(std::move(raw));
}

std::vector<double> fit_intercept(std::span<const double> slope,
                                  std::span<const Observation> prefix) {
  if (prefix.empty()) {
    throw std::invalid_argument("fit_intercept: empty prefix");
  }
  std::vector<double> intercept(slope.size(), 0.0);
  for (const auto& obs : prefix) {
    if (obs.field.size() != slope.size()) {
      throw std::invalid_argument("fit_intercept: dimension mismatch");
    }
    for (std::size_t j = 0; j < slope.size(); ++j) {
      intercept[j] += obs.field[j] - slope[j] * obs.date;
    }
  }
  const double count = static_cast<double>(prefix.size());
  for (double& b : intercept) b /= count;
  return intercept;
}

std::vector<double> ols_slope(std::span<const Observation> observations) {
  if (observations.size() < 2) {
    throw std::invalid_argument("ols_slope: need at least 2 observations");
  }
  const std::size_t dim = observations.front().field.size();
  double mean_date = 0.0;
  for (const auto& obs : observations) mean_date += obs.date;
  mean_date /= static_cast<double>(observations.size());

  double sxx = 0.0;
  for (const auto& obs : observations) sxx += (obs.date - mean_date) * (obs.date - mean_date);
  if (!(sxx > 0.0)) {
    throw std::invalid_argument("ols_slope: all dates equal");
  }

  std::vector<double> mean_y(dim, 0.0);
  for (const auto& obs : observations) {
    if (obs.field.size() != dim) throw std::invalid_argument("ols_slope: dimension mismatch");
    for (std::size_t j = 0; j < dim; ++j) mean_y[j] += obs.field[j];
  }
  for (double& m : mean_y) m /= static_cast<double>(observations.size());

  std::vector<double> slope(dim, 0.0);
  for (const auto& obs : observations) {
    const double dx = obs.date - mean_date;
    for (std::size_t j = 0; j < dim; ++j) slope[j] += dx * (obs.field[j] - mean_y[j]);
  }
  for (double& s : slope) s /= sxx;
  return slope;
}

}  // namespace vfagg
