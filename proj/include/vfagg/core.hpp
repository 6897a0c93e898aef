#pragma once

// Domain types for visual-field series and the shared linear-predictor
// mechanics (loss, RMSE, prediction with clamping, intercept fitting).

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vfagg {

inline constexpr double kTdFloor = -30.0;
inline constexpr double kTdCeiling = 0.0;
inline constexpr std::size_t kDefaultFieldSize = 74;

/// One examination: D total-deviation values in dB, each in [-30, 0].
class VisualField {
public:
  VisualField() = default;

  /// Throws std::invalid_argument on empty input, non-finite or out-of-range values.
  explicit VisualField(std::vector<double> values);

  /// Clamps every component into [-30, 0] before constructing.
  static VisualField clamped(std::vector<double> raw);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t j) const { return values_[j]; }
  std::span<const double> values() const noexcept { return values_; }

  bool operator==(const VisualField&) const = default;

private:
  std::vector<double> values_;
};

struct Observation {
  double date = 0.0;  // years
  VisualField field;
};

/// Ordered observations of one patient. Dates strictly increase, at least two
/// observations, every field of the same dimension.
class PatientSeries {
public:
  PatientSeries(std::string id, std::vector<Observation> observations);

  const std::string& id() const noexcept { return id_; }
  std::size_t length() const noexcept { return observations_.size(); }
  std::size_t dimension() const noexcept { return observations_.front().field.size(); }
  std::span<const Observation> observations() const noexcept { return observations_; }
  const Observation& operator[](std::size_t t) const { return observations_[t]; }
  const Observation& back() const noexcept { return observations_.back(); }

  /// First n observations, 1 <= n <= length().
  std::span<const Observation> prefix(std::size_t n) const;

private:
  std::string id_;
  std::vector<Observation> observations_;
};

enum class Method { PatientWiseLR, TSLR, SlopeClustering };

std::string_view method_tag(Method m);
Method parse_method_tag(std::string_view tag);

/// Linear trajectory y(t) = slope * t + intercept. The intercept is empty
/// until fit against a target patient's observations.
struct Expert {
  std::vector<double> slope;      // dB/year
  std::vector<double> intercept;  // dB
  Method source = Method::PatientWiseLR;
  std::string origin_id;

  bool has_intercept() const noexcept { return !intercept.empty(); }
};

/// ||x - y||_2 / (30 sqrt(D)); lies in [0, 1] for valid fields.
double loss(const VisualField& x, const VisualField& y);

/// sqrt(sum_j (pred_j - obs_j)^2 / D), in dB.
double rmse(const VisualField& pred, const VisualField& obs);

/// slope * date + intercept, clamped into [-30, 0].
VisualField predict_linear(const Expert& expert, double date);

/// Least-squares intercept for a fixed slope: mean over t of (y_t - slope * d_t).
std::vector<double> fit_intercept(std::span<const double> slope,
                                  std::span<const Observation> prefix);

/// Per-point ordinary least-squares slope of TD against date.
/// Throws std::invalid_argument if fewer than two observations or all dates equal.
std::vector<double> ols_slope(std::span<const Observation> observations);

}  // namespace vfagg
