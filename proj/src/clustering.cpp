#include "vfagg/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include <Eigen/Core>

#include "vfagg/rng.hpp"

namespace vfagg {

namespace {

double sq_dist(const double* a, const double* b, std::size_t dim) {
  if (dim == 1) {
    const double d = a[0] - b[0];
    return d * d;
  }
  const Eigen::Index n = static_cast<Eigen::Index>(dim);
  return (Eigen::Map<const Eigen::ArrayXd>(a, n) - Eigen::Map<const Eigen::ArrayXd>(b, n)).square().sum();
}

// Row-major k x dim block of centers.
struct Centers {
  std::size_t dim = 0;
  std::vector<double> data;

  std::size_t size() const noexcept { return dim == 0 ? 0 : data.size() / dim; }
  double* operator[](std::size_t c) { return data.data() + c * dim; }
  const double* operator[](std::size_t c) const { return data.data() + c * dim; }
  void push(std::span<const double> x) { data.insert(data.end(), x.begin(), x.end()); }
};

struct Nearest {
  std::size_t index;
  double distance;
};

Nearest nearest_center(const double* x, const Centers& centers) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  const std::size_t k = centers.size();
  if (centers.dim == 1) {
    for (std::size_t c = 0; c < k; ++c) {
      const double diff = x[0] - centers.data[c];
      const double d = diff * diff;
      if (d < best.distance) best = {c, d};
    }
    return best;
  }
  for (std::size_t c = 0; c < k; ++c) {
    const double d = sq_dist(x, centers[c], centers.dim);
    if (d < best.distance) best = {c, d};
  }
  return best;
}

// 1-D assignment by one sweep over points in ascending order. The nearest
// center moves right monotonically, so a pointer over the sorted centers
// finds the same argmin (lowest index on ties) as the full scan.
void assign_sorted(const PointSet& points, const std::vector<std::size_t>& order, const Centers& centers,
                   std::vector<std::size_t>& assignment, std::vector<double>& dist,
                   std::vector<std::size_t>& center_order) {
  const std::size_t k = centers.size();
  const std::vector<double>& c = centers.data;
  center_order.resize(k);
  for (std::size_t i = 0; i < k; ++i) center_order[i] = i;
  std::sort(center_order.begin(), center_order.end(),
            [&](std::size_t a, std::size_t b) { return c[a] < c[b] || (c[a] == c[b] && a < b); });
  std::size_t pos = 0;
  for (std::size_t i : order) {
    const double x = points[i][0];
    auto d = [&](std::size_t q) {
      const double diff = x - c[center_order[q]];
      return diff * diff;
    };
    double here = d(pos);
    while (pos + 1 < k) {
      const double next = d(pos + 1);
      if (next > here) break;
      ++pos;
      here = next;
    }
    std::size_t best = center_order[pos];
    for (std::size_t q = pos; q > 0 && d(q - 1) == here; --q) best = std::min(best, center_order[q - 1]);
    assignment[i] = best;
    dist[i] = here;
  }
}

Centers seed_plus_plus(const PointSet& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.size();
  const std::size_t dim = points.dim();
  Centers centers{dim, {}};
  centers.data.reserve(k * dim);
  centers.push(points[rng.index(n)]);

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(points[i].data(), centers[0], dim);

  while (centers.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (!(total > 0.0)) break;  // every point already coincides with a center

    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      chosen = i;
      if (acc > target) break;
    }
    centers.push(points[chosen]);
    const double* last = centers[centers.size() - 1];
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points[i].data(), last, dim));
  }
  return centers;
}

// Mean anchored at the first member so that a cluster of identical points
// reproduces its value exactly.
void update_centers(const PointSet& points, const std::vector<std::size_t>& assignment,
                    Centers& centers, std::vector<double>& shift, std::vector<std::size_t>& anchor,
                    std::vector<std::size_t>& counts, std::vector<double>& scratch) {
  const std::size_t dim = points.dim();
  const std::size_t k = centers.size();
  shift.assign(k * dim, 0.0);
  counts.assign(k, 0);
  anchor.assign(k, 0);
  if (dim == 1) {
    std::vector<double>& base = scratch;
    base.assign(k, 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t c = assignment[i];
      const double x = points[i][0];
      if (counts[c]++ == 0) {
        anchor[c] = i;
        base[c] = x;
      }
      shift[c] += x - base[c];
    }
  } else {
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t c = assignment[i];
      if (counts[c] == 0) anchor[c] = i;
      ++counts[c];
      const double* x = points[i].data();
      const double* base = points[anchor[c]].data();
      double* sh = shift.data() + c * dim;
      for (std::size_t j = 0; j < dim; ++j) sh[j] += x[j] - base[j];
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    const double* base = points[anchor[c]].data();
    const double* sh = shift.data() + c * dim;
    double* center = centers[c];
    for (std::size_t j = 0; j < dim; ++j) {
      center[j] = base[j] + sh[j] / static_cast<double>(counts[c]);
    }
  }
}

// `order` sorts one-dimensional points ascending; empty otherwise.
KMeansResult lloyd(const PointSet& points, Centers centers, const KMeansOptions& options,
                   const std::vector<std::size_t>& order) {
  const std::size_t n = points.size();
  const std::size_t dim = points.dim();
  const std::size_t k = centers.size();
  KMeansResult result;
  result.assignment.assign(n, 0);
  std::vector<double> dist(n, 0.0);
  std::vector<double> shift, scratch;
  std::vector<std::size_t> anchor, counts, sizes(k), center_order;
  double previous = std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    double objective = 0.0;
    if (!order.empty()) {
      assign_sorted(points, order, centers, result.assignment, dist, center_order);
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const Nearest near = nearest_center(points[i].data(), centers);
        result.assignment[i] = near.index;
        dist[i] = near.distance;
      }
    }

    // Empty clusters take the point farthest from its current center.
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t a : result.assignment) ++sizes[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t far = n;
      double far_dist = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[result.assignment[i]] > 1 && dist[i] > far_dist) {
          far = i;
          far_dist = dist[i];
        }
      }
      if (far == n) continue;
      --sizes[result.assignment[far]];
      std::copy_n(points[far].data(), dim, centers[c]);
      result.assignment[far] = c;
      dist[far] = 0.0;
      sizes[c] = 1;
    }

    for (double d : dist) objective += d;
    result.objective_trace.push_back(objective);

    update_centers(points, result.assignment, centers, shift, anchor, counts, scratch);

    const bool converged =
        objective == 0.0 ||
        (std::isfinite(previous) && (previous - objective) <= options.tolerance * previous);
    previous = objective;
    if (converged) break;
  }

  // Final assignment against the updated centers; cannot raise the objective.
  double objective = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = points[i].data();
    const Nearest near = nearest_center(x, centers);
    if (near.distance < sq_dist(x, centers[result.assignment[i]], dim)) {
      result.assignment[i] = near.index;
    }
    objective += sq_dist(x, centers[result.assignment[i]], dim);
  }
  result.objective = objective;
  result.objective_trace.push_back(objective);
  result.centers.reserve(k);
  for (std::size_t c = 0; c < k; ++c) result.centers.emplace_back(centers[c], centers[c] + dim);
  return result;
}

}  // namespace

void PointSet::add(std::span<const double> point) {
  if (point.size() != dim_) throw std::invalid_argument("PointSet::add: dimension mismatch");
  data_.insert(data_.end(), point.begin(), point.end());
}

KMeansResult kmeans(const PointSet& points, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options) {
  if (k == 0) throw std::invalid_argument("kmeans: k must be positive");
  if (points.size() < k) {
    throw std::invalid_argument("kmeans: " + std::to_string(points.size()) +
                                " points cannot form " + std::to_string(k) + " clusters");
  }
  KMeansResult best;
  best.objective = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order;
  if (points.dim() == 1) {
    order.resize(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return points[a][0] < points[b][0]; });
  }
  const std::size_t restarts = std::max<std::size_t>(1, options.restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, {r}));
    KMeansResult run = lloyd(points, seed_plus_plus(points, k, rng), options, order);
    if (run.objective < best.objective) best = std::move(run);
  }
  return best;
}

std::vector<std::size_t> SpatialClustering::members(std::size_t cluster) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == cluster) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> SpatialClustering::retained_clusters() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < retained.size(); ++c) {
    if (retained[c]) out.push_back(c);
  }
  return out;
}

std::vector<double> patient_feature(const PatientSeries& series) {
  return ols_slope(series.observations());
}

SpatialClustering cluster_spatial(std::span<const PatientSeries> cohort, std::size_t k,
                                  std::size_t min_size, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("cluster_spatial: K must be positive");
  if (cohort.size() < k) {
    throw std::invalid_argument("cluster_spatial: cohort of " + std::to_string(cohort.size()) +
                                " patients is smaller than K = " + std::to_string(k));
  }
  PointSet features(cohort.front().dimension());
  SpatialClustering out;
  out.min_size = min_size;
  for (const auto& patient : cohort) {
    std::vector<double> f = patient_feature(patient);
    double norm = 0.0;
    for (double v : f) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& v : f) v /= norm;
    }
    features.add(f);
    out.patient_ids.push_back(patient.id());
  }

  KMeansResult km = kmeans(features, k, seed);
  out.assignment = std::move(km.assignment);
  out.centers = std::move(km.centers);
  out.sizes.assign(out.centers.size(), 0);
  for (std::size_t a : out.assignment) ++out.sizes[a];
  out.retained.resize(out.centers.size());
  for (std::size_t c = 0; c < out.centers.size(); ++c) out.retained[c] = out.sizes[c] >= min_size;
  return out;
}

SlopeSet cluster_slopes(std::span<const std::vector<double>> member_slopes, std::size_t c,
                        std::uint64_t seed) {
  if (c == 0) throw std::invalid_argument("cluster_slopes: C must be positive");
  if (member_slopes.empty()) throw std::invalid_argument("cluster_slopes: no members");

  PointSet pooled(1);
  for (const auto& slopes : member_slopes) {
    for (double s : slopes) pooled.add(std::span<const double>(&s, 1));
  }
  const std::size_t groups = std::min(c, pooled.size());
  KMeansResult km = kmeans(pooled, groups, seed);

  // Relabel so rates ascend.
  std::vector<std::size_t> order(km.centers.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return km.centers[a][0] < km.centers[b][0]; });
  std::vector<std::size_t> relabel(order.size());
  SlopeSet out;
  for (std::size_t r = 0; r < order.size(); ++r) {
    relabel[order[r]] = r;
    out.rates.push_back(km.centers[order[r]][0]);
  }

  std::size_t flat = 0;
  for (const auto& slopes : member_slopes) {
    std::vector<std::size_t> row(slopes.size());
    for (std::size_t j = 0; j < slopes.size(); ++j) row[j] = relabel[km.assignment[flat++]];
    out.assignment.push_back(std::move(row));
  }
  return out;
}

SlopeSet cluster_slopes(std::span<const PatientSeries> members, std::size_t c, std::uint64_t seed) {
  std::vector<std::vector<double>> slopes;
  slopes.reserve(members.size());
  for (const auto& m : members) slopes.push_back(patient_feature(m));
  return cluster_slopes(slopes, c, seed);
}

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw std::invalid_argument("adjusted_rand_index: length mismatch");
  const double n = static_cast<double>(a.size());
  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };

  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [_, v] : joint) index += choose2(v);
  for (const auto& [_, v] : rows) sum_rows += choose2(v);
  for (const auto& [_, v] : cols) sum_cols += choose2(v);
  const double expected = sum_rows * sum_cols / choose2(n);
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;  // both partitions trivial
  return (index - expected) / (max_index - expected);
}

}  // namespace vfagg
