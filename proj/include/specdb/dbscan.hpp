#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "specdb/dataset.hpp"
#include "specdb/error.hpp"
#include "specdb/graph.hpp"
#include "specdb/labels.hpp"
#include "specdb/matrix.hpp"

namespace specdb {

struct DbscanParams {
  double eps = 0.0;
  std::size_t min_pts = 1;  // counts the query point itself

  void validate() const {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("dbscan: eps must be a positive finite number");
    if (min_pts < 1) throw std::invalid_argument("dbscan: min_pts must be >= 1");
  }
};

// Indices j (including i) with |x_i - x_j| <= eps, ascending.
inline std::vector<index_t> region_query(const DataMatrix& data, std::size_t i, double eps) {
  if (i >= data.rows()) throw std::out_of_range("region_query: index out of range");
  const double eps2 = eps * eps;
  const auto xi = data.row(i);
  std::vector<index_t> out;
  for (std::size_t j = 0; j < data.rows(); ++j) {
    if (squared_distance(xi, data.row(j)) <= eps2) out.push_back(static_cast<index_t>(j));
  }
  return out;
}

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // The smaller index becomes the root, so roots are component minima.
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) {
      parent_[b] = a;
    } else {
      parent_[a] = b;
    }
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

// Deterministic exact DBSCAN over all pairs.
//  - core: neighbourhood size (or total weight, when weights are given) >= min_pts
//  - clusters: connected components of cores within eps of each other
//  - border: non-core within eps of a core, joined to the lowest-indexed such core
//  - cluster ids ascend with each cluster's lowest core index; the rest is noise
// `weights`, when non-empty, gives each point's multiplicity.
inline ClusterLabels dbscan(const DataMatrix& data, const DbscanParams& params,
                            std::span<const std::size_t> weights = {}) {
  params.validate();
  const std::size_t n = data.rows();
  if (!weights.empty() && weights.size() != n) throw std::invalid_argument("dbscan: weights length must equal n");
  const double eps2 = params.eps * params.eps;
  auto weight = [&](std::size_t i) -> std::size_t { return weights.empty() ? 1 : weights[i]; };

  std::vector<std::size_t> density(n);
  for (std::size_t i = 0; i < n; ++i) density[i] = weight(i);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = data.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (squared_distance(xi, data.row(j)) <= eps2) {
        density[i] += weight(j);
        density[j] += weight(i);
      }
    }
  }
  std::vector<char> core(n);
  for (std::size_t i = 0; i < n; ++i) core[i] = density[i] >= params.min_pts;

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  detail::DisjointSets sets(n);
  std::vector<std::size_t> owner(n, kNone);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = data.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!core[i] && !core[j]) continue;
      if (squared_distance(xi, data.row(j)) > eps2) continue;
      if (core[i] && core[j]) {
        sets.unite(i, j);
      } else if (core[j]) {
        owner[i] = std::min(owner[i], j);
      } else if (owner[j] == kNone) {
        owner[j] = i;  // i ascends, so the first claim is the lowest
      }
    }
  }

  ClusterLabels out;
  out.labels.assign(n, kNoise);
  std::vector<int> id_of_root(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i]) continue;
    const std::size_t root = sets.find(i);
    if (id_of_root[root] < 0) id_of_root[root] = out.n_clusters++;
    out.labels[i] = id_of_root[root];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] && owner[i] != kNone) out.labels[i] = out.labels[owner[i]];
  }
  return out;
}

// Nearest-rank percentile of each point's distance to its k-th neighbour.
inline double suggest_eps(const DataMatrix& data, std::size_t k, double percentile) {
  if (!(percentile > 0.0 && percentile <= 100.0)) throw std::invalid_argument("suggest_eps: percentile must be in (0, 100]");
  const KnnLists knn = knn_lists(data, k);
  std::vector<double> kdist(knn.n);
  for (std::size_t i = 0; i < knn.n; ++i) kdist[i] = std::sqrt(knn.sq_dists[i * k + k - 1]);
  std::sort(kdist.begin(), kdist.end());
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(kdist.size())));
  rank = std::clamp<std::size_t>(rank, 1, kdist.size());
  return kdist[rank - 1];
}

// One id per line, -1 for noise.
inline void write_labels(std::ostream& out, const ClusterLabels& labels) {
  for (int id : labels.labels) out << id << '\n';
}

inline void write_labels(const std::string& path, const ClusterLabels& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_labels(out, labels);
}

inline ClusterLabels read_labels(const std::string& path) {
  const std::string text = detail::read_file(path);
  auto lines = detail::split_lines(text);
  while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
  ClusterLabels out;
  out.labels.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto id = detail::parse_int(detail::trim(lines[i]));
    if (!id || *id < kNoise) throw ParseError("bad cluster label", i + 1);
    out.labels.push_back(*id);
    out.n_clusters = std::max(out.n_clusters, *id + 1);
  }
  if (!out.valid()) throw FormatError("cluster ids in " + path + " are not contiguous");
  return out;
}

}  // namespace specdb
