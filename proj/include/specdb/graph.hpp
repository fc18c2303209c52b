#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "specdb/dataset.hpp"
#include "specdb/error.hpp"
#include "specdb/matrix.hpp"

namespace specdb {

using index_t = std::uint32_t;

// Symmetric weighted graph in compressed sparse row form. Within a row the
// column indices are strictly increasing; no self loops; weights > 0.
struct SparseGraph {
  std::size_t n_vertices = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<index_t> col_indices;
  std::vector<double> weights;

  std::size_t n_edges() const noexcept { return col_indices.size() / 2; }
  std::size_t degree(std::size_t v) const { return row_offsets[v + 1] - row_offsets[v]; }
  std::span<const index_t> neighbors(std::size_t v) const {
    return {col_indices.data() + row_offsets[v], degree(v)};
  }
  std::span<const double> neighbor_weights(std::size_t v) const {
    return {weights.data() + row_offsets[v], degree(v)};
  }

  friend bool operator==(const SparseGraph&, const SparseGraph&) = default;
};

// Combinatorial Laplacian D - W in CSR form with the diagonal stored in place.
struct LaplacianMatrix {
  std::size_t n_vertices = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<index_t> col_indices;
  std::vector<double> values;

  double diagonal(std::size_t p) const {
    for (std::size_t e = row_offsets[p]; e < row_offsets[p + 1]; ++e) {
      if (col_indices[e] == p) return values[e];
    }
    return 0.0;
  }

  double at(std::size_t p, std::size_t q) const {
    const auto first = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[p]);
    const auto last = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[p + 1]);
    const auto it = std::lower_bound(first, last, static_cast<index_t>(q));
    return (it != last && *it == q) ? values[static_cast<std::size_t>(it - col_indices.begin())] : 0.0;
  }

  // y = L x
  void multiply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t p = 0; p < n_vertices; ++p) {
      double acc = 0.0;
      for (std::size_t e = row_offsets[p]; e < row_offsets[p + 1]; ++e) acc += values[e] * x[col_indices[e]];
      y[p] = acc;
    }
  }

  // Gershgorin bound on the largest eigenvalue: 2 * max diagonal.
  double max_eigenvalue_bound() const {
    double m = 0.0;
    for (std::size_t p = 0; p < n_vertices; ++p) m = std::max(m, diagonal(p));
    return 2.0 * m;
  }

  std::vector<double> to_dense() const {
    std::vector<double> dense(n_vertices * n_vertices, 0.0);
    for (std::size_t p = 0; p < n_vertices; ++p) {
      for (std::size_t e = row_offsets[p]; e < row_offsets[p + 1]; ++e) {
        dense[p * n_vertices + col_indices[e]] = values[e];
      }
    }
    return dense;
  }
};

enum class Weighting { unit, gaussian };

// Directed k-nearest-neighbour lists, row i holding i's neighbours ordered by
// (squared distance, index).
struct KnnLists {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<index_t> indices;
  std::vector<double> sq_dists;

  std::span<const index_t> neighbors(std::size_t i) const { return {indices.data() + i * k, k}; }
  std::span<const double> distances_sq(std::size_t i) const { return {sq_dists.data() + i * k, k}; }
};

// Exact k-NN, self excluded, ties broken by lower index. Candidates are
// scanned outward along the highest-variance coordinate and a side is
// abandoned once the gap on that coordinate alone exceeds the current k-th
// best distance; since that gap is one term of the full squared distance the
// result equals a full pairwise scan.
inline KnnLists knn_lists(const DataMatrix& data, std::size_t k) {
  const std::size_t n = data.rows();
  if (k < 1) throw std::invalid_argument("knn: k must be >= 1");
  if (k >= n) {
    throw std::invalid_argument("knn: k = " + std::to_string(k) + " must be smaller than n = " + std::to_string(n));
  }

  std::size_t axis = 0;
  double best_var = -1.0;
  for (std::size_t j = 0; j < data.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += data(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (data(i, j) - mean) * (data(i, j) - mean);
    if (var > best_var) {
      best_var = var;
      axis = j;
    }
  }

  std::vector<index_t> order(n);
  std::iota(order.begin(), order.end(), index_t{0});
  std::sort(order.begin(), order.end(), [&](index_t a, index_t b) {
    const double pa = data(a, axis);
    const double pb = data(b, axis);
    return pa < pb || (pa == pb && a < b);
  });
  std::vector<std::size_t> position(n);
  for (std::size_t r = 0; r < n; ++r) position[order[r]] = r;

  KnnLists out;
  out.n = n;
  out.k = k;
  out.indices.resize(n * k);
  out.sq_dists.resize(n * k);

  using Candidate = std::pair<double, index_t>;  // max-heap on (d2, index)
  std::vector<Candidate> heap;
  heap.reserve(k + 1);

  for (std::size_t i = 0; i < n; ++i) {
    heap.clear();
    const auto xi = data.row(i);
    const double pi = xi[axis];
    const std::size_t pos = position[i];
    std::size_t left = pos;       // next candidate is order[left - 1]
    std::size_t right = pos + 1;  // next candidate is order[right]
    bool left_open = left > 0;
    bool right_open = right < n;

    auto offer = [&](index_t j) {
      const Candidate c{squared_distance(xi, data.row(j)), j};
      if (heap.size() < k) {
        heap.push_back(c);
        std::push_heap(heap.begin(), heap.end());
      } else if (c < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = c;
        std::push_heap(heap.begin(), heap.end());
      }
    };

    while (left_open || right_open) {
      const double gap_left = left_open ? pi - data(order[left - 1], axis) : std::numeric_limits<double>::infinity();
      const double gap_right = right_open ? data(order[right], axis) - pi : std::numeric_limits<double>::infinity();
      const bool take_left = gap_left <= gap_right;
      const double gap = take_left ? gap_left : gap_right;
      if (heap.size() == k && gap * gap > heap.front().first) break;
      if (take_left) {
        offer(order[--left]);
        left_open = left > 0;
      } else {
        offer(order[right++]);
        right_open = right < n;
      }
    }

    std::sort_heap(heap.begin(), heap.end());
    for (std::size_t t = 0; t < k; ++t) {
      out.sq_dists[i * k + t] = heap[t].first;
      out.indices[i * k + t] = heap[t].second;
    }
  }
  return out;
}

namespace detail {

inline SparseGraph assemble_symmetric(std::size_t n, std::vector<std::pair<std::pair<index_t, index_t>, double>> edges) {
  std::sort(edges.begin(), edges.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  edges.erase(std::unique(edges.begin(), edges.end(), [](const auto& a, const auto& b) { return a.first == b.first; }),
              edges.end());
  SparseGraph g;
  g.n_vertices = n;
  g.row_offsets.assign(n + 1, 0);
  g.col_indices.reserve(edges.size());
  g.weights.reserve(edges.size());
  for (const auto& [pq, w] : edges) {
    ++g.row_offsets[pq.first + 1];
    g.col_indices.push_back(pq.second);
    g.weights.push_back(w);
  }
  std::partial_sum(g.row_offsets.begin(), g.row_offsets.end(), g.row_offsets.begin());
  return g;
}

}  // namespace detail

// Builds a graph from an explicit undirected edge list; each (p, q, w) is
// stored in both directions. Duplicate pairs keep the first weight.
inline SparseGraph graph_from_edges(std::size_t n, std::span<const std::pair<std::pair<index_t, index_t>, double>> edges) {
  std::vector<std::pair<std::pair<index_t, index_t>, double>> both;
  both.reserve(edges.size() * 2);
  for (const auto& [pq, w] : edges) {
    if (pq.first >= n || pq.second >= n) throw std::invalid_argument("graph_from_edges: vertex out of range");
    if (pq.first == pq.second) throw std::invalid_argument("graph_from_edges: self loop");
    if (!(w > 0.0)) throw std::invalid_argument("graph_from_edges: weights must be positive");
    both.push_back({pq, w});
    both.push_back({{pq.second, pq.first}, w});
  }
  std::stable_sort(both.begin(), both.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return detail::assemble_symmetric(n, std::move(both));
}

// Union-symmetrised kNN graph. Gaussian weights use self-tuning scales
// exp(-|xp - xq|^2 / (sigma_p sigma_q)) with sigma_p the distance from p to
// its k-th neighbour. Coincident points get weight 1; a zero scale at a point
// with a non-coincident partner falls back to the edge length.
inline SparseGraph build_knn_graph(const KnnLists& knn, Weighting weighting) {
  const std::size_t n = knn.n;
  const std::size_t k = knn.k;
  std::vector<double> sigma(n);
  for (std::size_t i = 0; i < n; ++i) sigma[i] = std::sqrt(knn.sq_dists[i * k + k - 1]);

  std::vector<std::pair<std::pair<index_t, index_t>, double>> edges;
  edges.reserve(2 * n * k);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t t = 0; t < k; ++t) {
      const index_t q = knn.indices[p * k + t];
      const double d2 = knn.sq_dists[p * k + t];
      double w = 1.0;
      if (weighting == Weighting::gaussian && d2 > 0.0) {
        const double d = std::sqrt(d2);
        const double sp = sigma[p] > 0.0 ? sigma[p] : d;
        const double sq = sigma[q] > 0.0 ? sigma[q] : d;
        w = std::max(std::exp(-d2 / (sp * sq)), std::numeric_limits<double>::min());
      }
      edges.push_back({{static_cast<index_t>(p), q}, w});
      edges.push_back({{q, static_cast<index_t>(p)}, w});
    }
  }
  return detail::assemble_symmetric(n, std::move(edges));
}

inline SparseGraph build_knn_graph(const DataMatrix& data, std::size_t k, Weighting weighting = Weighting::gaussian) {
  return build_knn_graph(knn_lists(data, k), weighting);
}

// L(p,q) = -w(p,q) on edges, L(p,p) = sum of incident weights.
inline LaplacianMatrix laplacian(const SparseGraph& g) {
  LaplacianMatrix L;
  L.n_vertices = g.n_vertices;
  L.row_offsets.assign(g.n_vertices + 1, 0);
  L.col_indices.reserve(g.col_indices.size() + g.n_vertices);
  L.values.reserve(g.col_indices.size() + g.n_vertices);
  for (std::size_t p = 0; p < g.n_vertices; ++p) {
    const auto cols = g.neighbors(p);
    const auto ws = g.neighbor_weights(p);
    double degree = 0.0;
    for (double w : ws) degree += w;
    bool diagonal_done = false;
    for (std::size_t t = 0; t < cols.size(); ++t) {
      if (!diagonal_done && cols[t] > p) {
        L.col_indices.push_back(static_cast<index_t>(p));
        L.values.push_back(degree);
        diagonal_done = true;
      }
      L.col_indices.push_back(cols[t]);
      L.values.push_back(-ws[t]);
    }
    if (!diagonal_done) {
      L.col_indices.push_back(static_cast<index_t>(p));
      L.values.push_back(degree);
    }
    L.row_offsets[p + 1] = L.col_indices.size();
  }
  return L;
}

namespace detail {

template <typename Csr>
std::vector<int> components_of(std::size_t n, const Csr& csr) {
  std::vector<int> id(n, -1);
  std::vector<std::size_t> stack;
  int next = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (id[s] >= 0) continue;
    id[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      for (std::size_t e = csr.row_offsets[v]; e < csr.row_offsets[v + 1]; ++e) {
        const std::size_t u = csr.col_indices[e];
        if (id[u] < 0) {
          id[u] = next;
          stack.push_back(u);
        }
      }
    }
    ++next;
  }
  return id;
}

}  // namespace detail

// Component ids numbered in order of each component's lowest vertex.
inline std::vector<int> connected_components(const SparseGraph& g) {
  return detail::components_of(g.n_vertices, g);
}

inline std::vector<int> connected_components(const LaplacianMatrix& L) {
  return detail::components_of(L.n_vertices, L);
}

// Checks every structural invariant of SparseGraph. Returns an empty string
// when the graph is well formed, otherwise a description of the first defect.
inline std::string validate(const SparseGraph& g) {
  if (g.row_offsets.size() != g.n_vertices + 1) return "row_offsets has wrong length";
  if (g.row_offsets.front() != 0 || g.row_offsets.back() != g.col_indices.size()) return "row_offsets out of range";
  if (g.weights.size() != g.col_indices.size()) return "weights and col_indices differ in length";
  for (std::size_t p = 0; p < g.n_vertices; ++p) {
    if (g.row_offsets[p] > g.row_offsets[p + 1]) return "row_offsets not monotone";
    const auto cols = g.neighbors(p);
    const auto ws = g.neighbor_weights(p);
    for (std::size_t t = 0; t < cols.size(); ++t) {
      if (cols[t] >= g.n_vertices) return "column out of range in row " + std::to_string(p);
      if (cols[t] == p) return "self loop at " + std::to_string(p);
      if (!(ws[t] > 0.0)) return "non-positive weight in row " + std::to_string(p);
      if (t > 0 && cols[t] <= cols[t - 1]) return "columns not strictly increasing in row " + std::to_string(p);
      const auto back = g.neighbors(cols[t]);
      const auto it = std::lower_bound(back.begin(), back.end(), static_cast<index_t>(p));
      if (it == back.end() || *it != p) return "missing reverse edge for " + std::to_string(p);
      if (g.neighbor_weights(cols[t])[static_cast<std::size_t>(it - back.begin())] != ws[t]) {
        return "asymmetric weight on edge " + std::to_string(p) + "-" + std::to_string(cols[t]);
      }
    }
  }
  return {};
}

// Text edge list: "p q w" for p < q, lexicographic order.
inline void write_edge_list(std::ostream& out, const SparseGraph& g) {
  for (std::size_t p = 0; p < g.n_vertices; ++p) {
    const auto cols = g.neighbors(p);
    const auto ws = g.neighbor_weights(p);
    for (std::size_t t = 0; t < cols.size(); ++t) {
      if (cols[t] > p) out << p << ' ' << cols[t] << ' ' << format_real(ws[t]) << '\n';
    }
  }
}

inline void write_edge_list(const std::string& path, const SparseGraph& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_edge_list(out, g);
}

}  // namespace specdb
