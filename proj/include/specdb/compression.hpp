#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "specdb/dataset.hpp"
#include "specdb/embedding.hpp"
#include "specdb/error.hpp"
#include "specdb/graph.hpp"
#include "specdb/labels.hpp"
#include "specdb/matrix.hpp"

namespace specdb {

// Squared cosine between two spectral coordinate rows:
//   (x_u . x_v)^2 / ((x_u . x_u)(x_v . x_v))
// i.e. the fraction of variance of one explained by regressing on the other.
// A zero row is dissimilar to everything.
inline double spectral_similarity(std::span<const double> xu, std::span<const double> xv) {
  if (xu.size() != xv.size() || xu.empty()) {
    throw std::invalid_argument("spectral_similarity: vectors must have the same nonzero length");
  }
  double uv = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t k = 0; k < xu.size(); ++k) {
    uv += xu[k] * xv[k];
    uu += xu[k] * xu[k];
    vv += xv[k] * xv[k];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return std::min(1.0, (uv * uv) / (uu * vv));
}

// One coarsening step: point i of the input level goes to aggregate
// assignment[i] of the output level.
struct AggregationPass {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  std::vector<index_t> assignment;
  std::vector<std::size_t> sizes;

  static AggregationPass from_assignment(std::vector<index_t> assignment, std::size_t n_out) {
    AggregationPass pass;
    pass.n_in = assignment.size();
    pass.n_out = n_out;
    pass.sizes.assign(n_out, 0);
    for (index_t a : assignment) {
      if (a >= n_out) throw std::invalid_argument("AggregationPass: output index out of range");
      ++pass.sizes[a];
    }
    if (std::find(pass.sizes.begin(), pass.sizes.end(), std::size_t{0}) != pass.sizes.end()) {
      throw std::invalid_argument("AggregationPass: empty aggregate");
    }
    pass.assignment = std::move(assignment);
    return pass;
  }
};

struct CompressionHierarchy {
  std::vector<AggregationPass> passes;
  std::size_t n_original = 0;
  std::size_t n_final = 0;
  DataMatrix pseudo_samples;                  // n_final x D (empty when loaded from a map file)
  std::vector<std::size_t> cumulative_sizes;  // original points per final pseudo-sample
};

// Coincidence class of every row: the lowest index holding an identical row.
inline std::vector<index_t> coincident_classes(const DataMatrix& data) {
  const std::size_t n = data.rows();
  std::vector<index_t> order(n);
  std::iota(order.begin(), order.end(), index_t{0});
  std::stable_sort(order.begin(), order.end(), [&](index_t a, index_t b) {
    const auto x = data.row(a);
    const auto y = data.row(b);
    return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
  });
  std::vector<index_t> cls(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool same = i > 0 && std::ranges::equal(data.row(order[i]), data.row(order[i - 1]));
    cls[order[i]] = same ? cls[order[i - 1]] : order[i];
  }
  return cls;
}

// Greedy similarity matching over graph edges.
//
// Phase 0 only runs when `coincident` is given: it holds a class per vertex
// shared by exactly the vertices with identical feature rows (see
// coincident_classes). In index order every copy joins the aggregate of its
// lowest-index twin. Exact copies can end up with slightly different
// embedding rows through index tie-breaking in the kNN graph, so they are
// merged on the data rather than on the spectrum.
//
// Phase 1 visits vertices in descending degree (ties: lower index) and pairs
// each unmatched vertex with its unmatched graph neighbour of highest
// spectral similarity (ties: lower index).
//
// Phase 2 visits the still-unmatched vertices in the same order and merges
// each into the nearest aggregate centroid in embedding space, where
// unmatched vertices count as singleton aggregates.
//
// Phase 3 only runs for targets phase 2 cannot reach (below about n/2): in
// rounds, each aggregate not yet merged this round (ascending size, then id)
// merges with the nearest other such aggregate by centroid distance, and the
// lower id survives. Ids are then compacted in order.
//
// All phases stop as soon as target_n_out aggregates remain. Output indices
// follow creation order; untouched vertices become trailing singletons in
// index order.
inline AggregationPass aggregate_pass(const SpectralEmbedding& emb, const SparseGraph& g, std::size_t target_n_out,
                                      std::span<const index_t> coincident = {}) {
  const std::size_t n = g.n_vertices;
  if (emb.n_points != n) throw std::invalid_argument("aggregate_pass: embedding and graph sizes differ");
  if (!coincident.empty() && coincident.size() != n) {
    throw std::invalid_argument("aggregate_pass: coincidence classes and graph sizes differ");
  }
  if (target_n_out < 1) throw std::invalid_argument("aggregate_pass: target must be >= 1");
  if (target_n_out >= n) {
    throw std::invalid_argument("aggregate_pass: target " + std::to_string(target_n_out) + " must be below n = " +
                                std::to_string(n));
  }
  const std::size_t r = emb.r;
  constexpr index_t kUnassigned = std::numeric_limits<index_t>::max();
  std::vector<index_t> agg(n, kUnassigned);
  std::size_t live = n;
  index_t next_id = 0;

  for (std::size_t u = 0; u < coincident.size() && live > target_n_out; ++u) {
    const index_t rep = coincident[u];
    if (rep == u) continue;
    if (rep > u || coincident[rep] != rep) throw std::invalid_argument("aggregate_pass: malformed coincidence classes");
    if (agg[rep] == kUnassigned) agg[rep] = next_id++;
    agg[u] = agg[rep];
    --live;
  }

  // Vertices by descending degree, ties by lower index.
  std::vector<index_t> order(n);
  std::iota(order.begin(), order.end(), index_t{0});
  std::stable_sort(order.begin(), order.end(), [&](index_t a, index_t b) { return g.degree(a) > g.degree(b); });

  for (index_t u : order) {
    if (live == target_n_out) break;
    if (agg[u] != kUnassigned) continue;
    const auto x = emb.row(u);
    double best = -1.0;
    index_t partner = kUnassigned;
    for (index_t v : g.neighbors(u)) {
      if (agg[v] != kUnassigned) continue;
      const double s = spectral_similarity(x, emb.row(v));
      if (s > best || (s == best && v < partner)) {
        best = s;
        partner = v;
      }
    }
    if (partner == kUnassigned) continue;
    agg[u] = agg[partner] = next_id++;
    --live;
  }

  // Centroids of the aggregates, in embedding coordinates.
  std::vector<double> centroid(static_cast<std::size_t>(next_id) * r, 0.0);
  std::vector<std::size_t> members(next_id, 0);
  for (std::size_t u = 0; u < n; ++u) {
    if (agg[u] == kUnassigned) continue;
    const auto x = emb.row(u);
    double* c = &centroid[static_cast<std::size_t>(agg[u]) * r];
    for (std::size_t k = 0; k < r; ++k) c[k] += x[k];
    ++members[agg[u]];
  }
  for (std::size_t a = 0; a < next_id; ++a) {
    for (std::size_t k = 0; k < r; ++k) centroid[a * r + k] /= static_cast<double>(members[a]);
  }

  // Squared distance with early exit once it cannot beat `bound`.
  auto distance_below = [r](const double* a, const double* b, double bound) {
    double acc = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
      const double diff = a[k] - b[k];
      acc += diff * diff;
      if (acc >= bound) return acc;
    }
    return acc;
  };

  if (live > target_n_out) {
    std::vector<index_t> unmatched;  // ascending index
    for (std::size_t u = 0; u < n; ++u) {
      if (agg[u] == kUnassigned) unmatched.push_back(static_cast<index_t>(u));
    }

    for (index_t u : order) {
      if (live == target_n_out) break;
      if (agg[u] != kUnassigned) continue;
      const auto x = emb.row(u);
      // Nearest existing aggregate, then nearest unmatched vertex; the
      // aggregate wins ties.
      double best = std::numeric_limits<double>::infinity();
      index_t best_agg = kUnassigned;
      for (std::size_t a = 0; a < members.size(); ++a) {
        const double d = distance_below(x.data(), &centroid[a * r], best);
        if (d < best) {
          best = d;
          best_agg = static_cast<index_t>(a);
        }
      }
      index_t best_vertex = kUnassigned;
      std::size_t kept = 0;
      for (index_t v : unmatched) {
        if (agg[v] != kUnassigned) continue;
        unmatched[kept++] = v;
        if (v == u) continue;
        const double d = distance_below(x.data(), emb.row(v).data(), best);
        if (d < best) {
          best = d;
          best_vertex = v;
        }
      }
      unmatched.resize(kept);
      if (best_vertex != kUnassigned) {
        agg[u] = agg[best_vertex] = next_id++;
        members.push_back(2);
        const auto y = emb.row(best_vertex);
        for (std::size_t k = 0; k < r; ++k) centroid.push_back(0.5 * (x[k] + y[k]));
      } else {
        agg[u] = best_agg;
        double* c = &centroid[static_cast<std::size_t>(best_agg) * r];
        const double m = static_cast<double>(++members[best_agg]);
        for (std::size_t k = 0; k < r; ++k) c[k] += (x[k] - c[k]) / m;
      }
      --live;
    }
  }

  if (live > target_n_out) {
    // Every vertex is assigned by now; merge whole aggregates.
    const std::size_t n_agg = members.size();
    std::vector<char> alive(n_agg, 1);
    std::vector<index_t> redirect(n_agg);
    std::iota(redirect.begin(), redirect.end(), index_t{0});
    while (live > target_n_out) {
      std::vector<index_t> round;
      for (std::size_t a = 0; a < n_agg; ++a) {
        if (alive[a]) round.push_back(static_cast<index_t>(a));
      }
      std::stable_sort(round.begin(), round.end(), [&](index_t a, index_t b) { return members[a] < members[b]; });
      std::vector<char> touched(n_agg, 0);
      for (index_t a : round) {
        if (live == target_n_out) break;
        if (touched[a]) continue;
        double best = std::numeric_limits<double>::infinity();
        index_t partner = kUnassigned;
        for (std::size_t b = 0; b < n_agg; ++b) {
          if (b == a || !alive[b] || touched[b]) continue;
          const double d = distance_below(&centroid[a * r], &centroid[b * r], best);
          if (d < best) {
            best = d;
            partner = static_cast<index_t>(b);
          }
        }
        if (partner == kUnassigned) continue;
        const index_t keep = std::min(a, partner);
        const index_t gone = std::max(a, partner);
        const double share = static_cast<double>(members[gone]) / static_cast<double>(members[keep] + members[gone]);
        for (std::size_t k = 0; k < r; ++k) {
          double& c = centroid[keep * r + k];
          c += (centroid[gone * r + k] - c) * share;
        }
        members[keep] += members[gone];
        alive[gone] = 0;
        redirect[gone] = keep;
        touched[a] = touched[partner] = 1;
        --live;
      }
    }
    std::vector<index_t> compact(n_agg, kUnassigned);
    index_t id = 0;
    for (std::size_t a = 0; a < n_agg; ++a) {
      if (alive[a]) compact[a] = id++;
    }
    for (auto& a : agg) {
      while (!alive[a]) a = redirect[a];
      a = compact[a];
    }
    next_id = id;
  }

  for (std::size_t u = 0; u < n; ++u) {
    if (agg[u] == kUnassigned) agg[u] = next_id++;
  }
  return AggregationPass::from_assignment(std::move(agg), next_id);
}

// Size-weighted means of the rows in each aggregate, computed as offsets from
// the aggregate's first member so that identical members reproduce exactly.
inline DataMatrix aggregate_means(const DataMatrix& data, const AggregationPass& pass,
                                  std::span<const std::size_t> weights) {
  const std::size_t d = data.cols();
  DataMatrix out(pass.n_out, d);
  std::vector<index_t> first(pass.n_out, std::numeric_limits<index_t>::max());
  std::vector<double> total(pass.n_out, 0.0);
  for (std::size_t i = 0; i < pass.n_in; ++i) {
    const index_t a = pass.assignment[i];
    if (first[a] == std::numeric_limits<index_t>::max()) first[a] = static_cast<index_t>(i);
    total[a] += static_cast<double>(weights[i]);
  }
  for (std::size_t i = 0; i < pass.n_in; ++i) {
    const index_t a = pass.assignment[i];
    const auto ref = data.row(first[a]);
    const auto x = data.row(i);
    auto dst = out.row(a);
    const double w = static_cast<double>(weights[i]);
    for (std::size_t j = 0; j < d; ++j) dst[j] += w * (x[j] - ref[j]);
  }
  for (std::size_t a = 0; a < pass.n_out; ++a) {
    const auto ref = data.row(first[a]);
    auto dst = out.row(a);
    for (std::size_t j = 0; j < d; ++j) dst[j] = ref[j] + dst[j] / total[a];
  }
  return out;
}

// ceil(n / ratio) without being fooled by rounding in the quotient.
inline std::size_t compressed_count(std::size_t n, double ratio) {
  if (!(ratio >= 1.0) || !std::isfinite(ratio)) throw std::invalid_argument("compression ratio must be >= 1");
  auto m = static_cast<std::size_t>(std::ceil(static_cast<double>(n) / ratio));
  while (m > 1 && static_cast<double>(m - 1) * ratio >= static_cast<double>(n)) --m;
  while (static_cast<double>(m) * ratio < static_cast<double>(n)) ++m;
  return m;
}

struct CompressOptions {
  Weighting weighting = Weighting::gaussian;
  EmbedOptions embed;
};

inline std::size_t component_count(const LaplacianMatrix& L) {
  const auto comp = connected_components(L);
  return comp.empty() ? 0 : static_cast<std::size_t>(*std::max_element(comp.begin(), comp.end())) + 1;
}

// Repeated aggregation down to ceil(n / ratio) pseudo-samples. Identical rows
// are merged before anything else. Each pass at most halves the point count;
// between passes the kNN graph and embedding are rebuilt over the
// pseudo-samples (r capped at n_current - 2 and at the number of nontrivial
// eigenpairs).
inline CompressionHierarchy compress(const DataMatrix& data, const SpectralEmbedding& emb, const SparseGraph& g,
                                     double ratio, std::size_t knn_k, std::size_t r,
                                     const CompressOptions& opts = {}) {
  if (!(ratio > 1.0)) throw std::invalid_argument("compress: ratio must be > 1");
  const std::size_t n = data.rows();
  if (n < 2) throw std::invalid_argument("compress: need at least 2 samples");
  if (emb.n_points != n || g.n_vertices != n) throw std::invalid_argument("compress: data, graph and embedding sizes differ");
  const std::size_t m = compressed_count(n, ratio);
  if (m < 2) throw std::invalid_argument("compress: ratio leaves fewer than 2 pseudo-samples");

  CompressionHierarchy h;
  h.n_original = n;
  h.cumulative_sizes.assign(n, 1);

  DataMatrix level = data;
  SpectralEmbedding level_emb;
  SparseGraph level_graph;
  const SpectralEmbedding* cur_emb = &emb;
  const SparseGraph* cur_graph = &g;
  std::size_t n_cur = n;

  while (n_cur > m) {
    const std::size_t target = std::max(m, (n_cur + 1) / 2);
    const auto classes = coincident_classes(level);
    AggregationPass pass = aggregate_pass(*cur_emb, *cur_graph, target, classes);
    if (pass.n_out != target) throw std::logic_error("compress: aggregation missed its target");
    level = aggregate_means(level, pass, h.cumulative_sizes);
    std::vector<std::size_t> sizes(pass.n_out, 0);
    for (std::size_t i = 0; i < pass.n_in; ++i) sizes[pass.assignment[i]] += h.cumulative_sizes[i];
    h.cumulative_sizes = std::move(sizes);
    h.passes.push_back(std::move(pass));
    n_cur = target;

    if (n_cur > m) {
      level_graph = build_knn_graph(level, std::min(knn_k, n_cur - 1), opts.weighting);
      const LaplacianMatrix L = laplacian(level_graph);
      const std::size_t nontrivial = n_cur - component_count(L);
      const std::size_t r_level = std::max<std::size_t>(1, std::min({r, n_cur - 2, nontrivial}));
      level_emb = embed(L, r_level, opts.embed);
      cur_emb = &level_emb;
      cur_graph = &level_graph;
    }
  }

  h.n_final = n_cur;
  h.pseudo_samples = std::move(level);
  return h;
}

// Final pseudo-sample index of every original point.
inline std::vector<index_t> flatten(const CompressionHierarchy& h) {
  std::vector<index_t> idx(h.n_original);
  std::iota(idx.begin(), idx.end(), index_t{0});
  for (const auto& pass : h.passes) {
    for (auto& i : idx) i = pass.assignment[i];
  }
  return idx;
}

// Each original point inherits the label of its pseudo-sample.
inline ClusterLabels project_labels(const CompressionHierarchy& h, const ClusterLabels& compressed) {
  if (compressed.size() != h.n_final) {
    throw std::invalid_argument("project_labels: expected " + std::to_string(h.n_final) + " labels, got " +
                                std::to_string(compressed.size()));
  }
  ClusterLabels out;
  out.n_clusters = compressed.n_clusters;
  const auto idx = flatten(h);
  out.labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out.labels[i] = compressed.labels[idx[i]];
  return out;
}

// ---- map file ---------------------------------------------------------------
//
//   specdb-hierarchy 1
//   <n_original> <n_final> <n_passes>
//   then per pass: a line "<n_in> <n_out>" and a line of n_in output indices.

inline constexpr const char* kHierarchyMagic = "specdb-hierarchy";
inline constexpr int kHierarchyVersion = 1;

inline void write_hierarchy(std::ostream& out, const CompressionHierarchy& h) {
  out << kHierarchyMagic << ' ' << kHierarchyVersion << '\n';
  out << h.n_original << ' ' << h.n_final << ' ' << h.passes.size() << '\n';
  for (const auto& pass : h.passes) {
    out << pass.n_in << ' ' << pass.n_out << '\n';
    for (std::size_t i = 0; i < pass.assignment.size(); ++i) {
      if (i) out << ' ';
      out << pass.assignment[i];
    }
    out << '\n';
  }
}

inline void write_hierarchy(const std::string& path, const CompressionHierarchy& h) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_hierarchy(out, h);
}

// Reads the pass structure back; pseudo_samples stay empty.
inline CompressionHierarchy read_hierarchy(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kHierarchyMagic) throw FormatError("not a hierarchy map file");
  if (version != kHierarchyVersion) throw FormatError("unsupported hierarchy version " + std::to_string(version));
  CompressionHierarchy h;
  std::size_t n_passes = 0;
  if (!(in >> h.n_original >> h.n_final >> n_passes)) throw FormatError("hierarchy: bad header");
  std::size_t expect_in = h.n_original;
  for (std::size_t p = 0; p < n_passes; ++p) {
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    if (!(in >> n_in >> n_out)) throw FormatError("hierarchy: truncated pass header");
    if (n_in != expect_in) throw ConsistencyError("hierarchy: pass " + std::to_string(p) + " does not chain");
    std::vector<index_t> a(n_in);
    for (auto& x : a) {
      if (!(in >> x)) throw FormatError("hierarchy: truncated assignment");
    }
    try {
      h.passes.push_back(AggregationPass::from_assignment(std::move(a), n_out));
    } catch (const std::invalid_argument& e) {
      throw ConsistencyError(std::string("hierarchy: ") + e.what());
    }
    expect_in = n_out;
  }
  if (expect_in != h.n_final) throw ConsistencyError("hierarchy: final size does not match header");
  h.cumulative_sizes.assign(h.n_final, 0);
  for (index_t j : flatten(h)) ++h.cumulative_sizes[j];
  return h;
}

inline CompressionHierarchy read_hierarchy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_hierarchy(in);
}

}  // namespace specdb
