#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "specdb/compression.hpp"
#include "specdb/dataset.hpp"
#include "specdb/dbscan.hpp"
#include "specdb/embedding.hpp"
#include "specdb/error.hpp"
#include "specdb/graph.hpp"
#include "specdb/labels.hpp"
#include "specdb/matrix.hpp"

namespace specdb {

// Minimum-cost perfect assignment on a square row-major cost matrix
// (shortest augmenting paths with potentials, O(n^3)). Returns the column
// assigned to each row.
inline std::vector<std::size_t> hungarian(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw std::invalid_argument("hungarian: cost matrix must be square");
  for (double c : cost) {
    if (!std::isfinite(c)) throw std::invalid_argument("hungarian: non-finite cost");
  }
  if (n == 0) return {};
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based internally; column 0 is the virtual start.
  std::vector<double> u(n + 1, 0.0);
  std::vector<double> v(n + 1, 0.0);
  std::vector<std::size_t> row_of(n + 1, 0);
  std::vector<std::size_t> way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = row_of[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[row_of[j] - 1] = j - 1;
  return assignment;
}

// Percentage of points on the diagonal of the best one-to-one matching
// between predicted clusters and true classes. Noise counts as one more
// predicted cluster.
inline double clustering_accuracy(const ClusterLabels& pred, const GroundTruth& truth) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("clustering_accuracy: " + std::to_string(pred.size()) + " predictions vs " +
                                std::to_string(truth.size()) + " labels");
  }
  if (pred.size() == 0) throw std::invalid_argument("clustering_accuracy: empty labelling");
  const std::size_t noise_row = static_cast<std::size_t>(pred.n_clusters);
  const std::size_t rows = noise_row + 1;
  const std::size_t cols = static_cast<std::size_t>(truth.n_classes);
  const std::size_t s = std::max(rows, cols);
  std::vector<double> counts(s * s, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::size_t p = pred.labels[i] == kNoise ? noise_row : static_cast<std::size_t>(pred.labels[i]);
    counts[p * s + static_cast<std::size_t>(truth.labels[i])] += 1.0;
  }
  std::vector<double> cost(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) cost[i] = -counts[i];
  const auto match = hungarian(cost, s);
  double matched = 0.0;
  for (std::size_t p = 0; p < s; ++p) matched += counts[p * s + match[p]];
  return 100.0 * matched / static_cast<double>(pred.size());
}

struct KMeansResult {
  ClusterLabels labels;
  DataMatrix centroids;
  double inertia = 0.0;
  std::size_t iterations = 0;
};

// Lloyd's algorithm from k-means++ seeding.
inline KMeansResult kmeans(const DataMatrix& data, std::size_t k, std::uint64_t seed, std::size_t max_iter = 300) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: need 1 <= k <= n");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DataMatrix centroids(k, d);
  std::vector<char> chosen(n, 0);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

  auto pick = [&](std::size_t c, std::size_t i) {
    chosen[i] = 1;
    std::copy(data.row(i).begin(), data.row(i).end(), centroids.row(c).begin());
    for (std::size_t t = 0; t < n; ++t) nearest[t] = std::min(nearest[t], squared_distance(data.row(t), data.row(i)));
  };
  pick(0, std::min(n - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(n))));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t t = 0; t < n; ++t) total += chosen[t] ? 0.0 : nearest[t];
    std::size_t next = n;
    if (total > 0.0) {
      double target = unit(rng) * total;
      for (std::size_t t = 0; t < n; ++t) {
        if (chosen[t] || nearest[t] == 0.0) continue;
        next = t;
        target -= nearest[t];
        if (target < 0.0) break;
      }
    }
    if (next == n) next = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
    pick(c, next);
  }

  std::vector<int> assign(n, -1);
  std::vector<double> dist(n, 0.0);
  std::vector<std::size_t> count(k);
  KMeansResult result;
  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(data.row(i), centroids.row(0));
      for (std::size_t c = 1; c < k; ++c) {
        const double dc = squared_distance(data.row(i), centroids.row(c));
        if (dc < best_d) {
          best_d = dc;
          best = static_cast<int>(c);
        }
      }
      changed = changed || assign[i] != best;
      assign[i] = best;
      dist[i] = best_d;
    }
    // Empty clusters take the point farthest from its centroid.
    std::fill(count.begin(), count.end(), 0);
    for (int a : assign) ++count[static_cast<std::size_t>(a)];
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (count[static_cast<std::size_t>(assign[i])] > 1 && (far == n || dist[i] > dist[far])) far = i;
      }
      --count[static_cast<std::size_t>(assign[far])];
      assign[far] = static_cast<int>(c);
      dist[far] = 0.0;
      count[c] = 1;
      changed = true;
    }
    result.iterations = iter + 1;
    if (!changed && iter > 0) break;
    // Centroid update.
    DataMatrix sums(k, d);
    for (std::size_t i = 0; i < n; ++i) {
      auto s = sums.row(static_cast<std::size_t>(assign[i]));
      const auto x = data.row(i);
      for (std::size_t j = 0; j < d; ++j) s[j] += x[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < d; ++j) centroids(c, j) = sums(c, j) / static_cast<double>(count[c]);
    }
  }

  result.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    result.inertia += squared_distance(data.row(i), centroids.row(static_cast<std::size_t>(assign[i])));
  }
  result.labels.labels = std::move(assign);
  result.labels.n_clusters = static_cast<int>(k);
  result.centroids = std::move(centroids);
  return result;
}

// ---- spectral vs. raw k-means demo -------------------------------------------

enum class DemoKind { two_moons, two_circles };

struct DemoConfig {
  DemoKind kind = DemoKind::two_circles;
  std::size_t n = 500;
  double noise_sigma = 0.05;
  double circle_factor = 0.5;
  std::size_t knn_k = 10;
  std::uint64_t seed = 0;
};

struct DemoResult {
  double raw_accuracy = 0.0;
  double spectral_accuracy = 0.0;
  ClusterLabels raw_labels;
  ClusterLabels spectral_labels;
};

// Smallest m Laplacian eigenpairs, constant/indicator vectors included;
// dense for small graphs, Lanczos otherwise.
inline Eigenpairs smallest_eigenpairs(const LaplacianMatrix& L, std::size_t m, const EmbedOptions& opts = {}) {
  if (L.n_vertices <= opts.dense_threshold) return smallest_eigenpairs_dense(L, m);
  return smallest_eigenpairs_lanczos(L, m, opts.lanczos);
}

// k-means (k = 2) on the raw coordinates versus on the two lowest Laplacian
// eigenvectors of the kNN graph. For a disconnected graph those are the
// component indicators, so they are kept here.
inline DemoResult spectral_vs_raw_demo(const DemoConfig& cfg, const std::string& out_dir = {}) {
  if (cfg.n < 20) throw std::invalid_argument("demo: n must be >= 20");
  auto [data, truth] = cfg.kind == DemoKind::two_moons ? make_two_moons(cfg.n, cfg.noise_sigma, cfg.seed)
                                                       : make_two_circles(cfg.n, cfg.noise_sigma, cfg.circle_factor, cfg.seed);
  DemoResult res;
  res.raw_labels = kmeans(data, 2, cfg.seed).labels;

  const LaplacianMatrix L = laplacian(build_knn_graph(data, std::min(cfg.knn_k, cfg.n - 1)));
  EmbedOptions eo;
  eo.lanczos.seed = cfg.seed;
  const Eigenpairs pairs = smallest_eigenpairs(L, 2, eo);
  DataMatrix spectral(cfg.n, 2);
  for (std::size_t u = 0; u < cfg.n; ++u) {
    spectral(u, 0) = pairs.vector(0)[u];
    spectral(u, 1) = pairs.vector(1)[u];
  }
  res.spectral_labels = kmeans(spectral, 2, cfg.seed).labels;
  res.raw_accuracy = clustering_accuracy(res.raw_labels, truth);
  res.spectral_accuracy = clustering_accuracy(res.spectral_labels, truth);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    write_csv((dir / "data.csv").string(), data);
    write_labels((dir / "raw_labels.csv").string(), res.raw_labels);
    write_labels((dir / "spectral_labels.csv").string(), res.spectral_labels);
    std::ofstream acc((dir / "accuracy.csv").string(), std::ios::binary);
    acc << "space,acc_pct\nraw," << format_real(res.raw_accuracy) << "\nspectral," << format_real(res.spectral_accuracy)
        << '\n';
  }
  return res;
}

// ---- pipeline -----------------------------------------------------------------

struct BenchmarkRecord {
  std::string dataset_name;
  double ratio = 1.0;
  std::size_t n_original = 0;
  std::size_t n_compressed = 0;
  std::optional<double> accuracy_pct;
  double compress_seconds = 0.0;
  double dbscan_seconds = 0.0;
  double total_seconds = 0.0;
  double eps = 0.0;
  std::size_t min_pts = 0;
  std::size_t k = 0;
  std::size_t r = 0;

  friend bool operator==(const BenchmarkRecord&, const BenchmarkRecord&) = default;
};

struct PipelineConfig {
  std::string dataset_name = "data";
  double ratio = 1.0;
  std::size_t knn_k = 10;
  std::size_t r = 25;
  DbscanParams dbscan;
  // Pseudo-samples count with their aggregate size towards min_pts.
  bool weighted_min_pts = false;
  std::uint64_t seed = 0;
  Weighting weighting = Weighting::gaussian;
};

struct PipelineResult {
  ClusterLabels labels;
  BenchmarkRecord record;
  std::optional<CompressionHierarchy> hierarchy;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// Spectral compression of the input, then DBSCAN on the pseudo-samples and
// label inheritance. ratio == 1 runs plain DBSCAN.
inline CompressionHierarchy compress_data(const DataMatrix& data, double ratio, std::size_t knn_k, std::size_t r,
                                          std::uint64_t seed, Weighting weighting = Weighting::gaussian) {
  const std::size_t n = data.rows();
  if (n < 3) throw std::invalid_argument("compress: need at least 3 samples");
  const std::size_t k = std::min(knn_k, n - 1);
  const SparseGraph g = build_knn_graph(data, k, weighting);
  const LaplacianMatrix L = laplacian(g);
  const std::size_t nontrivial = n - component_count(L);
  const std::size_t r_eff = std::max<std::size_t>(1, std::min({r, n - 2, nontrivial}));
  CompressOptions opts;
  opts.weighting = weighting;
  opts.embed.lanczos.seed = seed;
  const SpectralEmbedding emb = embed(L, r_eff, opts.embed);
  return compress(data, emb, g, ratio, k, r, opts);
}

inline PipelineResult run_pipeline(const DataMatrix& data, const GroundTruth* truth, const PipelineConfig& cfg) {
  cfg.dbscan.validate();
  if (!(cfg.ratio >= 1.0)) throw std::invalid_argument("pipeline: ratio must be >= 1");
  if (truth && truth->size() != data.rows()) throw ConsistencyError("pipeline: truth length differs from data");

  PipelineResult res;
  auto& rec = res.record;
  rec.dataset_name = cfg.dataset_name;
  rec.ratio = cfg.ratio;
  rec.n_original = data.rows();
  rec.eps = cfg.dbscan.eps;
  rec.min_pts = cfg.dbscan.min_pts;
  rec.k = cfg.knn_k;
  rec.r = cfg.r;

  const auto t_start = std::chrono::steady_clock::now();
  if (cfg.ratio == 1.0) {
    res.labels = dbscan(data, cfg.dbscan);
    rec.dbscan_seconds = detail::seconds_since(t_start);
    rec.n_compressed = data.rows();
  } else {
    res.hierarchy = compress_data(data, cfg.ratio, cfg.knn_k, cfg.r, cfg.seed, cfg.weighting);
    rec.compress_seconds = detail::seconds_since(t_start);
    const auto t_db = std::chrono::steady_clock::now();
    const auto& h = *res.hierarchy;
    const ClusterLabels compressed =
        dbscan(h.pseudo_samples, cfg.dbscan,
               cfg.weighted_min_pts ? std::span<const std::size_t>(h.cumulative_sizes) : std::span<const std::size_t>{});
    rec.dbscan_seconds = detail::seconds_since(t_db);
    res.labels = project_labels(h, compressed);
    rec.n_compressed = h.n_final;
  }
  rec.total_seconds = detail::seconds_since(t_start);
  if (truth) rec.accuracy_pct = clustering_accuracy(res.labels, *truth);
  return res;
}

// ---- benchmark CSV --------------------------------------------------------------

inline constexpr const char* kBenchmarkHeader = "dataset,ratio,n_orig,n_comp,acc_pct,compress_s,dbscan_s,total_s,eps,min_pts,k,r";

inline void write_benchmark_csv(std::ostream& out, std::span<const BenchmarkRecord> records) {
  out << kBenchmarkHeader << '\n';
  for (const auto& r : records) {
    out << r.dataset_name << ',' << format_real(r.ratio) << ',' << r.n_original << ',' << r.n_compressed << ','
        << (r.accuracy_pct ? format_real(*r.accuracy_pct) : std::string()) << ',' << format_real(r.compress_seconds)
        << ',' << format_real(r.dbscan_seconds) << ',' << format_real(r.total_seconds) << ',' << format_real(r.eps)
        << ',' << r.min_pts << ',' << r.k << ',' << r.r << '\n';
  }
}

inline void write_benchmark_csv(const std::string& path, std::span<const BenchmarkRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_benchmark_csv(out, records);
}

inline std::vector<BenchmarkRecord> read_benchmark_csv(const std::string& path) {
  const std::string text = detail::read_file(path);
  auto lines = detail::split_lines(text);
  while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty() || lines.front() != kBenchmarkHeader) throw FormatError("benchmark CSV: unexpected header");
  std::vector<BenchmarkRecord> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto f = detail::split_fields(lines[li]);
    if (f.size() != 12) throw ParseError("benchmark CSV: expected 12 fields", li + 1);
    auto real = [&](std::size_t i) {
      const auto v = detail::parse_real(f[i]);
      if (!v) throw ParseError("benchmark CSV: bad number '" + std::string(f[i]) + "'", li + 1);
      return *v;
    };
    auto count = [&](std::size_t i) {
      const auto v = detail::parse_int(f[i]);
      if (!v || *v < 0) throw ParseError("benchmark CSV: bad count '" + std::string(f[i]) + "'", li + 1);
      return static_cast<std::size_t>(*v);
    };
    BenchmarkRecord r;
    r.dataset_name = std::string(f[0]);
    r.ratio = real(1);
    r.n_original = count(2);
    r.n_compressed = count(3);
    if (!f[4].empty()) r.accuracy_pct = real(4);
    r.compress_seconds = real(5);
    r.dbscan_seconds = real(6);
    r.total_seconds = real(7);
    r.eps = real(8);
    r.min_pts = count(9);
    r.k = count(10);
    r.r = count(11);
    out.push_back(std::move(r));
  }
  return out;
}

// One pipeline run per ratio, sequentially, with everything else fixed.
inline std::vector<BenchmarkRecord> benchmark_sweep(const DataMatrix& data, const GroundTruth* truth,
                                                    std::span<const double> ratios, PipelineConfig cfg,
                                                    const std::string& out_csv = {}) {
  if (ratios.empty()) throw std::invalid_argument("sweep: no ratios given");
  for (double r : ratios) {
    if (!(r >= 1.0)) throw std::invalid_argument("sweep: ratios must be >= 1");
  }
  std::vector<BenchmarkRecord> records;
  for (double r : ratios) {
    cfg.ratio = r;
    records.push_back(run_pipeline(data, truth, cfg).record);
  }
  if (!out_csv.empty()) write_benchmark_csv(out_csv, records);
  return records;
}

}  // namespace specdb
