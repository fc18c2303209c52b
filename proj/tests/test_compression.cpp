#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "specdb/specdb.hpp"

using namespace specdb;

namespace {

double sim(std::vector<double> a, std::vector<double> b) { return spectral_similarity(a, b); }

SpectralEmbedding embedding_from_rows(std::size_t n, std::size_t r, std::vector<double> coords) {
  SpectralEmbedding e;
  e.n_points = n;
  e.r = r;
  e.coords = std::move(coords);
  e.eigenvalues.assign(r, 1.0);
  return e;
}

SparseGraph complete_graph(std::size_t n) {
  std::vector<std::pair<std::pair<index_t, index_t>, double>> e;
  for (index_t p = 0; p < n; ++p) {
    for (index_t q = p + 1; q < n; ++q) e.push_back({{p, q}, 1.0});
  }
  return graph_from_edges(n, e);
}

struct Level {
  SparseGraph g;
  SpectralEmbedding emb;
};

Level spectral_level(const DataMatrix& m, std::size_t k, std::size_t r) {
  Level l;
  l.g = build_knn_graph(m, k);
  const auto L = laplacian(l.g);
  l.emb = embed(L, std::min(r, m.rows() - component_count(L)));
  return l;
}

CompressionHierarchy hierarchy_of(std::size_t n, std::vector<std::vector<index_t>> passes) {
  CompressionHierarchy h;
  h.n_original = n;
  std::size_t n_in = n;
  for (auto& a : passes) {
    const std::size_t n_out = *std::max_element(a.begin(), a.end()) + 1u;
    h.passes.push_back(AggregationPass::from_assignment(std::move(a), n_out));
    n_in = n_out;
  }
  h.n_final = n_in;
  h.cumulative_sizes.assign(n_in, 0);
  for (auto j : flatten(h)) ++h.cumulative_sizes[j];
  return h;
}

}  // namespace

TEST(Similarity, Examples) {
  EXPECT_DOUBLE_EQ(sim({1, 2}, {2, 4}), 1.0);
  EXPECT_EQ(sim({1, 0}, {0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(sim({1, 1}, {1, 0}), 0.5);
  EXPECT_EQ(sim({0, 0}, {1, 0}), 0.0);
  EXPECT_THROW(sim({1}, {1, 2}), std::invalid_argument);
}

TEST(Similarity, Properties) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int t = 0; t < 10000; ++t) {
    const std::size_t r = 1 + rng() % 30;
    std::vector<double> u(r);
    std::vector<double> v(r);
    for (auto& x : u) x = normal(rng);
    for (auto& x : v) x = normal(rng);
    const double s = spectral_similarity(u, v);
    ASSERT_EQ(s, spectral_similarity(v, u));
    ASSERT_GE(s, 0.0);
    ASSERT_LE(s, 1.0 + 1e-12);
    const double a = (rng() % 2 ? -1.0 : 1.0) * scale(rng);
    const double b = (rng() % 2 ? -1.0 : 1.0) * scale(rng);
    std::vector<double> au(u);
    std::vector<double> bv(v);
    for (auto& x : au) x *= a;
    for (auto& x : bv) x *= b;
    ASSERT_NEAR(spectral_similarity(au, bv), s, 1e-12);
    ASSERT_NEAR(spectral_similarity(u, au), 1.0, 1e-12);
  }
}

TEST(Aggregate, IdenticalPairsMerge) {
  const auto emb = embedding_from_rows(4, 2, {1, 0, 0.3, 1, 1, 0, 0.3, 1});
  const auto pass = aggregate_pass(emb, complete_graph(4), 2);
  EXPECT_EQ(pass.n_out, 2u);
  EXPECT_EQ(pass.assignment[0], pass.assignment[2]);
  EXPECT_EQ(pass.assignment[1], pass.assignment[3]);
  EXPECT_NE(pass.assignment[0], pass.assignment[1]);
}

TEST(Aggregate, TargetNMinusOneMergesOnce) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng() % 80;
    const auto lvl = spectral_level(oracle::clumpy_matrix(n, 3, 3, rng), std::min<std::size_t>(n - 1, 5), 4);
    const auto pass = aggregate_pass(lvl.emb, lvl.g, n - 1);
    EXPECT_EQ(pass.n_out, n - 1);
    EXPECT_EQ(std::count(pass.sizes.begin(), pass.sizes.end(), 2u), 1);
  }
}

TEST(Aggregate, HandBuiltSixVertexGraph) {
  // Rows chosen so the similarities are easy to read off.
  const auto emb = embedding_from_rows(6, 2, {1, 0, 2, 0, 0, 1, 0, 3, 1, 0.2, -1, 1});
  const auto g = graph_from_edges(
      6, std::vector<std::pair<std::pair<index_t, index_t>, double>>{
             {{0, 1}, 1.0}, {{0, 4}, 1.0}, {{1, 4}, 1.0}, {{2, 3}, 1.0}, {{3, 5}, 1.0}, {{4, 5}, 1.0}});
  // Visit order 4 (degree 3), 0, 1, 3, 5, 2. Vertex 4 is equally similar to
  // 0 and 1 (1/1.04) and takes 0; 1 then has no free neighbour; 3 takes 2
  // (s=1 against 0.5 for 5). Phase 2: 1 is nearest the centroid (1, 0.1) of
  // {0, 4}, which reaches the target and leaves 5 a singleton.
  const auto pass = aggregate_pass(emb, g, 3);
  EXPECT_EQ(pass.assignment, (std::vector<index_t>{0, 0, 1, 1, 0, 2}));
  EXPECT_EQ(pass.assignment, oracle::aggregate(emb, g, 3));
  EXPECT_EQ(pass.n_out, 3u);
}

TEST(Aggregate, MatchesOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 4 + rng() % 150;
    const auto lvl = spectral_level(oracle::clumpy_matrix(n, 1 + rng() % 5, 1 + rng() % 4, rng),
                                    std::min<std::size_t>(n - 1, 2 + rng() % 8), 1 + rng() % 6);
    const std::size_t target = 1 + rng() % (n - 1);
    const auto pass = aggregate_pass(lvl.emb, lvl.g, target);
    ASSERT_EQ(pass.assignment, oracle::aggregate(lvl.emb, lvl.g, target)) << "trial " << trial;
    ASSERT_EQ(pass.n_out, target);
    ASSERT_EQ(std::accumulate(pass.sizes.begin(), pass.sizes.end(), std::size_t{0}), n);
  }
}

TEST(Aggregate, CoincidentClasses) {
  const DataMatrix m(6, 2, {1, 2, 0, 0, 1, 2, 3, 3, 0, 0, 1, 2});
  EXPECT_EQ(coincident_classes(m), (std::vector<index_t>{0, 1, 0, 3, 1, 0}));
}

TEST(Aggregate, MatchesOracleWithCopies) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t distinct = 3 + rng() % 60;
    const std::size_t d = 1 + rng() % 4;
    const auto base = oracle::clumpy_matrix(distinct, d, 1 + rng() % 4, rng);
    std::vector<double> rows;
    for (std::size_t i = 0; i < distinct; ++i) {
      const std::size_t copies = 1 + rng() % 4;
      for (std::size_t c = 0; c < copies; ++c) rows.insert(rows.end(), base.row(i).begin(), base.row(i).end());
    }
    const std::size_t n = rows.size() / d;
    DataMatrix m(n, d, rows);
    const auto lvl = spectral_level(m, std::min<std::size_t>(n - 1, 2 + rng() % 8), 1 + rng() % 6);
    const auto cls = coincident_classes(m);
    const std::size_t target = 1 + rng() % (n - 1);
    const auto pass = aggregate_pass(lvl.emb, lvl.g, target, cls);
    ASSERT_EQ(pass.assignment, oracle::aggregate(lvl.emb, lvl.g, target, cls)) << "trial " << trial;
    ASSERT_EQ(pass.n_out, target);
    // Down to the number of distinct rows, no aggregate mixes two of them.
    if (target >= distinct) {
      std::vector<index_t> owner(target, std::numeric_limits<index_t>::max());
      for (std::size_t i = 0; i < n; ++i) {
        auto& o = owner[pass.assignment[i]];
        if (o == std::numeric_limits<index_t>::max()) o = cls[i];
        ASSERT_EQ(o, cls[i]) << "trial " << trial;
      }
    }
  }
}

TEST(Aggregate, Errors) {
  const auto emb = embedding_from_rows(4, 1, {1, 2, 3, 4});
  EXPECT_THROW(aggregate_pass(emb, complete_graph(4), 4), std::invalid_argument);
  EXPECT_THROW(aggregate_pass(emb, complete_graph(4), 0), std::invalid_argument);
  EXPECT_THROW(aggregate_pass(emb, complete_graph(5), 2), std::invalid_argument);
  EXPECT_THROW(AggregationPass::from_assignment({0, 2}, 3), std::invalid_argument);
}

TEST(Compress, TargetCounts) {
  std::mt19937_64 rng(7);
  const auto m = oracle::clumpy_matrix(1000, 4, 5, rng);
  const auto h10 = compress_data(m, 10.0, 10, 25, 0);
  EXPECT_EQ(h10.n_final, 100u);
  EXPECT_EQ(h10.passes.size(), 4u);
  const auto h2 = compress_data(m, 2.0, 10, 25, 0);
  EXPECT_EQ(h2.n_final, 500u);
  EXPECT_EQ(h2.passes.size(), 1u);
}

TEST(Compress, ExactCeilingAndMeans) {
  std::mt19937_64 rng(9);
  for (std::size_t n : {100u, 1000u}) {
    const auto m = oracle::clumpy_matrix(n, 3, 4, rng);
    for (double ratio : {2.0, 5.0, 10.0}) {
      const auto h = compress_data(m, ratio, 10, 25, 0);
      const auto expect = static_cast<std::size_t>(std::ceil(static_cast<double>(n) / ratio));
      ASSERT_EQ(h.n_final, expect);
      ASSERT_EQ(h.pseudo_samples.rows(), expect);

      // Hierarchy composes and the sizes add up.
      ASSERT_EQ(h.passes.front().n_in, n);
      for (std::size_t p = 1; p < h.passes.size(); ++p) ASSERT_EQ(h.passes[p].n_in, h.passes[p - 1].n_out);
      ASSERT_EQ(h.passes.back().n_out, h.n_final);
      ASSERT_EQ(std::accumulate(h.cumulative_sizes.begin(), h.cumulative_sizes.end(), std::size_t{0}), n);

      // Each pseudo-sample is the exact mean of its original members.
      const auto idx = flatten(h);
      DataMatrix sums(h.n_final, m.cols());
      std::vector<std::size_t> count(h.n_final, 0);
      for (std::size_t i = 0; i < n; ++i) {
        ++count[idx[i]];
        for (std::size_t j = 0; j < m.cols(); ++j) sums(idx[i], j) += m(i, j);
      }
      EXPECT_EQ(count, h.cumulative_sizes);
      for (std::size_t a = 0; a < h.n_final; ++a) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
          ASSERT_NEAR(h.pseudo_samples(a, j), sums(a, j) / static_cast<double>(count[a]), 1e-9);
        }
      }
      // Global weighted mean preserved.
      for (std::size_t j = 0; j < m.cols(); ++j) {
        double orig = 0.0;
        double comp = 0.0;
        for (std::size_t i = 0; i < n; ++i) orig += m(i, j);
        for (std::size_t a = 0; a < h.n_final; ++a) {
          comp += h.pseudo_samples(a, j) * static_cast<double>(h.cumulative_sizes[a]);
        }
        EXPECT_NEAR(comp / static_cast<double>(n), orig / static_cast<double>(n), 1e-9);
      }
    }
  }
}

TEST(Compress, DuplicateGroupsReconstructExactly) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  const std::size_t groups = 100;
  const std::size_t copies = 10;
  std::vector<std::size_t> order(groups * copies);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  DataMatrix centres(groups, 3);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t j = 0; j < 3; ++j) centres(g, j) = u(rng);
  }
  DataMatrix m(groups * copies, 3);
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) m(i, j) = centres(order[i] / copies, j);
  }
  const auto h = compress_data(m, 10.0, 10, 25, 0);
  ASSERT_EQ(h.n_final, groups);
  const auto idx = flatten(h);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(h.pseudo_samples(idx[i], j), m(i, j)) << "point " << i;
  }
  for (std::size_t s : h.cumulative_sizes) EXPECT_EQ(s, copies);
}

TEST(Compress, Deterministic) {
  std::mt19937_64 rng(13);
  const auto m = oracle::clumpy_matrix(600, 5, 3, rng);
  const auto a = compress_data(m, 5.0, 10, 25, 3);
  const auto b = compress_data(m, 5.0, 10, 25, 3);
  EXPECT_EQ(flatten(a), flatten(b));
  EXPECT_EQ(a.pseudo_samples, b.pseudo_samples);
}

TEST(Compress, Errors) {
  std::mt19937_64 rng(15);
  const auto m = oracle::clumpy_matrix(20, 2, 2, rng);
  const auto lvl = spectral_level(m, 5, 4);
  EXPECT_THROW(compress(m, lvl.emb, lvl.g, 1.0, 5, 4), std::invalid_argument);
  EXPECT_THROW(compress(m, lvl.emb, lvl.g, 0.5, 5, 4), std::invalid_argument);
  EXPECT_THROW(compress(m, lvl.emb, lvl.g, 25.0, 5, 4), std::invalid_argument);
  EXPECT_EQ(compress(m, lvl.emb, lvl.g, 15.0, 5, 4).n_final, 2u);
  EXPECT_EQ(compressed_count(1000, 3.0), 334u);
  EXPECT_EQ(compressed_count(30, 0.3 * 10.0), 10u);
}

TEST(Flatten, Examples) {
  EXPECT_EQ(flatten(hierarchy_of(3, {{0, 1, 2}})), (std::vector<index_t>{0, 1, 2}));
  EXPECT_EQ(flatten(hierarchy_of(4, {{0, 0, 1, 1}, {0, 0}})), (std::vector<index_t>{0, 0, 0, 0}));
}

TEST(Flatten, ComposesLikeLookup) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 5 + rng() % 200;
    const std::size_t n0 = n;
    std::vector<std::vector<index_t>> passes;
    for (int p = 0; p < 3 && n > 1; ++p) {
      const std::size_t out = 1 + rng() % n;
      std::vector<index_t> a(n);
      for (std::size_t i = 0; i < n; ++i) a[i] = static_cast<index_t>(i < out ? i : rng() % out);
      std::shuffle(a.begin(), a.end(), rng);
      passes.push_back(a);
      n = out;
    }
    const auto h = hierarchy_of(n0, passes);
    const auto got = flatten(h);
    const auto expect = oracle::compose(passes, n0);
    ASSERT_EQ(std::vector<std::size_t>(got.begin(), got.end()), expect);
    for (std::size_t j = 0; j < h.n_final; ++j) {
      ASSERT_EQ(h.cumulative_sizes[j], static_cast<std::size_t>(std::count(got.begin(), got.end(), j)));
    }
  }
}

TEST(ProjectLabels, Examples) {
  const ClusterLabels labels{{0, kNoise, 1}, 2};
  EXPECT_EQ(project_labels(hierarchy_of(3, {{0, 1, 2}}), labels), labels);

  const auto out = project_labels(hierarchy_of(4, {{0, 0, 1, 1}}), ClusterLabels{{5, kNoise}, 6});
  EXPECT_EQ(out.labels, (std::vector<int>{5, 5, kNoise, kNoise}));
  EXPECT_THROW(project_labels(hierarchy_of(4, {{0, 0, 1, 1}}), labels), std::invalid_argument);
}

TEST(ProjectLabels, CountsMatchCumulativeSizes) {
  std::mt19937_64 rng(19);
  const auto m = oracle::clumpy_matrix(400, 2, 4, rng);
  const auto h = compress_data(m, 5.0, 10, 10, 0);
  ClusterLabels comp;
  comp.n_clusters = 4;
  for (std::size_t j = 0; j < h.n_final; ++j) comp.labels.push_back(static_cast<int>(rng() % 5) - 1);
  const auto out = project_labels(h, comp);
  ASSERT_EQ(out.size(), 400u);
  for (int c = -1; c < 4; ++c) {
    std::size_t expect = 0;
    for (std::size_t j = 0; j < h.n_final; ++j) expect += comp.labels[j] == c ? h.cumulative_sizes[j] : 0;
    EXPECT_EQ(static_cast<std::size_t>(std::count(out.labels.begin(), out.labels.end(), c)), expect);
  }
}

TEST(HierarchyFile, RoundTrip) {
  std::mt19937_64 rng(21);
  const auto h = compress_data(oracle::clumpy_matrix(300, 3, 3, rng), 10.0, 10, 10, 0);
  std::stringstream buf;
  write_hierarchy(buf, h);
  const auto back = read_hierarchy(buf);
  EXPECT_EQ(back.n_original, h.n_original);
  EXPECT_EQ(back.n_final, h.n_final);
  EXPECT_EQ(back.cumulative_sizes, h.cumulative_sizes);
  EXPECT_EQ(flatten(back), flatten(h));

  std::stringstream bad("specdb-hierarchy 1\n4 2 1\n4 2\n0 0 1\n");
  EXPECT_THROW(read_hierarchy(bad), FormatError);
  std::stringstream gap("specdb-hierarchy 1\n4 3 1\n4 3\n0 0 2 2\n");
  EXPECT_THROW(read_hierarchy(gap), ConsistencyError);
  std::stringstream magic("nope 1\n");
  EXPECT_THROW(read_hierarchy(magic), FormatError);
}
