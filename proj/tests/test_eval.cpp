#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "specdb/specdb.hpp"
#include "test_util.hpp"

using namespace specdb;

namespace {

double total_cost(const std::vector<double>& cost, const std::vector<std::size_t>& a) {
  double t = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) t += cost[i * a.size() + a[i]];
  return t;
}

ClusterLabels labels_of(std::vector<int> ids) {
  ClusterLabels l;
  for (int id : ids) l.n_clusters = std::max(l.n_clusters, id + 1);
  l.labels = std::move(ids);
  return l;
}

}  // namespace

TEST(Hungarian, TwoByTwo) {
  const std::vector<double> diag{1, 2, 2, 1};
  EXPECT_EQ(hungarian(diag, 2), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(total_cost(diag, hungarian(diag, 2)), 2.0);
  const std::vector<double> anti{2, 1, 1, 2};
  EXPECT_EQ(hungarian(anti, 2), (std::vector<std::size_t>{1, 0}));
}

TEST(Hungarian, Errors) {
  EXPECT_THROW(hungarian(std::vector<double>{1, 2, 3}, 2), std::invalid_argument);
  EXPECT_THROW(hungarian(std::vector<double>{1, std::nan("")}, 1), std::invalid_argument);
  EXPECT_TRUE(hungarian(std::vector<double>{}, 0).empty());
}

TEST(Hungarian, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> small(-20, 20);
  std::uniform_real_distribution<double> real(-1.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + trial % 7;
    std::vector<double> cost(n * n);
    for (double& c : cost) c = trial % 2 ? small(rng) : real(rng);
    const auto a = hungarian(cost, n);
    std::vector<std::size_t> sorted(a);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(sorted[i], i);
    if (trial % 2) {
      ASSERT_EQ(total_cost(cost, a), oracle::assignment_min(cost, n));
    } else {
      ASSERT_NEAR(total_cost(cost, a), oracle::assignment_min(cost, n), 1e-12);
    }
  }
}

TEST(Accuracy, Examples) {
  const auto truth = GroundTruth::from_labels({0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
  EXPECT_EQ(clustering_accuracy(labels_of({1, 1, 1, 1, 1, 0, 0, 0, 0, 0}), truth), 100.0);
  EXPECT_EQ(clustering_accuracy(labels_of(std::vector<int>(10, 0)), truth), 50.0);
  EXPECT_EQ(clustering_accuracy(labels_of(std::vector<int>(10, kNoise)), truth), 50.0);
  EXPECT_THROW(clustering_accuracy(labels_of({0, 1}), truth), std::invalid_argument);
}

TEST(Accuracy, NoiseIsOneExtraCluster) {
  // Noise matched to class 2 beats leaving class 2 unmatched.
  const auto truth = GroundTruth::from_labels({0, 0, 1, 1, 2, 2});
  EXPECT_NEAR(clustering_accuracy(labels_of({0, 0, 1, 1, kNoise, kNoise}), truth), 100.0, 1e-12);
  // Noise spread over classes can match at most one.
  EXPECT_NEAR(clustering_accuracy(labels_of({kNoise, 0, kNoise, 1, kNoise, 1}), truth), 50.0, 1e-12);
}

TEST(Accuracy, MatchesOracleAndRelabelInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    const int classes = 1 + static_cast<int>(rng() % 4);
    const int clusters = static_cast<int>(rng() % 5);
    std::vector<int> t(n);
    std::vector<int> p(n);
    for (auto& x : t) x = static_cast<int>(rng() % static_cast<unsigned>(classes));
    for (auto& x : p) x = clusters == 0 ? kNoise : static_cast<int>(rng() % static_cast<unsigned>(clusters + 1)) - 1;
    // Compact predicted ids so the labelling is valid.
    std::map<int, int> remap;
    for (int& x : p) {
      if (x == kNoise) continue;
      x = remap.emplace(x, static_cast<int>(remap.size())).first->second;
    }
    const auto pred = labels_of(p);
    const auto truth = GroundTruth::from_labels(t);
    const double acc = clustering_accuracy(pred, truth);
    EXPECT_NEAR(acc, oracle::accuracy(p, t), 1e-9);

    std::vector<int> perm(static_cast<std::size_t>(pred.n_clusters));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> q(p);
    for (int& x : q) {
      if (x != kNoise) x = perm[static_cast<std::size_t>(x)];
    }
    EXPECT_EQ(clustering_accuracy(labels_of(q), truth), acc);
    EXPECT_EQ(clustering_accuracy(labels_of(t), truth), 100.0);
  }
}

TEST(KMeans, SeparatedPairs) {
  const DataMatrix m(4, 2, {0, 0, 0.1, 0, 10, 10, 10, 10.1});
  const auto r = kmeans(m, 2, 1);
  EXPECT_EQ(r.labels.labels[0], r.labels.labels[1]);
  EXPECT_EQ(r.labels.labels[2], r.labels.labels[3]);
  EXPECT_NE(r.labels.labels[0], r.labels.labels[2]);
}

TEST(KMeans, KEqualsN) {
  std::mt19937_64 rng(7);
  const auto m = oracle::random_matrix(12, 3, rng);
  const auto r = kmeans(m, 12, 3);
  EXPECT_EQ(r.inertia, 0.0);
  std::vector<int> ids(r.labels.labels);
  std::sort(ids.begin(), ids.end());
  for (int i = 0; i < 12; ++i) EXPECT_EQ(ids[static_cast<std::size_t>(i)], i);
}

TEST(KMeans, SingleClusterIsMean) {
  std::mt19937_64 rng(9);
  const auto m = oracle::random_matrix(100, 4, rng, 10.0);
  const auto r = kmeans(m, 1, 0);
  for (std::size_t j = 0; j < 4; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 100; ++i) mean += m(i, j);
    EXPECT_NEAR(r.centroids(0, j), mean / 100.0, 1e-9);
  }
  EXPECT_THROW(kmeans(m, 101, 0), std::invalid_argument);
  EXPECT_THROW(kmeans(m, 0, 0), std::invalid_argument);
}

TEST(KMeans, DeterministicAndNoEmptyClusters) {
  std::mt19937_64 rng(11);
  const auto m = oracle::clumpy_matrix(300, 2, 4, rng);
  for (std::size_t k : {2u, 5u, 30u}) {
    const auto a = kmeans(m, k, 4);
    const auto b = kmeans(m, k, 4);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_TRUE(a.labels.valid());
  }
  // Many duplicates force the empty-cluster repair.
  const DataMatrix dup(6, 1, {0, 0, 0, 0, 0, 1});
  const auto r = kmeans(dup, 3, 0);
  EXPECT_TRUE(r.labels.valid());
}

TEST(Demo, CirclesContrast) {
  testutil::TempDir dir;
  DemoConfig cfg;
  cfg.kind = DemoKind::two_circles;
  const auto res = spectral_vs_raw_demo(cfg, dir.path().string());
  EXPECT_LE(res.raw_accuracy, 60.0);
  EXPECT_GE(res.spectral_accuracy, 99.0);
  for (const char* f : {"data.csv", "raw_labels.csv", "spectral_labels.csv", "accuracy.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir.path() / f)) << f;
  }
  const auto again = spectral_vs_raw_demo(cfg);
  EXPECT_EQ(again.raw_labels, res.raw_labels);
  EXPECT_EQ(again.spectral_labels, res.spectral_labels);
}

TEST(Demo, MoonsContrast) {
  DemoConfig cfg;
  cfg.kind = DemoKind::two_moons;
  const auto res = spectral_vs_raw_demo(cfg);
  EXPECT_LT(res.raw_accuracy, 90.0);
  EXPECT_GE(res.spectral_accuracy, 99.0);
  cfg.n = 10;
  EXPECT_THROW(spectral_vs_raw_demo(cfg), std::invalid_argument);
}

TEST(Pipeline, RatioOneIsPlainDbscan) {
  const auto [m, truth] = make_two_moons(600, 0.05, 3);
  PipelineConfig cfg;
  cfg.dbscan = {suggest_eps(m, 9, 95.0), 10};
  const auto res = run_pipeline(m, &truth, cfg);
  EXPECT_EQ(res.labels, dbscan(m, cfg.dbscan));
  EXPECT_FALSE(res.hierarchy.has_value());
  EXPECT_EQ(res.record.n_compressed, 600u);
  EXPECT_EQ(res.record.compress_seconds, 0.0);
  ASSERT_TRUE(res.record.accuracy_pct.has_value());
  EXPECT_EQ(*res.record.accuracy_pct, clustering_accuracy(res.labels, truth));
  EXPECT_FALSE(run_pipeline(m, nullptr, cfg).record.accuracy_pct.has_value());
}

TEST(Pipeline, DuplicatedDataMatchesDeduplicated) {
  std::mt19937_64 rng(13);
  const auto base = oracle::clumpy_matrix(150, 2, 3, rng);
  DataMatrix twice(300, 2);
  for (std::size_t i = 0; i < 150; ++i) {
    for (std::size_t j = 0; j < 2; ++j) twice(2 * i, j) = twice(2 * i + 1, j) = base(i, j);
  }
  PipelineConfig cfg;
  cfg.ratio = 2.0;
  cfg.dbscan = {suggest_eps(base, 4, 90.0), 5};
  const auto res = run_pipeline(twice, nullptr, cfg);
  const auto plain = dbscan(base, cfg.dbscan);
  ASSERT_EQ(res.labels.size(), 300u);
  // Same partition of the originals; ids may be renumbered.
  std::vector<int> expect(300);
  for (std::size_t i = 0; i < 300; ++i) expect[i] = plain.labels[i / 2];
  EXPECT_EQ(oracle::partition(res.labels.labels), oracle::partition(expect));
}

TEST(Pipeline, MoonsRatioTwoCloseToBaseline) {
  const auto [m, truth] = make_two_moons(2000, 0.05, 7);
  PipelineConfig cfg;
  cfg.dbscan = {suggest_eps(m, 29, 95.0), 30};
  cfg.weighted_min_pts = true;
  const double base = *run_pipeline(m, &truth, cfg).record.accuracy_pct;
  cfg.ratio = 2.0;
  const auto res = run_pipeline(m, &truth, cfg);
  EXPECT_GE(*res.record.accuracy_pct, base - 2.0);
  EXPECT_EQ(res.record.n_compressed, 1000u);
  EXPECT_TRUE(res.labels.valid());
}

TEST(Sweep, RecordsAndRoundTrip) {
  testutil::TempDir dir;
  const auto [m, truth] = make_blobs(800, 4, 3, 0.5, 5.0, 1);
  PipelineConfig cfg;
  cfg.dataset_name = "blobs";
  cfg.dbscan = {suggest_eps(m, 4, 90.0), 5};
  const std::vector<double> ratios{1, 2, 5, 10};
  const auto recs = benchmark_sweep(m, &truth, ratios, cfg, dir.file("s.csv"));
  ASSERT_EQ(recs.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(recs[i].n_compressed, static_cast<std::size_t>(std::ceil(800.0 / ratios[i])));
    EXPECT_LE(recs[i].n_compressed, recs[i].n_original);
    EXPECT_GE(recs[i].compress_seconds, 0.0);
    EXPECT_GE(recs[i].dbscan_seconds, 0.0);
    EXPECT_GE(recs[i].total_seconds, 0.0);
    ASSERT_TRUE(recs[i].accuracy_pct.has_value());
    EXPECT_GE(*recs[i].accuracy_pct, 0.0);
    EXPECT_LE(*recs[i].accuracy_pct, 100.0);
  }
  EXPECT_EQ(read_benchmark_csv(dir.file("s.csv")), recs);
  EXPECT_EQ(testutil::read_file(dir.file("s.csv")).substr(0, std::string(kBenchmarkHeader).size()), kBenchmarkHeader);
  EXPECT_THROW(benchmark_sweep(m, &truth, std::vector<double>{}, cfg), std::invalid_argument);
  EXPECT_THROW(benchmark_sweep(m, &truth, std::vector<double>{0.5}, cfg), std::invalid_argument);
}

TEST(Sweep, DbscanTimeFallsWithRatio) {
  const auto [m, truth] = make_two_moons(6000, 0.05, 2);
  PipelineConfig cfg;
  cfg.dbscan = {suggest_eps(m, 9, 95.0), 10};
  cfg.weighted_min_pts = true;
  const std::vector<double> ratios{1, 2, 5, 10};
  const auto recs = benchmark_sweep(m, &truth, ratios, cfg);
  for (std::size_t i = 1; i < recs.size(); ++i) EXPECT_LT(recs[i].dbscan_seconds, recs[i - 1].dbscan_seconds);
}
