#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace specdb {

// Reference class ids for evaluation.
struct GroundTruth {
  std::vector<int> labels;
  int n_classes = 0;

  // n_classes is one past the largest id seen.
  static GroundTruth from_labels(std::vector<int> labels) {
    GroundTruth gt;
    int max_id = -1;
    for (int id : labels) {
      if (id < 0) throw std::invalid_argument("GroundTruth: negative class id " + std::to_string(id));
      max_id = std::max(max_id, id);
    }
    gt.labels = std::move(labels);
    gt.n_classes = max_id + 1;
    return gt;
  }

  std::size_t size() const noexcept { return labels.size(); }
};

inline constexpr int kNoise = -1;

// Per-point cluster ids in [0, n_clusters) or kNoise.
struct ClusterLabels {
  std::vector<int> labels;
  int n_clusters = 0;

  std::size_t size() const noexcept { return labels.size(); }

  std::size_t noise_count() const noexcept {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kNoise));
  }

  // Ids must be exactly {0..n_clusters-1}, each used at least once.
  bool valid() const {
    std::vector<char> seen(static_cast<std::size_t>(std::max(n_clusters, 0)), 0);
    for (int id : labels) {
      if (id == kNoise) continue;
      if (id < 0 || id >= n_clusters) return false;
      seen[static_cast<std::size_t>(id)] = 1;
    }
    return std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; });
  }

  friend bool operator==(const ClusterLabels&, const ClusterLabels&) = default;
};

}  // namespace specdb
