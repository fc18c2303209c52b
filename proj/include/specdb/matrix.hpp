#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace specdb {

// Dense row-major n x D sample matrix. Rows are samples (original points or
// pseudo-samples), columns are features.
class DataMatrix {
 public:
  DataMatrix() = default;

  DataMatrix(std::size_t n_samples, std::size_t n_features)
      : n_(n_samples), d_(n_features), values_(n_samples * n_features, 0.0) {
    check_shape();
  }

  DataMatrix(std::size_t n_samples, std::size_t n_features, std::vector<double> values)
      : n_(n_samples), d_(n_features), values_(std::move(values)) {
    check_shape();
    if (values_.size() != n_ * d_) {
      throw std::invalid_argument("DataMatrix: expected " + std::to_string(n_ * d_) +
                                  " values, got " + std::to_string(values_.size()));
    }
    if (!all_finite()) throw std::invalid_argument("DataMatrix: non-finite value");
  }

  std::size_t rows() const noexcept { return n_; }
  std::size_t cols() const noexcept { return d_; }
  bool empty() const noexcept { return n_ == 0; }

  std::span<const double> row(std::size_t i) const { return {values_.data() + i * d_, d_}; }
  std::span<double> row(std::size_t i) { return {values_.data() + i * d_, d_}; }

  double operator()(std::size_t i, std::size_t j) const { return values_[i * d_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * d_ + j]; }

  std::span<const double> values() const noexcept { return values_; }

  bool all_finite() const noexcept {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const DataMatrix&, const DataMatrix&) = default;

 private:
  void check_shape() const {
    if (n_ < 1 || d_ < 1) throw std::invalid_argument("DataMatrix: need at least one row and one column");
  }

  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<double> values_;
};

// Squared Euclidean distance, accumulated in feature order. Every distance in
// the library goes through here so that tie-breaks are reproducible.
inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace specdb
