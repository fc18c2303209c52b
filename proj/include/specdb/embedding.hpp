#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "specdb/dataset.hpp"
#include "specdb/error.hpp"
#include "specdb/graph.hpp"
#include "specdb/matrix.hpp"

namespace specdb {

// Above this many vertices the dense solver refuses to run.
inline constexpr std::size_t kDenseCutoff = 2000;

// Eigenpairs in ascending eigenvalue order; vector i occupies
// vectors[i*n, (i+1)*n).
struct Eigenpairs {
  std::size_t n = 0;
  std::vector<double> values;
  std::vector<double> vectors;
  std::size_t matvecs = 0;  // iterative solver work, 0 for the dense path

  std::size_t size() const noexcept { return values.size(); }
  std::span<const double> vector(std::size_t i) const { return {vectors.data() + i * n, n}; }
  std::span<double> vector(std::size_t i) { return {vectors.data() + i * n, n}; }
};

struct SpectralEmbedding {
  std::size_t n_points = 0;
  std::size_t r = 0;
  std::vector<double> coords;       // row-major n_points x r
  std::vector<double> eigenvalues;  // ascending, length r

  std::span<const double> row(std::size_t u) const { return {coords.data() + u * r, r}; }
  double operator()(std::size_t u, std::size_t c) const { return coords[u * r + c]; }
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm2(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

// Largest-magnitude entry made positive; ties go to the lowest index.
inline void fix_sign(std::span<double> v) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  }
  if (!v.empty() && v[best] < 0.0) {
    for (double& x : v) x = -x;
  }
}

// Cyclic Jacobi on a dense symmetric row-major matrix. Returns all pairs in
// ascending order. The matrix is consumed.
inline Eigenpairs jacobi_eigen(std::vector<double> a, std::size_t n) {
  // Rows of w are the eigenvector estimates (w = V^T).
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 1.0;

  double frob = 0.0;
  for (double x : a) frob += x * x;
  const double target = 1e-30 * frob;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    }
    if (off <= target || off == 0.0) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double app = a[p * n + p];
        const double aqq = a[q * n + q];
        // Negligible against both diagonal entries after the first sweeps.
        if (sweep > 3 && std::abs(apq) < 1e-18 * std::min(std::abs(app), std::abs(aqq))) {
          a[p * n + q] = a[q * n + p] = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        double* rp = &a[p * n];
        double* rq = &a[q * n];
        for (std::size_t j = 0; j < n; ++j) {
          const double xp = rp[j];
          const double xq = rq[j];
          rp[j] = c * xp - s * xq;
          rq[j] = s * xp + c * xq;
        }
        for (std::size_t j = 0; j < n; ++j) {
          a[j * n + p] = rp[j];
          a[j * n + q] = rq[j];
        }
        rp[p] = app - t * apq;
        rq[q] = aqq + t * apq;
        rp[q] = rq[p] = 0.0;

        double* wp = &w[p * n];
        double* wq = &w[q * n];
        for (std::size_t j = 0; j < n; ++j) {
          const double xp = wp[j];
          const double xq = wq[j];
          wp[j] = c * xp - s * xq;
          wq[j] = s * xp + c * xq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x * n + x] < a[y * n + y]; });
  Eigenpairs out;
  out.n = n;
  out.values.resize(n);
  out.vectors.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = a[order[i] * n + order[i]];
    std::copy_n(&w[order[i] * n], n, &out.vectors[i * n]);
  }
  return out;
}

}  // namespace detail

// Full dense decomposition, smallest m pairs returned.
inline Eigenpairs smallest_eigenpairs_dense(const LaplacianMatrix& L, std::size_t m) {
  const std::size_t n = L.n_vertices;
  if (n > kDenseCutoff) {
    throw std::invalid_argument("dense eigensolver limited to " + std::to_string(kDenseCutoff) + " vertices (got " +
                                std::to_string(n) + "); use the Lanczos path");
  }
  if (m < 1 || m > n) throw std::invalid_argument("dense eigensolver: need 1 <= m <= n");
  Eigenpairs all = detail::jacobi_eigen(L.to_dense(), n);
  all.values.resize(m);
  all.vectors.resize(m * n);
  for (std::size_t i = 0; i < m; ++i) detail::fix_sign(all.vector(i));
  return all;
}

struct LanczosOptions {
  double tol = 1e-8;
  std::size_t max_iter = 20000;  // matrix-vector products
  std::uint64_t seed = 0;
  std::size_t basis_size = 0;  // 0: chosen from m
};

// Thick-restart Lanczos with full reorthogonalisation. The null space of L is
// known exactly (one indicator per connected component), so it is deflated
// from the Krylov basis and those vectors are returned as the leading
// zero-eigenvalue pairs. Converged when every wanted Ritz pair has residual
// norm <= tol * max(1, |theta|).
inline Eigenpairs smallest_eigenpairs_lanczos(const LaplacianMatrix& L, std::size_t m, const LanczosOptions& opts = {}) {
  const std::size_t n = L.n_vertices;
  if (m < 1 || m + 1 > n) {
    throw std::invalid_argument("Lanczos: need 1 <= m <= n-1 (m = " + std::to_string(m) + ", n = " +
                                std::to_string(n) + ")");
  }
  if (!(opts.tol > 0.0)) throw std::invalid_argument("Lanczos: tol must be positive");

  const auto comp = connected_components(L);
  const std::size_t n_comp = comp.empty() ? 0 : static_cast<std::size_t>(*std::max_element(comp.begin(), comp.end())) + 1;
  std::vector<double> comp_norm(n_comp, 0.0);
  for (int c : comp) comp_norm[static_cast<std::size_t>(c)] += 1.0;
  for (double& s : comp_norm) s = 1.0 / std::sqrt(s);

  Eigenpairs out;
  out.n = n;
  const std::size_t n_null = std::min(m, n_comp);
  for (std::size_t c = 0; c < n_null; ++c) {
    out.values.push_back(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      out.vectors.push_back(static_cast<std::size_t>(comp[i]) == c ? comp_norm[c] : 0.0);
    }
  }
  if (m <= n_comp) return out;

  const std::size_t wanted = m - n_comp;
  const std::size_t space = n - n_comp;  // dimension of the deflated problem
  std::size_t p = opts.basis_size ? opts.basis_size : std::max<std::size_t>(2 * wanted + 10, 40);
  p = std::min(std::max(p, wanted + 1), space);

  // Removes every component-indicator direction: subtract the per-component mean.
  std::vector<double> comp_sum(n_comp);
  auto deflate = [&](std::span<double> v) {
    std::fill(comp_sum.begin(), comp_sum.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) comp_sum[static_cast<std::size_t>(comp[i])] += v[i];
    for (std::size_t c = 0; c < n_comp; ++c) comp_sum[c] *= comp_norm[c] * comp_norm[c];
    for (std::size_t i = 0; i < n; ++i) v[i] -= comp_sum[static_cast<std::size_t>(comp[i])];
  };

  std::vector<double> basis((p + 1) * n, 0.0);
  auto col = [&](std::size_t j) { return std::span<double>(basis.data() + j * n, n); };
  std::vector<double> h(p + 1);

  // Orthogonalises v against basis columns [0, count) and the null space,
  // writing the projection coefficients to h. Returns the remaining norm.
  auto orthogonalize = [&](std::span<double> v, std::size_t count) {
    std::fill(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(count), 0.0);
    double before = detail::norm2(v);
    for (int pass = 0; pass < 3; ++pass) {
      deflate(v);
      for (std::size_t i = 0; i < count; ++i) {
        const double coef = detail::dot(col(i), v);
        h[i] += coef;
        const auto ci = col(i);
        for (std::size_t t = 0; t < n; ++t) v[t] -= coef * ci[t];
      }
      const double after = detail::norm2(v);
      if (after > 0.7 * before) return after;
      before = after;
    }
    return detail::norm2(v);
  };

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_unit = [&](std::span<double> v, std::size_t against) {
    for (int attempt = 0; attempt < 8; ++attempt) {
      for (double& x : v) x = gauss(rng);
      const double nrm = orthogonalize(v, against);
      if (nrm > 1e-10) {
        for (double& x : v) x /= nrm;
        return;
      }
    }
    throw NumericalError("Lanczos: could not extend the Krylov basis");
  };

  random_unit(col(0), 0);

  std::vector<double> T(p * p, 0.0);
  std::vector<double> coupling(p, 0.0);  // T[kept][i] after a restart
  std::vector<double> theta(wanted, 0.0);
  std::vector<double> residual(wanted, 0.0);
  std::size_t kept = 0;
  std::size_t matvecs = 0;
  double beta_last = 0.0;

  for (;;) {
    for (std::size_t j = kept; j < p; ++j) {
      auto w = col(j + 1);
      L.multiply(col(j), w);
      ++matvecs;
      const double beta = orthogonalize(w, j + 1);
      for (std::size_t i = 0; i <= j; ++i) {
        T[i * p + j] = h[i];
        T[j * p + i] = h[i];
      }
      if (j + 1 < p) {
        if (beta > 1e-12 * std::max(1.0, std::abs(T[j * p + j]))) {
          for (double& x : w) x /= beta;
        } else {
          // Invariant subspace reached; continue from a fresh direction.
          random_unit(w, j + 1);
        }
      } else {
        beta_last = beta;
        if (beta > 0.0) {
          for (double& x : w) x /= beta;
        } else {
          random_unit(w, p);
        }
      }
    }

    Eigenpairs ritz = detail::jacobi_eigen(T, p);
    bool converged = true;
    for (std::size_t i = 0; i < wanted; ++i) {
      theta[i] = ritz.values[i];
      residual[i] = std::abs(beta_last * ritz.vectors[i * p + (p - 1)]);
      if (residual[i] > opts.tol * std::max(1.0, std::abs(theta[i]))) converged = false;
    }
    // A full-space basis is exact regardless of the estimate.
    if (p == space) converged = true;

    const bool give_up = !converged && matvecs >= opts.max_iter;
    const std::size_t keep = (converged || give_up) ? wanted : std::min(wanted + (p - wanted) / 2, p - 1);

    std::vector<double> ritz_vectors(keep * n, 0.0);
    for (std::size_t i = 0; i < keep; ++i) {
      double* dst = ritz_vectors.data() + i * n;
      for (std::size_t l = 0; l < p; ++l) {
        const double y = ritz.vectors[i * p + l];
        const auto cl = col(l);
        for (std::size_t t = 0; t < n; ++t) dst[t] += y * cl[t];
      }
    }

    if (converged || give_up) {
      std::vector<double> lx(n);
      for (std::size_t i = 0; i < wanted; ++i) {
        std::span<double> x(ritz_vectors.data() + i * n, n);
        const double nrm = detail::norm2(x);
        for (double& v : x) v /= nrm;
        L.multiply(x, lx);
        for (std::size_t t = 0; t < n; ++t) lx[t] -= theta[i] * x[t];
        residual[i] = detail::norm2(lx);
      }
      if (give_up) {
        throw NumericalError("Lanczos did not converge after " + std::to_string(matvecs) + " matrix-vector products",
                             residual);
      }
      out.matvecs = matvecs;
      for (std::size_t i = 0; i < wanted; ++i) {
        out.values.push_back(theta[i]);
        std::span<double> x(ritz_vectors.data() + i * n, n);
        detail::fix_sign(x);
        out.vectors.insert(out.vectors.end(), x.begin(), x.end());
      }
      return out;
    }

    // Restart: kept Ritz vectors, then the last Lanczos vector.
    std::copy(ritz_vectors.begin(), ritz_vectors.end(), basis.begin());
    std::copy_n(basis.begin() + static_cast<std::ptrdiff_t>(p * n), n, basis.begin() + static_cast<std::ptrdiff_t>(keep * n));
    std::fill(T.begin(), T.end(), 0.0);
    for (std::size_t i = 0; i < keep; ++i) {
      T[i * p + i] = ritz.values[i];
      coupling[i] = beta_last * ritz.vectors[i * p + (p - 1)];
      T[keep * p + i] = T[i * p + keep] = coupling[i];
    }
    kept = keep;
  }
}

struct EmbedOptions {
  // Graphs up to this size use the dense solver.
  std::size_t dense_threshold = 200;
  LanczosOptions lanczos{1e-7, 20000, 0, 0};
};

// First r nontrivial Laplacian eigenvectors as per-point coordinates. Pairs
// with eigenvalue below 1e-8 times the Gershgorin estimate of the largest
// eigenvalue (one per connected component) are discarded before counting r.
inline SpectralEmbedding embed(const LaplacianMatrix& L, std::size_t r, const EmbedOptions& opts = {}) {
  const std::size_t n = L.n_vertices;
  if (r < 1 || r + 1 > n) {
    throw std::invalid_argument("embed: need 1 <= r <= n-1 (r = " + std::to_string(r) + ", n = " + std::to_string(n) +
                                ")");
  }
  const auto comp = connected_components(L);
  const std::size_t n_comp = static_cast<std::size_t>(*std::max_element(comp.begin(), comp.end())) + 1;
  if (r > n - n_comp) {
    throw std::invalid_argument("embed: r = " + std::to_string(r) + " exceeds the " + std::to_string(n - n_comp) +
                                " nontrivial eigenpairs by " + std::to_string(r - (n - n_comp)));
  }

  const bool dense = n <= opts.dense_threshold;
  Eigenpairs pairs = dense ? smallest_eigenpairs_dense(L, n)
                           : smallest_eigenpairs_lanczos(L, std::min(r + n_comp, n - 1), opts.lanczos);

  const double cutoff = 1e-8 * L.max_eigenvalue_bound();
  std::size_t first = 0;
  while (first < pairs.size() && pairs.values[first] < cutoff) ++first;
  if (pairs.size() - first < r) {
    throw NumericalError("embed: only " + std::to_string(pairs.size() - first) + " nontrivial eigenpairs available, " +
                         std::to_string(r) + " requested");
  }

  SpectralEmbedding emb;
  emb.n_points = n;
  emb.r = r;
  emb.coords.resize(n * r);
  emb.eigenvalues.resize(r);
  for (std::size_t c = 0; c < r; ++c) {
    emb.eigenvalues[c] = pairs.values[first + c];
    const auto v = pairs.vector(first + c);
    for (std::size_t u = 0; u < n; ++u) emb.coords[u * r + c] = v[u];
  }
  return emb;
}

inline DataMatrix to_matrix(const SpectralEmbedding& emb) { return DataMatrix(emb.n_points, emb.r, emb.coords); }

inline void write_embedding_csv(const std::string& path, const SpectralEmbedding& emb) {
  write_csv(path, to_matrix(emb));
}

}  // namespace specdb
