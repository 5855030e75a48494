#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "rdimkd/error.hpp"
#include "rdimkd/matrix.hpp"
#include "rdimkd/rng.hpp"

namespace rdimkd {

inline constexpr double kPivotTolerance = 1e-12;
inline constexpr int kJacobiMaxSweeps = 100;

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // descending
  Matrix eigenvectors;              // column i pairs with eigenvalues[i]
};

namespace detail {

inline double dot_col(const Matrix& m, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, a) * m(i, b);
  return s;
}

// Flip column j so its largest-magnitude entry is positive. Near-ties are
// resolved toward the lowest row index.
inline void canonicalize_sign(Matrix& v, std::size_t j) {
  double best = 0.0;
  for (std::size_t i = 0; i < v.rows(); ++i) best = std::max(best, std::abs(v(i, j)));
  for (std::size_t i = 0; i < v.rows(); ++i) {
    if (std::abs(v(i, j)) >= best - 1e-12) {
      if (v(i, j) < 0.0)
        for (std::size_t r = 0; r < v.rows(); ++r) v(r, j) = -v(r, j);
      return;
    }
  }
}

}  // namespace detail

/// Modified Gram–Schmidt with one re-orthogonalization pass.
///
/// Throws RankDeficient when a column's residual norm after projecting out
/// the previous columns is at or below kPivotTolerance.
inline Matrix gram_schmidt_orthonormalize(const Matrix& m) {
  if (m.cols() > m.rows()) {
    throw Error(Errc::InvalidDims, "gram_schmidt needs cols <= rows, got " + m.shape_str());
  }
  Matrix q = m;
  const std::size_t n = q.rows();
  for (std::size_t j = 0; j < q.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        const double proj = detail::dot_col(q, k, j);
        for (std::size_t i = 0; i < n; ++i) q(i, j) -= proj * q(i, k);
      }
      const double norm = std::sqrt(detail::dot_col(q, j, j));
      if (pass == 0 && norm <= kPivotTolerance) {
        throw Error(Errc::RankDeficient, "pivot norm " + format_double(norm, 6) + " at column " + std::to_string(j));
      }
      for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
    }
  }
  return q;
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Runs full sweeps until every off-diagonal entry is negligible; gives up
/// with NoConvergence after kJacobiMaxSweeps sweeps. Eigenvalues come back descending, and each
/// eigenvector's largest-magnitude entry is positive.
inline EigenDecomposition symmetric_eigen(const Matrix& input) {
  if (input.rows() != input.cols()) throw Error(Errc::ShapeMismatch, "symmetric_eigen needs a square matrix");
  const std::size_t n = input.rows();
  const double scale = max_abs(input);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(input(i, j) - input(j, i)) > 1e-9 * scale) {
        throw Error(Errc::NotSymmetric, "asymmetry at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }

  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (input(i, j) + input(j, i));
  Matrix v = Matrix::identity(n);

  // An element is dropped once adding it to both diagonal entries would not
  // change them in floating point, or it is negligible against the whole
  // matrix. Convergence is a sweep with no rotations left to apply.
  const double negligible = 1e-20 * frobenius(a);
  bool converged = false;
  for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double g = 100.0 * std::abs(apq);
        if ((std::abs(a(p, p)) + g == std::abs(a(p, p)) && std::abs(a(q, q)) + g == std::abs(a(q, q))) ||
            std::abs(apq) <= negligible) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        converged = false;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) {
    throw Error(Errc::NoConvergence, "Jacobi did not converge in " + std::to_string(kJacobiMaxSweeps) + " sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  EigenDecomposition out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, j) = v(i, order[j]);
    detail::canonicalize_sign(out.eigenvectors, j);
  }
  return out;
}

inline std::vector<double> column_means(const Matrix& f) {
  std::vector<double> mean(f.cols(), 0.0);
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t j = 0; j < f.cols(); ++j) mean[j] += f(i, j);
  for (double& m : mean) m /= static_cast<double>(f.rows());
  return mean;
}

inline Matrix center_columns(const Matrix& f) {
  const auto mean = column_means(f);
  Matrix out = f;
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t j = 0; j < f.cols(); ++j) out(i, j) -= mean[j];
  return out;
}

/// (1/(N−1))·F̂ᵀF̂ with F̂ the column-centered input. Exactly symmetric.
inline Matrix centered_covariance(const Matrix& f) {
  if (f.rows() < 2) throw Error(Errc::TooFewSamples, "covariance needs N >= 2, got " + std::to_string(f.rows()));
  const Matrix centered = center_columns(f);
  const std::size_t c = f.cols();
  const double inv = 1.0 / static_cast<double>(f.rows() - 1);
  Matrix cov(c, c);
  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t b = a; b < c; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < f.rows(); ++i) s += centered(i, a) * centered(i, b);
      cov(a, b) = cov(b, a) = s * inv;
    }
  }
  return cov;
}

/// Entries i.i.d. Normal(0, stddev²), filled in row-major order.
inline Matrix gaussian_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double stddev) {
  if (!(stddev > 0.0)) throw Error(Errc::ValidationError, "gaussian_matrix needs stddev > 0");
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal(0.0, stddev);
  return m;
}

/// Orthonormal basis of the complement of span(k), k column-orthonormal.
/// Completes k with seeded Gaussian fill and re-draws on degenerate fills.
inline Matrix orthogonal_complement(const Matrix& k, SeededRng& rng) {
  const std::size_t c = k.rows(), d = k.cols();
  if (d > c) throw Error(Errc::InvalidDims, "complement of " + k.shape_str());
  if (d == c) return Matrix(c, 0);
  for (int attempt = 0; attempt < 16; ++attempt) {
    Matrix full(c, c);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < d; ++j) full(i, j) = k(i, j);
    Matrix fill = gaussian_matrix(rng, c, c - d, 1.0);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = d; j < c; ++j) full(i, j) = fill(i, j - d);
    try {
      return gram_schmidt_orthonormalize(full).cols_range(d, c - d);
    } catch (const Error& e) {
      if (e.code() != Errc::RankDeficient) throw;
    }
  }
  throw Error(Errc::RankDeficient, "could not complete basis; input columns likely not independent");
}

}  // namespace rdimkd
