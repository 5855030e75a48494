#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "rdimkd/linalg.hpp"

using namespace rdimkd;

namespace {

Matrix reconstruct(const EigenDecomposition& e) {
  const std::size_t n = e.eigenvalues.size();
  Matrix scaled = e.eigenvectors;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scaled(i, j) *= e.eigenvalues[j];
  return matmul_nt(scaled, e.eigenvectors);
}

}  // namespace

TEST(GramSchmidt, OrthonormalInputIsUnchanged) {
  const Matrix m = Matrix::identity(3).cols_range(0, 2);
  EXPECT_EQ(gram_schmidt_orthonormalize(m), m);
}

TEST(GramSchmidt, HandWorkedTwoColumns) {
  const Matrix m{{1, 0}, {1, 1}, {0, 1}};
  const Matrix q = gram_schmidt_orthonormalize(m);
  const double s2 = 1.0 / std::sqrt(2.0), s6 = 1.0 / std::sqrt(6.0);
  EXPECT_NEAR(q(0, 0), s2, 1e-12);
  EXPECT_NEAR(q(1, 0), s2, 1e-12);
  EXPECT_NEAR(q(2, 0), 0.0, 1e-12);
  EXPECT_NEAR(q(0, 1), -s6, 1e-12);
  EXPECT_NEAR(q(1, 1), s6, 1e-12);
  EXPECT_NEAR(q(2, 1), 2.0 * s6, 1e-12);
  EXPECT_NEAR(q(2, 1), 0.81650, 1e-5);
}

TEST(GramSchmidt, SeededGaussianDrawsAreOrthonormalAndIdempotent) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeededRng rng(seed);
    const Matrix q = gram_schmidt_orthonormalize(gaussian_matrix(rng, 40, 12, 1.0));
    EXPECT_LE(orthonormality_defect(q), 1e-10);
    EXPECT_LE(max_abs_diff(gram_schmidt_orthonormalize(q), q), 1e-12);
  }
}

TEST(GramSchmidt, SpanIsPreserved) {
  SeededRng rng(3);
  const Matrix m = gaussian_matrix(rng, 10, 4, 1.0);
  const Matrix q = gram_schmidt_orthonormalize(m);
  // Every input column is reproduced by projecting onto span(Q).
  const Matrix residual = m - q * matmul_tn(q, m);
  EXPECT_LE(max_abs(residual), 1e-12);
}

TEST(GramSchmidt, DependentColumnsAreRankDeficient) {
  const Matrix m{{1, 2}, {1, 2}, {0, 0}};
  try {
    gram_schmidt_orthonormalize(m);
    FAIL() << "expected RankDeficient";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::RankDeficient);
  }
}

TEST(GramSchmidt, MoreColumnsThanRowsIsInvalid) {
  try {
    gram_schmidt_orthonormalize(Matrix(2, 3, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidDims);
  }
}

TEST(SymmetricEigen, DiagonalInput) {
  const Matrix a{{8.0 / 3.0, 0}, {0, 2.0 / 3.0}};
  const auto e = symmetric_eigen(a);
  EXPECT_NEAR(e.eigenvalues[0], 8.0 / 3.0, 1e-14);
  EXPECT_NEAR(e.eigenvalues[1], 2.0 / 3.0, 1e-14);
  EXPECT_EQ(e.eigenvectors, Matrix::identity(2));
}

TEST(SymmetricEigen, TwoByTwoByHand) {
  const Matrix a{{2, 1}, {1, 2}};
  const auto e = symmetric_eigen(a);
  EXPECT_NEAR(e.eigenvalues[0], 3.0, 1e-14);
  EXPECT_NEAR(e.eigenvalues[1], 1.0, 1e-14);
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(std::abs(e.eigenvectors(0, 0)), s, 1e-12);
  EXPECT_NEAR(e.eigenvectors(0, 0) * e.eigenvectors(1, 0), 0.5, 1e-12);
  EXPECT_NEAR(e.eigenvectors(0, 1) * e.eigenvectors(1, 1), -0.5, 1e-12);
}

TEST(SymmetricEigen, MatchesCharacteristicPolynomialOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SeededRng rng(1000 + seed);
    const Matrix a = oracle::random_symmetric(rng, 5);
    const auto e = symmetric_eigen(a);
    const auto expected = oracle::eigenvalues_bruteforce(a);
    ASSERT_EQ(expected.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(e.eigenvalues[i], expected[i], 1e-8);
    for (std::size_t j = 0; j < 5; ++j) {
      const auto v = oracle::eigenvector_inverse_iteration(a, expected[j]);
      double dot = 0.0;
      for (std::size_t i = 0; i < 5; ++i) dot += v[i] * e.eigenvectors(i, j);
      EXPECT_NEAR(std::abs(dot), 1.0, 1e-8);
    }
  }
}

TEST(SymmetricEigen, InvariantsUpTo64) {
  for (std::size_t n : {1u, 2u, 7u, 16u, 33u, 64u}) {
    SeededRng rng(n);
    const Matrix a = oracle::random_symmetric(rng, n);
    const auto e = symmetric_eigen(a);
    EXPECT_TRUE(std::is_sorted(e.eigenvalues.rbegin(), e.eigenvalues.rend()));
    EXPECT_LE(orthonormality_defect(e.eigenvectors), 1e-10);
    EXPECT_LE(max_abs_diff(reconstruct(e), a), 1e-8 * max_abs(a));
    for (std::size_t j = 0; j < n; ++j) {
      double best = 0.0, signed_best = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (std::abs(e.eigenvectors(i, j)) > best + 1e-12) {
          best = std::abs(e.eigenvectors(i, j));
          signed_best = e.eigenvectors(i, j);
        }
      EXPECT_GT(signed_best, 0.0) << "sign convention, column " << j;
    }
  }
}

TEST(SymmetricEigen, IsDeterministic) {
  SeededRng rng(9);
  const Matrix a = oracle::random_symmetric(rng, 20);
  const auto e1 = symmetric_eigen(a);
  const auto e2 = symmetric_eigen(a);
  EXPECT_EQ(e1.eigenvalues, e2.eigenvalues);
  EXPECT_EQ(e1.eigenvectors, e2.eigenvectors);
}

TEST(SymmetricEigen, RejectsAsymmetricInput) {
  try {
    symmetric_eigen(Matrix{{1, 2}, {0, 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotSymmetric);
  }
}

TEST(SymmetricEigen, ZeroAndRankDeficientInputs) {
  const auto z = symmetric_eigen(Matrix(4, 4));
  for (double v : z.eigenvalues) EXPECT_EQ(v, 0.0);
  const Matrix line{{1, 2, 3}};  // uuᵀ, rank one
  const auto e = symmetric_eigen(matmul_tn(line, line));
  EXPECT_NEAR(e.eigenvalues[0], 14.0, 1e-12);
  EXPECT_NEAR(e.eigenvalues[1], 0.0, 1e-12);
  EXPECT_NEAR(e.eigenvalues[2], 0.0, 1e-12);
}

TEST(Covariance, HandExamples) {
  const Matrix f{{2, 0}, {-2, 0}, {0, 1}, {0, -1}};
  const Matrix cov = centered_covariance(f);
  EXPECT_NEAR(cov(0, 0), 8.0 / 3.0, 1e-15);
  EXPECT_NEAR(cov(1, 1), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(cov(0, 1), 0.0);
  EXPECT_EQ(centered_covariance(Matrix{{1}, {3}}), (Matrix{{2}}));
  EXPECT_EQ(centered_covariance(Matrix{{1, 2}, {1, 2}, {1, 2}}), Matrix(2, 2));
}

TEST(Covariance, TooFewSamples) {
  try {
    centered_covariance(Matrix(1, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooFewSamples);
  }
}

TEST(Covariance, TraceIsSumOfVariancesAndShiftInvariant) {
  SeededRng rng(5);
  const Matrix f = gaussian_matrix(rng, 50, 6, 2.0);
  const Matrix cov = centered_covariance(f);
  double var_sum = 0.0;
  for (std::size_t j = 0; j < f.cols(); ++j) {
    double m = 0.0, s = 0.0;
    for (std::size_t i = 0; i < f.rows(); ++i) m += f(i, j);
    m /= f.rows();
    for (std::size_t i = 0; i < f.rows(); ++i) s += (f(i, j) - m) * (f(i, j) - m);
    var_sum += s / (f.rows() - 1);
  }
  EXPECT_NEAR(trace(cov), var_sum, 1e-12);
  EXPECT_EQ(cov, cov.transpose());
  for (double v : symmetric_eigen(cov).eigenvalues) EXPECT_GE(v, -1e-12);

  Matrix shifted = f;
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t j = 0; j < f.cols(); ++j) shifted(i, j) += 10.0 * (j + 1);
  EXPECT_LE(max_abs_diff(centered_covariance(shifted), cov), 1e-10 * max_abs(cov));
}

TEST(GaussianMatrix, DeterministicGivenSeed) {
  SeededRng a(42), b(42);
  EXPECT_EQ(gaussian_matrix(a, 5, 7, 1.0), gaussian_matrix(b, 5, 7, 1.0));
}

TEST(GaussianMatrix, MomentsOfUnitDraw) {
  SeededRng rng(42);
  const Matrix m = gaussian_matrix(rng, 10000, 1, 1.0);
  double mean = 0.0;
  for (double v : m.data()) mean += v;
  mean /= m.size();
  double var = 0.0;
  for (double v : m.data()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (m.size() - 1));
  EXPECT_LT(std::abs(mean), 0.05);
  EXPECT_GE(sd, 0.97);
  EXPECT_LE(sd, 1.03);
}

TEST(GaussianMatrix, ScaledVariance) {
  SeededRng rng(7);
  const Matrix m = gaussian_matrix(rng, 1000, 100, 1.0 / std::sqrt(256.0));
  double ss = 0.0;
  for (double v : m.data()) ss += v * v;
  EXPECT_NEAR(ss / m.size(), 1.0 / 256.0, 0.1 / 256.0);
}

TEST(GaussianMatrix, RejectsNonPositiveStd) {
  SeededRng rng(1);
  EXPECT_THROW(gaussian_matrix(rng, 2, 2, 0.0), Error);
}

TEST(Orthogonal, NormPreservation) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SeededRng rng(seed);
    const Matrix q = gram_schmidt_orthonormalize(gaussian_matrix(rng, 8, 8, 1.0));
    const Matrix a = gaussian_matrix(rng, 5, 8, 1.0), b = gaussian_matrix(rng, 5, 8, 1.0);
    const double lhs = frobenius(a * q - b * q), rhs = frobenius(a - b);
    EXPECT_NEAR(lhs, rhs, 1e-10 * rhs);
  }
}

TEST(Orthogonal, ComplementCompletesTheBasis) {
  SeededRng rng(11);
  const Matrix k = gram_schmidt_orthonormalize(gaussian_matrix(rng, 9, 3, 1.0));
  const Matrix perp = orthogonal_complement(k, rng);
  ASSERT_EQ(perp.cols(), 6u);
  EXPECT_LE(orthonormality_defect(perp), 1e-10);
  EXPECT_LE(max_abs(matmul_tn(k, perp)), 1e-12);
  EXPECT_EQ(orthogonal_complement(Matrix::identity(4), rng).cols(), 0u);
}

TEST(MatrixText, RoundTripIsBitExact) {
  SeededRng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m = gaussian_matrix(rng, 1 + rng.below(6), 1 + rng.below(6), std::pow(10.0, static_cast<int>(rng.below(40)) - 20));
    m(0, 0) = trial % 2 ? -0.0 : 5e-324;
    std::stringstream ss;
    write_matrix(ss, m);
    const Matrix back = read_matrix(ss);
    ASSERT_EQ(back.rows(), m.rows());
    for (std::size_t k = 0; k < m.size(); ++k) {
      EXPECT_EQ(std::signbit(back.data()[k]), std::signbit(m.data()[k]));
      EXPECT_EQ(back.data()[k], m.data()[k]);
    }
  }
}

TEST(MatrixText, RejectsMalformedInput) {
  std::stringstream truncated("2 2\n1 2 3\n");
  EXPECT_THROW(read_matrix(truncated), Error);
  std::stringstream nan("1 1\nnan\n");
  EXPECT_THROW(read_matrix(nan), Error);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), Error);
}
