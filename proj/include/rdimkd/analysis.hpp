#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rdimkd/error.hpp"
#include "rdimkd/linalg.hpp"
#include "rdimkd/matrix.hpp"
#include "rdimkd/rng.hpp"

namespace rdimkd {

enum class Subspace { Full, S, SPerp };

inline std::string_view subspace_name(Subspace s) {
  switch (s) {
    case Subspace::Full: return "full";
    case Subspace::S: return "S";
    case Subspace::SPerp: return "S_perp";
  }
  return "?";
}

/// Ratios with a vanishing denominator are reported as +infinity.
inline constexpr double kInfiniteRatio = std::numeric_limits<double>::infinity();

struct EigenSpectrum {
  std::vector<double> eigenvalues;  // descending, as computed (may hold roundoff negatives)
  double trace = 0.0;               // trace of the covariance the spectrum came from
  Subspace subspace = Subspace::Full;

  /// λ₁/λ_c, or kInfiniteRatio when λ_c ≤ 1e−12.
  double anisotropy() const {
    if (eigenvalues.empty()) return kInfiniteRatio;
    const double last = eigenvalues.back();
    return last <= 1e-12 ? kInfiniteRatio : eigenvalues.front() / last;
  }

  /// Eigenvalues with roundoff negatives clamped to zero.
  std::vector<double> exported() const {
    std::vector<double> out = eigenvalues;
    for (double& v : out) v = std::max(v, 0.0);
    return out;
  }
};

inline EigenSpectrum spectrum(const Matrix& features, Subspace tag = Subspace::Full) {
  if (features.rows() < 2) throw Error(Errc::TooFewSamples, "spectrum needs N >= 2");
  EigenSpectrum s;
  s.subspace = tag;
  if (features.cols() == 0) return s;
  const Matrix cov = centered_covariance(features);
  s.trace = trace(cov);
  s.eigenvalues = symmetric_eigen(cov).eigenvalues;
  return s;
}

namespace detail {
inline void require_orthonormal(const Matrix& k) {
  const double defect = orthonormality_defect(k);
  if (defect > 1e-8) throw Error(Errc::NotOrthonormal, "K defect " + format_double(defect, 3));
}
}  // namespace detail

struct SubspaceSpectra {
  EigenSpectrum in_s;
  EigenSpectrum in_s_perp;
};

/// Spectra of the features restricted to span(K) and to its orthogonal
/// complement. The complement basis is completed from seeded random fill.
inline SubspaceSpectra subspace_split_spectra(const Matrix& features, const Matrix& k, std::uint64_t seed = 0) {
  if (features.rows() < 2) throw Error(Errc::TooFewSamples, "subspace spectra need N >= 2");
  if (k.rows() != features.cols()) throw Error(Errc::DimensionMismatch, "features " + features.shape_str() + " vs K " + k.shape_str());
  detail::require_orthonormal(k);
  SeededRng rng(seed);
  const Matrix k_perp = orthogonal_complement(k, rng);
  return {spectrum(features * k, Subspace::S), spectrum(features * k_perp, Subspace::SPerp)};
}

struct CovarianceGrid {
  Matrix abs_cov;                // d×d
  double diagonal_dominance = 0; // Σ|diag| / Σ|offdiag|, kInfiniteRatio when no off-diagonal mass
};

inline CovarianceGrid covariance_heatmap(const Matrix& features, const Matrix& k) {
  if (k.rows() != features.cols()) throw Error(Errc::DimensionMismatch, "features " + features.shape_str() + " vs K " + k.shape_str());
  detail::require_orthonormal(k);
  CovarianceGrid g{centered_covariance(features * k), 0.0};
  double diag = 0.0, off = 0.0;
  for (std::size_t i = 0; i < g.abs_cov.rows(); ++i) {
    for (std::size_t j = 0; j < g.abs_cov.cols(); ++j) {
      double& v = g.abs_cov(i, j);
      v = std::abs(v);
      (i == j ? diag : off) += v;
    }
  }
  g.diagonal_dominance = off <= 0.0 ? kInfiniteRatio : diag / off;
  return g;
}

}  // namespace rdimkd
