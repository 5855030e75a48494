#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rdimkd/error.hpp"
#include "rdimkd/linalg.hpp"
#include "rdimkd/matrix.hpp"
#include "rdimkd/rng.hpp"

namespace rdimkd {

enum class ProjectionMethod { RandomOrthogonal, PcaFirst, PcaLast, Autoencoder, Identity, GaussianNonOrthogonal };

enum class PcaAxes { First, Last };

/// Stable names used in files and on the command line.
inline std::string_view method_name(ProjectionMethod m) {
  switch (m) {
    case ProjectionMethod::RandomOrthogonal: return "random";
    case ProjectionMethod::PcaFirst: return "pca";
    case ProjectionMethod::PcaLast: return "pca-last";
    case ProjectionMethod::Autoencoder: return "autoencoder";
    case ProjectionMethod::Identity: return "none";
    case ProjectionMethod::GaussianNonOrthogonal: return "gaussian";
  }
  return "?";
}

inline ProjectionMethod parse_method_name(std::string_view s) {
  for (auto m : {ProjectionMethod::RandomOrthogonal, ProjectionMethod::PcaFirst, ProjectionMethod::PcaLast,
                 ProjectionMethod::Autoencoder, ProjectionMethod::Identity, ProjectionMethod::GaussianNonOrthogonal}) {
    if (method_name(m) == s) return m;
  }
  throw Error(Errc::ParseError, "unknown projection method '" + std::string(s) + "'");
}

struct Projector {
  Matrix k;  // c×d
  ProjectionMethod method = ProjectionMethod::Identity;
  bool per_iteration = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> source;
  bool orthonormal = false;

  std::size_t in_dim() const noexcept { return k.rows(); }
  std::size_t out_dim() const noexcept { return k.cols(); }
  double reduction_rate() const noexcept { return static_cast<double>(k.rows()) / static_cast<double>(k.cols()); }

  friend bool operator==(const Projector&, const Projector&) = default;
};

inline void validate(const Projector& p) {
  const std::size_t c = p.k.rows(), d = p.k.cols();
  if (d == 0 || d > c) throw Error(Errc::InvalidDims, "projector " + p.k.shape_str());
  if (p.per_iteration && p.method != ProjectionMethod::RandomOrthogonal) {
    throw Error(Errc::ValidationError, "per-iteration regime requires a random orthogonal projector");
  }
  if (p.per_iteration && !p.seed) throw Error(Errc::ValidationError, "per-iteration projector needs a seed");
  if (p.orthonormal && orthonormality_defect(p.k) > 1e-10) {
    throw Error(Errc::NotOrthonormal, "projector flagged orthonormal has defect " + format_double(orthonormality_defect(p.k), 3));
  }
}

/// Subspace dimension for a c-wide feature under reduction rate r.
inline std::size_t subspace_dim(std::size_t c, double r) {
  if (!(r >= 1.0)) throw Error(Errc::ValidationError, "reduction rate must be >= 1");
  const double d = std::round(static_cast<double>(c) / r);
  return std::max<std::size_t>(1, static_cast<std::size_t>(d));
}

namespace detail {
inline void require_reducing(std::size_t c, std::size_t d) {
  if (d == 0 || d >= c) {
    throw Error(Errc::InvalidDims, "need 1 <= d < c, got c=" + std::to_string(c) + " d=" + std::to_string(d));
  }
}
}  // namespace detail

/// Gaussian draw followed by Gram–Schmidt; redraws if the draw is degenerate.
inline Projector make_random_orthogonal(SeededRng& rng, std::size_t c, std::size_t d) {
  detail::require_reducing(c, d);
  const std::uint64_t seed = rng.seed();
  for (int attempt = 0;; ++attempt) {
    try {
      Matrix k = gram_schmidt_orthonormalize(gaussian_matrix(rng, c, d, 1.0));
      return Projector{std::move(k), ProjectionMethod::RandomOrthogonal, false, seed, std::nullopt, true};
    } catch (const Error& e) {
      if (e.code() != Errc::RankDeficient || attempt >= 16) throw;
    }
  }
}

/// Square random rotation (c×c). Distillation at r = 1 with a random method
/// uses this; the loss then equals the unprojected one.
inline Matrix random_rotation(SeededRng& rng, std::size_t c) {
  for (int attempt = 0;; ++attempt) {
    try {
      return gram_schmidt_orthonormalize(gaussian_matrix(rng, c, c, 1.0));
    } catch (const Error& e) {
      if (e.code() != Errc::RankDeficient || attempt >= 16) throw;
    }
  }
}

inline Projector make_random_orthogonal(std::uint64_t seed, std::size_t c, std::size_t d) {
  SeededRng rng(seed);
  return make_random_orthogonal(rng, c, d);
}

/// Random orthogonal projector regenerated every iteration. The stored k is
/// the iteration-0 draw.
inline Projector make_random_each(std::uint64_t seed, std::size_t c, std::size_t d) {
  SeededRng rng(derive_seed(seed, 0));
  Projector p = make_random_orthogonal(rng, c, d);
  p.seed = seed;
  p.per_iteration = true;
  return p;
}

/// Principal axes of the centered covariance of `features`: the d largest
/// (First) or the d smallest (Last), each as a unit column.
inline Projector make_pca(const Matrix& features, std::size_t d, PcaAxes which) {
  if (features.rows() < 2) throw Error(Errc::TooFewSamples, "PCA needs N >= 2");
  const std::size_t c = features.cols();
  if (d == 0 || d > c) throw Error(Errc::InvalidDims, "PCA d=" + std::to_string(d) + " c=" + std::to_string(c));
  const EigenDecomposition eig = symmetric_eigen(centered_covariance(features));
  const std::size_t first = which == PcaAxes::First ? 0 : c - d;
  return Projector{eig.eigenvectors.cols_range(first, d),
                   which == PcaAxes::First ? ProjectionMethod::PcaFirst : ProjectionMethod::PcaLast,
                   false, std::nullopt, std::nullopt, true};
}

inline Projector make_identity(std::size_t c) {
  if (c == 0) throw Error(Errc::InvalidDims, "identity projector needs c >= 1");
  return Projector{Matrix::identity(c), ProjectionMethod::Identity, false, std::nullopt, std::nullopt, true};
}

/// Entries i.i.d. Normal(0, 1/c), no orthonormalization.
inline Projector make_gaussian_nonorthogonal(SeededRng& rng, std::size_t c, std::size_t d) {
  detail::require_reducing(c, d);
  const std::uint64_t seed = rng.seed();
  Matrix k = gaussian_matrix(rng, c, d, 1.0 / std::sqrt(static_cast<double>(c)));
  return Projector{std::move(k), ProjectionMethod::GaussianNonOrthogonal, false, seed, std::nullopt, false};
}

/// The K to use at a given training iteration.
inline Matrix resolve_projector(const Projector& p, std::uint64_t iteration) {
  if (!p.per_iteration) return p.k;
  SeededRng rng(derive_seed(*p.seed, iteration));
  if (p.k.cols() == p.k.rows()) return random_rotation(rng, p.k.rows());
  return make_random_orthogonal(rng, p.k.rows(), p.k.cols()).k;
}

// ---------------------------------------------------------------------------
// Linear autoencoder: minimize (1/(Nc))‖F − F·K·K'‖² + γ(‖K‖² + ‖K'‖²).

struct AutoencoderOptions {
  double gamma = 1e-4;
  int steps = 2000;
  double step_size = 0.05;
  std::uint64_t seed = 0;
  int max_halvings = 8;
};

struct AutoencoderFit {
  Matrix k;        // c×d encoder
  Matrix k_prime;  // d×c decoder
  double gamma = 0.0;
  double step_size = 0.0;  // the step size that actually ran
  std::vector<double> loss_trace;
};

struct AutoencoderTerms {
  double reconstruction = 0.0;
  double penalty = 0.0;
  double objective() const noexcept { return reconstruction + penalty; }
};

/// Works from the Gram matrix G = FᵀF so each step costs O(c²d), not O(Ncd).
class AutoencoderProblem {
 public:
  AutoencoderProblem(const Matrix& features, double gamma)
      : gram_(matmul_tn(features, features)), scale_(1.0 / static_cast<double>(features.rows() * features.cols())),
        gamma_(gamma) {}

  std::size_t dim() const noexcept { return gram_.rows(); }

  AutoencoderTerms terms(const Matrix& k, const Matrix& k_prime) const {
    const Matrix m = residual_map(k, k_prime);
    const Matrix gm = gram_ * m;
    double recon = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) recon += m.data()[i] * gm.data()[i];
    return {scale_ * recon, gamma_ * (frobenius_sq(k) + frobenius_sq(k_prime))};
  }

  /// ∂J/∂K = −(2/(Nc))·FᵀR·K'ᵀ + 2γK and ∂J/∂K' = −(2/(Nc))·KᵀFᵀR + 2γK',
  /// with R = F − F·K·K' so that FᵀR = G·(I − K·K').
  std::pair<Matrix, Matrix> gradients(const Matrix& k, const Matrix& k_prime) const {
    const Matrix ftr = gram_ * residual_map(k, k_prime);
    Matrix gk = matmul_nt(ftr, k_prime) * (-2.0 * scale_) + k * (2.0 * gamma_);
    Matrix gkp = matmul_tn(k, ftr) * (-2.0 * scale_) + k_prime * (2.0 * gamma_);
    return {std::move(gk), std::move(gkp)};
  }

 private:
  Matrix residual_map(const Matrix& k, const Matrix& k_prime) const {
    Matrix m = k * k_prime;
    m *= -1.0;
    for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += 1.0;
    return m;
  }

  Matrix gram_;
  double scale_;
  double gamma_;
};

/// Full-batch gradient descent at a fixed step size. Throws Diverged if the
/// objective ever exceeds ten times its initial value.
inline AutoencoderFit fit_autoencoder(const Matrix& features, std::size_t d, double gamma, int steps, double step_size,
                                      std::uint64_t seed) {
  const std::size_t c = features.cols();
  if (features.rows() < 1) throw Error(Errc::TooFewSamples, "autoencoder needs N >= 1");
  if (d == 0 || d > c) throw Error(Errc::InvalidDims, "autoencoder d=" + std::to_string(d) + " c=" + std::to_string(c));
  if (!(gamma > 0.0)) throw Error(Errc::ValidationError, "autoencoder gamma must be > 0");
  if (steps < 1) throw Error(Errc::ValidationError, "autoencoder steps must be >= 1");
  if (!(step_size > 0.0)) throw Error(Errc::ValidationError, "autoencoder step size must be > 0");

  const AutoencoderProblem problem(features, gamma);
  SeededRng rng(seed);
  const double init_std = 1.0 / std::sqrt(static_cast<double>(c));
  AutoencoderFit fit{gaussian_matrix(rng, c, d, init_std), gaussian_matrix(rng, d, c, init_std), gamma, step_size, {}};
  fit.loss_trace.reserve(static_cast<std::size_t>(steps) + 1);

  const double initial = problem.terms(fit.k, fit.k_prime).objective();
  fit.loss_trace.push_back(initial);
  for (int step = 0; step < steps; ++step) {
    auto [gk, gkp] = problem.gradients(fit.k, fit.k_prime);
    fit.k -= gk * step_size;
    fit.k_prime -= gkp * step_size;
    const double j = problem.terms(fit.k, fit.k_prime).objective();
    if (!std::isfinite(j) || j > 10.0 * initial) {
      throw Error(Errc::Diverged, "autoencoder objective " + format_double(j, 6) + " at step " + std::to_string(step) +
                                      " (initial " + format_double(initial, 6) + ")");
    }
    fit.loss_trace.push_back(j);
  }
  return fit;
}

/// fit_autoencoder with the step size halved after each divergence.
inline AutoencoderFit fit_autoencoder(const Matrix& features, std::size_t d, const AutoencoderOptions& opt) {
  double step = opt.step_size;
  for (int attempt = 0;; ++attempt) {
    try {
      return fit_autoencoder(features, d, opt.gamma, opt.steps, step, opt.seed);
    } catch (const Error& e) {
      if (e.code() != Errc::Diverged || attempt >= opt.max_halvings) throw;
      step *= 0.5;
    }
  }
}

/// The encoder of a fitted autoencoder, used as-is (not re-orthonormalized).
inline Projector make_autoencoder(const Matrix& features, std::size_t d, const AutoencoderOptions& opt) {
  AutoencoderFit fit = fit_autoencoder(features, d, opt);
  return Projector{std::move(fit.k), ProjectionMethod::Autoencoder, false, opt.seed, std::nullopt, false};
}

// ---------------------------------------------------------------------------
// Persistence: "method c d seed orthonormal per_iteration", then the matrix.

inline void write_projector(std::ostream& os, const Projector& p) {
  os << method_name(p.method) << ' ' << p.k.rows() << ' ' << p.k.cols() << ' '
     << (p.seed ? std::to_string(*p.seed) : std::string("none")) << ' ' << (p.orthonormal ? 1 : 0) << ' '
     << (p.per_iteration ? 1 : 0) << '\n';
  write_matrix(os, p.k);
}

inline Projector read_projector(std::istream& is) {
  std::string method, seed;
  std::size_t c = 0, d = 0;
  int ortho = 0, per_iter = 0;
  if (!(is >> method >> c >> d >> seed >> ortho >> per_iter)) throw Error(Errc::ParseError, "bad projector header");
  Projector p;
  p.method = parse_method_name(method);
  if (seed != "none") {
    try {
      p.seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw Error(Errc::ParseError, "bad projector seed '" + seed + "'");
    }
  }
  p.orthonormal = ortho != 0;
  p.per_iteration = per_iter != 0;
  p.k = read_matrix(is);
  if (p.k.rows() != c || p.k.cols() != d) throw Error(Errc::ParseError, "projector header dims disagree with matrix");
  return p;
}

}  // namespace rdimkd
