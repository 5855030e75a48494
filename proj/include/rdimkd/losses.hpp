#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rdimkd/error.hpp"
#include "rdimkd/matrix.hpp"
#include "rdimkd/projection.hpp"

namespace rdimkd {

inline constexpr double kProbabilityFloor = 1e-12;

/// Projector families selectable for a distillation run. Names are the
/// command-line vocabulary.
enum class KdMethod { Random, Pca, PcaLast, Autoencoder, None, Gaussian, RandEach };

inline constexpr std::array<KdMethod, 7> kAllKdMethods = {KdMethod::Random,   KdMethod::Pca,  KdMethod::PcaLast,
                                                          KdMethod::Autoencoder, KdMethod::None, KdMethod::Gaussian,
                                                          KdMethod::RandEach};

inline std::string_view kd_method_name(KdMethod m) {
  switch (m) {
    case KdMethod::Random: return "random";
    case KdMethod::Pca: return "pca";
    case KdMethod::PcaLast: return "pca-last";
    case KdMethod::Autoencoder: return "autoencoder";
    case KdMethod::None: return "none";
    case KdMethod::Gaussian: return "gaussian";
    case KdMethod::RandEach: return "rand-each";
  }
  return "?";
}

inline std::string kd_method_list() {
  std::string out;
  for (auto m : kAllKdMethods) {
    if (!out.empty()) out += ", ";
    out += kd_method_name(m);
  }
  return out;
}

inline KdMethod parse_kd_method(std::string_view s) {
  for (auto m : kAllKdMethods)
    if (kd_method_name(m) == s) return m;
  throw Error(Errc::ValidationError, "unknown method '" + std::string(s) + "'; valid: " + kd_method_list());
}

/// A per-position mask written as a string of '0'/'1', position 0 first.
inline std::vector<bool> parse_mask(std::string_view s) {
  if (s.empty()) throw Error(Errc::ValidationError, "empty mask");
  std::vector<bool> mask;
  for (char ch : s) {
    if (ch != '0' && ch != '1') throw Error(Errc::ValidationError, "mask must be a 0/1 string, got '" + std::string(s) + "'");
    mask.push_back(ch == '1');
  }
  return mask;
}

inline std::string mask_string(const std::vector<bool>& mask) {
  std::string s;
  for (bool b : mask) s += b ? '1' : '0';
  return s;
}

struct DistillSpec {
  KdMethod method = KdMethod::Random;
  double r = 4.0;
  double alpha = 1.0;
  double beta = 0.0;
  std::vector<bool> mask;
  std::uint64_t seed = 0;

  friend bool operator==(const DistillSpec&, const DistillSpec&) = default;
};

inline void validate(const DistillSpec& s) {
  if (!(s.r >= 1.0) || !std::isfinite(s.r)) throw Error(Errc::ValidationError, "r must be >= 1");
  if (!(s.alpha >= 0.0) || !std::isfinite(s.alpha)) throw Error(Errc::ValidationError, "alpha must be >= 0");
  if (!(s.beta >= 0.0) || !std::isfinite(s.beta)) throw Error(Errc::ValidationError, "beta must be >= 0");
}

struct LossBreakdown {
  double task = 0.0;
  std::vector<double> kd_per_position;
  double kl = 0.0;
  double total = 0.0;
};

// ---------------------------------------------------------------------------

namespace detail {
inline void require_conformant(const Matrix& ft, const Matrix& fs, const Matrix& k) {
  if (!ft.same_shape(fs)) throw Error(Errc::ShapeMismatch, "teacher " + ft.shape_str() + " vs student " + fs.shape_str());
  if (k.rows() != ft.cols()) throw Error(Errc::ShapeMismatch, "features " + ft.shape_str() + " vs K " + k.shape_str());
  if (k.cols() == 0) throw Error(Errc::ShapeMismatch, "K has no columns");
}
}  // namespace detail

/// (α/(N·d))·‖F_t·K − F_s·K‖²_F
inline double rdimkd_loss(const Matrix& ft, const Matrix& fs, const Matrix& k, double alpha) {
  detail::require_conformant(ft, fs, k);
  if (ft.rows() == 0) return 0.0;
  const Matrix diff = (ft - fs) * k;
  return alpha / static_cast<double>(ft.rows() * k.cols()) * frobenius_sq(diff);
}

/// Gradient of rdimkd_loss with respect to F_s: (2α/(N·d))·(F_s − F_t)·K·Kᵀ.
/// The teacher side is a constant.
inline Matrix rdimkd_loss_grad(const Matrix& ft, const Matrix& fs, const Matrix& k, double alpha) {
  detail::require_conformant(ft, fs, k);
  if (ft.rows() == 0) return Matrix(0, ft.cols());
  Matrix g = matmul_nt((fs - ft) * k, k);
  g *= 2.0 * alpha / static_cast<double>(ft.rows() * k.cols());
  return g;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

namespace detail {
inline void check_distributions(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) throw Error(Errc::LengthMismatch, "q and p lengths differ");
  if (q.size() < 2) throw Error(Errc::LengthMismatch, "need at least two classes");
  double sum = 0.0;
  for (double v : q) sum += v;
  if (std::abs(sum - 1.0) > 1e-8) throw Error(Errc::NotNormalized, "teacher distribution sums to " + format_double(sum, 12));
}
}  // namespace detail

/// −β·Σ qᵢ·ln max(pᵢ, 1e−12)
inline double kl_soft_loss(std::span<const double> q, std::span<const double> p, double beta) {
  detail::check_distributions(q, p);
  if (beta == 0.0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] == 0.0) continue;
    s += q[i] * std::log(std::max(p[i], kProbabilityFloor));
  }
  return -beta * s;
}

/// Gradient of kl_soft_loss(q, softmax(z), β) with respect to the logits z.
inline std::vector<double> kl_soft_loss_grad(std::span<const double> q, std::span<const double> logits, double beta) {
  const std::vector<double> p = softmax(logits);
  detail::check_distributions(q, p);
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = beta * (p[i] - q[i]);
  return g;
}

// ---------------------------------------------------------------------------

/// One distillation position: teacher and student features plus the
/// projector that links them.
struct TapPair {
  const Matrix* teacher = nullptr;
  const Matrix* student = nullptr;
  const Projector* projector = nullptr;
};

struct ObjectiveResult {
  LossBreakdown breakdown;
  std::vector<std::optional<Matrix>> student_grads;  // per position; empty when masked out
};

/// Task loss plus masked per-position distillation terms plus the soft-label
/// term. Positions are summed in ascending index order.
inline ObjectiveResult total_objective_with_grads(double task_loss, std::span<const TapPair> taps, const DistillSpec& spec,
                                                  std::uint64_t iteration, double kl_loss = 0.0,
                                                  bool want_grads = true) {
  if (taps.size() != spec.mask.size()) {
    throw Error(Errc::MaskLengthMismatch,
                "mask has " + std::to_string(spec.mask.size()) + " entries for " + std::to_string(taps.size()) + " taps");
  }
  ObjectiveResult out;
  out.breakdown.task = task_loss;
  out.breakdown.kl = kl_loss;
  out.breakdown.kd_per_position.assign(taps.size(), 0.0);
  out.student_grads.resize(taps.size());
  double total = task_loss;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (!spec.mask[i]) continue;
    const Matrix k = resolve_projector(*taps[i].projector, iteration);
    out.breakdown.kd_per_position[i] = rdimkd_loss(*taps[i].teacher, *taps[i].student, k, spec.alpha);
    if (want_grads) out.student_grads[i] = rdimkd_loss_grad(*taps[i].teacher, *taps[i].student, k, spec.alpha);
    total += out.breakdown.kd_per_position[i];
  }
  out.breakdown.total = total + kl_loss;
  return out;
}

inline LossBreakdown total_objective(double task_loss, std::span<const TapPair> taps, const DistillSpec& spec,
                                     std::uint64_t iteration, double kl_loss = 0.0) {
  return total_objective_with_grads(task_loss, taps, spec, iteration, kl_loss, false).breakdown;
}

}  // namespace rdimkd
