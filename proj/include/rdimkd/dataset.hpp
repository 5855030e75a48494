#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rdimkd/error.hpp"
#include "rdimkd/matrix.hpp"
#include "rdimkd/rng.hpp"

namespace rdimkd {

enum class DatasetKind { Moons, Spirals, GaussianMixture };

inline std::string_view dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::Moons: return "moons";
    case DatasetKind::Spirals: return "spirals";
    case DatasetKind::GaussianMixture: return "gaussian-mixture";
  }
  return "?";
}

inline DatasetKind parse_dataset_kind(std::string_view s) {
  for (auto k : {DatasetKind::Moons, DatasetKind::Spirals, DatasetKind::GaussianMixture})
    if (dataset_kind_name(k) == s) return k;
  throw Error(Errc::ValidationError, "unknown dataset kind '" + std::string(s) + "'");
}

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Moons;
  std::size_t n_train = 512;
  std::size_t n_test = 512;
  double noise = 0.15;
  std::size_t classes = 2;
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

inline void validate(const DatasetSpec& s) {
  if (s.classes < 2) throw Error(Errc::ValidationError, "dataset needs at least 2 classes");
  if (s.kind == DatasetKind::Moons && s.classes != 2) throw Error(Errc::ValidationError, "moons has exactly 2 classes");
  if (s.n_train < s.classes || s.n_test < s.classes) throw Error(Errc::ValidationError, "n_train and n_test must be >= classes");
  if (!(s.noise >= 0.0) || !std::isfinite(s.noise)) throw Error(Errc::ValidationError, "noise must be >= 0");
}

/// Labeled samples: one row of `x` per sample, labels in [0, classes).
struct Dataset {
  Matrix x;
  std::vector<std::size_t> y;
  std::size_t classes = 0;

  std::size_t size() const noexcept { return y.size(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

namespace detail {

inline std::pair<double, double> sample_point(DatasetKind kind, std::size_t label, std::size_t classes, SeededRng& rng) {
  switch (kind) {
    case DatasetKind::Moons: {
      const double theta = std::numbers::pi * rng.uniform();
      if (label == 0) return {std::cos(theta), std::sin(theta)};
      return {1.0 - std::cos(theta), 0.5 - std::sin(theta)};
    }
    case DatasetKind::Spirals: {
      // Arms interleave at equal angular offsets, radius grows with t.
      const double t = rng.uniform();
      const double angle = 3.0 * std::numbers::pi * t + 2.0 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(classes);
      return {t * std::cos(angle), t * std::sin(angle)};
    }
    case DatasetKind::GaussianMixture: {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(classes);
      return {2.0 * std::cos(angle), 2.0 * std::sin(angle)};
    }
  }
  return {0.0, 0.0};
}

inline Dataset generate_split(const DatasetSpec& spec, std::size_t n, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % spec.classes;
  rng.shuffle(std::span<std::size_t>(labels));
  Dataset d{Matrix(n, 2), std::move(labels), spec.classes};
  for (std::size_t i = 0; i < n; ++i) {
    auto [px, py] = sample_point(spec.kind, d.y[i], spec.classes, rng);
    d.x(i, 0) = px + spec.noise * rng.normal();
    d.x(i, 1) = py + spec.noise * rng.normal();
  }
  return d;
}

}  // namespace detail

/// Deterministic (train, test) pair. Labels are assigned round-robin before
/// shuffling, so every class count is within one of n/classes.
inline std::pair<Dataset, Dataset> generate_dataset(const DatasetSpec& spec) {
  validate(spec);
  return {detail::generate_split(spec, spec.n_train, derive_seed(spec.seed, 0)),
          detail::generate_split(spec, spec.n_test, derive_seed(spec.seed, 1))};
}

}  // namespace rdimkd
