#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "rdimkd/dataset.hpp"
#include "rdimkd/error.hpp"
#include "rdimkd/losses.hpp"
#include "rdimkd/nets.hpp"
#include "rdimkd/projection.hpp"
#include "rdimkd/rng.hpp"

namespace rdimkd {

// Stream identifiers for derive_seed. Each consumer of randomness owns one,
// so enabling distillation never perturbs initialization or batch order.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kPcaSample = 3;
inline constexpr std::uint64_t kProjector = 100;  // + tap position
}  // namespace streams

inline constexpr std::size_t kPcaSampleBudget = 512;

/// Architecture of an MLP classifier: hidden widths, tapped layers, and
/// layers factored through an intermediate width. Layer indices count every
/// linear layer, the output head included.
struct NetSpec {
  std::vector<std::size_t> hidden;
  std::vector<std::size_t> taps;
  std::vector<std::pair<std::size_t, std::size_t>> splits;  // (layer index, width)

  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

inline std::vector<LayerSpec> layer_specs(const NetSpec& spec, std::size_t input_dim, std::size_t classes) {
  auto layers = mlp_specs(input_dim, spec.hidden, classes);
  for (std::size_t t : spec.taps) {
    if (t >= layers.size()) throw Error(Errc::ValidationError, "tap index " + std::to_string(t) + " out of range");
    layers[t].tap = true;
  }
  for (auto [idx, width] : spec.splits) {
    if (idx >= layers.size()) throw Error(Errc::ValidationError, "split index " + std::to_string(idx) + " out of range");
    if (width == 0) throw Error(Errc::ValidationError, "split width must be >= 1");
    layers[idx].split_through = width;
  }
  return layers;
}

enum class Schedule { Cosine, Constant };

struct TrainSpec {
  int epochs = 300;
  std::size_t batch_size = 32;
  double lr_init = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  Schedule schedule = Schedule::Cosine;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainSpec&, const TrainSpec&) = default;
};

inline void validate(const TrainSpec& s) {
  if (s.epochs < 0) throw Error(Errc::ValidationError, "epochs must be >= 0");
  if (s.batch_size == 0) throw Error(Errc::ValidationError, "batch_size must be >= 1");
  if (!(s.lr_init > 0.0)) throw Error(Errc::ValidationError, "lr_init must be > 0");
  if (!(s.momentum >= 0.0 && s.momentum < 1.0)) throw Error(Errc::ValidationError, "momentum must be in [0, 1)");
  if (!(s.weight_decay >= 0.0)) throw Error(Errc::ValidationError, "weight_decay must be >= 0");
}

/// lr_init·(1 + cos(π·epoch/total))/2
inline double cosine_lr(int epoch, int total_epochs, double lr_init) {
  if (epoch < 0 || epoch >= total_epochs) {
    throw Error(Errc::EpochOutOfRange, "epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(total_epochs) + ")");
  }
  return lr_init * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs)) / 2.0;
}

inline double learning_rate(const TrainSpec& s, int epoch) {
  return s.schedule == Schedule::Cosine ? cosine_lr(epoch, s.epochs, s.lr_init) : s.lr_init;
}

struct MetricsRecord {
  int epoch = 0;
  double lr = 0.0;
  double task_loss = 0.0;
  std::vector<double> kd;
  double kl_loss = 0.0;
  double total_loss = 0.0;
  double test_accuracy = 0.0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct TrialResult {
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> metrics;
  double final_test_accuracy = 0.0;
  Network network;
  std::vector<std::optional<Projector>> projectors;  // per tap position; empty where not distilled

  friend bool operator==(const TrialResult&, const TrialResult&) = default;
};

inline double accuracy(const Network& net, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const Matrix logits = forward(net, data.x).logits;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto row = logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == data.y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace detail {

struct KdContext {
  const Network* teacher = nullptr;
  DistillSpec spec;  // mask already resolved to "position is active"
  std::vector<std::optional<Projector>> projectors;
};

/// Mean softmax cross-entropy and its gradient with respect to the logits.
inline double cross_entropy(const Matrix& logits, const Matrix& probs, std::span<const std::size_t> labels, Matrix& grad) {
  const std::size_t b = logits.rows();
  grad = probs;
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    auto z = logits.row(i);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    loss += mx + std::log(sum) - z[labels[i]];
    grad(i, labels[i]) -= 1.0;
  }
  grad *= 1.0 / static_cast<double>(b);
  return loss / static_cast<double>(b);
}

inline TrialResult run_training(Network net, const Dataset& train, const Dataset& test, const TrainSpec& ts,
                                const KdContext* kd) {
  validate(ts);
  TrialResult result;
  result.seed = ts.seed;
  const std::size_t n_taps = net.tap_indices().size();
  const bool use_teacher = kd && kd->teacher &&
                           (kd->spec.beta > 0.0 || std::find(kd->spec.mask.begin(), kd->spec.mask.end(), true) != kd->spec.mask.end());

  SeededRng shuffle_rng(derive_seed(ts.seed, streams::kShuffle));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto params = net.parameters();
  std::vector<Matrix> velocity;
  for (auto* p : params) velocity.emplace_back(p->rows(), p->cols());

  std::uint64_t iteration = 0;
  double initial_task = 0.0;
  int blowup_epochs = 0;
  for (int epoch = 0; epoch < ts.epochs; ++epoch) {
    const double lr = learning_rate(ts, epoch);
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.kd.assign(n_taps, 0.0);
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += ts.batch_size, ++iteration) {
      const std::size_t stop = std::min(order.size(), start + ts.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Matrix xb = train.x.select_rows(idx);
      std::vector<std::size_t> yb(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) yb[k] = train.y[idx[k]];

      const ForwardResult fs = forward(net, xb);
      Matrix dlogits;
      const double task = cross_entropy(fs.logits, fs.probs, yb, dlogits);
      double kl = 0.0;
      LossBreakdown breakdown{task, std::vector<double>(n_taps, 0.0), 0.0, task};
      std::vector<Matrix> tap_grads(n_taps);

      if (use_teacher) {
        const ForwardResult ft = forward(*kd->teacher, xb);
        if (kd->spec.beta > 0.0) {
          const double inv_b = 1.0 / static_cast<double>(xb.rows());
          for (std::size_t i = 0; i < xb.rows(); ++i) {
            kl += kl_soft_loss(ft.probs.row(i), fs.probs.row(i), kd->spec.beta) * inv_b;
            const auto g = kl_soft_loss_grad(ft.probs.row(i), fs.logits.row(i), kd->spec.beta);
            for (std::size_t j = 0; j < g.size(); ++j) dlogits(i, j) += g[j] * inv_b;
          }
        }
        std::vector<TapPair> pairs(n_taps);
        for (std::size_t i = 0; i < n_taps; ++i) {
          if (!kd->spec.mask[i]) continue;
          pairs[i] = TapPair{&ft.taps[i], &fs.taps[i], &*kd->projectors[i]};
        }
        ObjectiveResult obj = total_objective_with_grads(task, pairs, kd->spec, iteration, kl);
        breakdown = std::move(obj.breakdown);
        for (std::size_t i = 0; i < n_taps; ++i)
          if (obj.student_grads[i]) tap_grads[i] = std::move(*obj.student_grads[i]);
      }
      if (!std::isfinite(breakdown.total)) {
        throw Error(Errc::Diverged, "non-finite loss at epoch " + std::to_string(epoch) + "; lr too high?");
      }

      const Gradients grads = backward(net, xb, dlogits, tap_grads);
      for (std::size_t p = 0; p < params.size(); ++p) {
        Matrix& w = *params[p];
        Matrix& v = velocity[p];
        for (std::size_t k = 0; k < w.size(); ++k) {
          const double g = grads[p].data()[k] + ts.weight_decay * w.data()[k];
          v.data()[k] = ts.momentum * v.data()[k] + g;
          w.data()[k] -= lr * v.data()[k];
        }
      }

      rec.task_loss += breakdown.task;
      for (std::size_t i = 0; i < n_taps; ++i) rec.kd[i] += breakdown.kd_per_position[i];
      rec.kl_loss += breakdown.kl;
      rec.total_loss += breakdown.total;
      ++batches;
    }
    if (batches > 0) {
      const double inv = 1.0 / static_cast<double>(batches);
      rec.task_loss *= inv;
      for (double& v : rec.kd) v *= inv;
      rec.kl_loss *= inv;
      rec.total_loss *= inv;
    }
    rec.test_accuracy = accuracy(net, test);

    if (epoch == 0) initial_task = rec.task_loss;
    blowup_epochs = rec.task_loss > 10.0 * initial_task ? blowup_epochs + 1 : 0;
    if (blowup_epochs >= 3) {
      throw Error(Errc::Diverged, "task loss above 10x its initial value for 3 epochs; lr too high?");
    }
    result.metrics.push_back(std::move(rec));
  }

  result.final_test_accuracy = accuracy(net, test);
  net.meta.epochs = ts.epochs;
  net.meta.final_train_loss = result.metrics.empty() ? 0.0 : result.metrics.back().task_loss;
  net.meta.final_train_accuracy = accuracy(net, train);
  net.meta.final_test_accuracy = result.final_test_accuracy;
  result.network = std::move(net);
  if (kd) result.projectors = kd->projectors;
  return result;
}

}  // namespace detail

/// Train a fresh network on the task loss alone. Used for teachers and for
/// the no-distillation student baseline.
inline TrialResult train_network(const NetSpec& spec, const Dataset& train, const Dataset& test, const TrainSpec& ts) {
  Network net = build_network(layer_specs(spec, train.x.cols(), train.classes), derive_seed(ts.seed, streams::kInit));
  return detail::run_training(std::move(net), train, test, ts, nullptr);
}

inline Network train_teacher(const NetSpec& spec, const Dataset& train, const Dataset& test, const TrainSpec& ts) {
  return train_network(spec, train, test, ts).network;
}

inline TrialResult train_baseline(const NetSpec& spec, const Dataset& train, const Dataset& test, const TrainSpec& ts) {
  return train_network(spec, train, test, ts);
}

/// Rows of `data` used to fit data-dependent projectors: a seeded sample of
/// up to kPcaSampleBudget training points.
inline Matrix projector_sample(const Dataset& data, std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  SeededRng rng(derive_seed(seed, streams::kPcaSample));
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(std::min(idx.size(), kPcaSampleBudget));
  return data.x.select_rows(idx);
}

/// Projector for one distillation position, built from the frozen teacher's
/// features where the method needs data.
inline Projector build_projector(KdMethod method, const Matrix& teacher_features, std::size_t c, double r,
                                 std::uint64_t seed, const AutoencoderOptions& ae = {}) {
  const std::size_t d = std::min(c, subspace_dim(c, r));
  switch (method) {
    case KdMethod::None:
      return make_identity(c);
    case KdMethod::Random: {
      SeededRng rng(seed);
      if (d == c) return Projector{random_rotation(rng, c), ProjectionMethod::RandomOrthogonal, false, seed, std::nullopt, true};
      return make_random_orthogonal(rng, c, d);
    }
    case KdMethod::RandEach: {
      if (d < c) return make_random_each(seed, c, d);
      SeededRng rng(derive_seed(seed, 0));
      return Projector{random_rotation(rng, c), ProjectionMethod::RandomOrthogonal, true, seed, std::nullopt, true};
    }
    case KdMethod::Gaussian: {
      SeededRng rng(seed);
      if (d == c) {
        Matrix k = gaussian_matrix(rng, c, c, 1.0 / std::sqrt(static_cast<double>(c)));
        return Projector{std::move(k), ProjectionMethod::GaussianNonOrthogonal, false, seed, std::nullopt, false};
      }
      return make_gaussian_nonorthogonal(rng, c, d);
    }
    case KdMethod::Pca:
      return make_pca(teacher_features, d, PcaAxes::First);
    case KdMethod::PcaLast:
      return make_pca(teacher_features, d, PcaAxes::Last);
    case KdMethod::Autoencoder: {
      AutoencoderOptions opt = ae;
      opt.seed = seed;
      return make_autoencoder(teacher_features, d, opt);
    }
  }
  throw Error(Errc::ValidationError, "unhandled method");
}

struct DistillOptions {
  bool inherit = false;
  AutoencoderOptions autoencoder;
};

/// Train a student against a frozen teacher with the combined objective.
/// Projectors are built once, before the first step.
inline TrialResult distill_student(const NetSpec& student_spec, const Network& teacher, const Dataset& train,
                                   const Dataset& test, const TrainSpec& ts, const DistillSpec& distill,
                                   const DistillOptions& opts = {}) {
  validate(distill);
  Network student = build_network(layer_specs(student_spec, train.x.cols(), train.classes), derive_seed(ts.seed, streams::kInit));
  if (opts.inherit) inherit_init(student, teacher);
  if (teacher.input_dim() != student.input_dim() || teacher.output_dim() != student.output_dim()) {
    throw Error(Errc::ShapeMismatch, "teacher and student disagree on input or class count");
  }

  const auto s_dims = student.tap_dims();
  const auto t_dims = teacher.tap_dims();
  detail::KdContext kd;
  kd.teacher = &teacher;
  kd.spec = distill;
  if (kd.spec.mask.empty()) kd.spec.mask.assign(s_dims.size(), true);
  if (kd.spec.mask.size() != s_dims.size()) {
    throw Error(Errc::MaskLengthMismatch, "mask has " + std::to_string(kd.spec.mask.size()) + " entries for " +
                                              std::to_string(s_dims.size()) + " student taps");
  }
  // α = 0 makes a position inert; treat it exactly like a masked one.
  for (std::size_t i = 0; i < kd.spec.mask.size(); ++i) kd.spec.mask[i] = kd.spec.mask[i] && distill.alpha > 0.0;

  kd.projectors.resize(s_dims.size());
  const bool any_active = std::find(kd.spec.mask.begin(), kd.spec.mask.end(), true) != kd.spec.mask.end();
  if (any_active && t_dims.size() != s_dims.size()) {
    throw Error(Errc::ShapeMismatch, "teacher has " + std::to_string(t_dims.size()) + " taps, student " +
                                         std::to_string(s_dims.size()));
  }
  if (any_active) {
    const ForwardResult sample = forward(teacher, projector_sample(train, distill.seed));
    for (std::size_t i = 0; i < s_dims.size(); ++i) {
      if (!kd.spec.mask[i]) continue;
      if (s_dims[i] != t_dims[i]) {
        throw Error(Errc::ShapeMismatch, "tap " + std::to_string(i) + ": teacher " + std::to_string(t_dims[i]) +
                                             " vs student " + std::to_string(s_dims[i]));
      }
      kd.projectors[i] = build_projector(distill.method, sample.taps[i], s_dims[i], distill.r,
                                         derive_seed(distill.seed, streams::kProjector + i), opts.autoencoder);
    }
  }
  return detail::run_training(std::move(student), train, test, ts, &kd);
}

// ---------------------------------------------------------------------------
// Ablation grid

inline constexpr std::string_view kBaselineMethod = "baseline";

/// Everything a trial needs besides its seed and distillation cell.
struct ExperimentSetup {
  NetSpec student;
  const Network* teacher = nullptr;
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;
  TrainSpec train_spec;
  DistillSpec distill;  // beta and any fields the grid does not sweep
  DistillOptions options;
};

/// One training run for a seed. "baseline" trains without the teacher.
inline TrialResult run_trial(const ExperimentSetup& setup, std::string_view method, double r, double alpha,
                             const std::vector<bool>& mask, std::uint64_t seed) {
  TrainSpec ts = setup.train_spec;
  ts.seed = seed;
  if (method == kBaselineMethod) return train_baseline(setup.student, *setup.train, *setup.test, ts);
  DistillSpec ds = setup.distill;
  ds.method = parse_kd_method(method);
  ds.r = r;
  ds.alpha = alpha;
  ds.mask = mask;
  ds.seed = seed;
  return distill_student(setup.student, *setup.teacher, *setup.train, *setup.test, ts, ds, setup.options);
}

struct GridCell {
  std::string method;
  double r = 4.0;
  double alpha = 1.0;
  std::string mask;

  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct GridTrial {
  GridCell cell;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double delta_vs_reference = 0.0;  // paired against the first method, same r/alpha/mask/seed
  bool diverged = false;            // training raised Diverged; accuracy is recorded as 0
};

struct GridRow {
  GridCell cell;
  double mean_acc = 0.0;
  double std_acc = 0.0;  // sample standard deviation; 0 for a single seed
  std::size_t n_seeds = 0;
  std::size_t n_diverged = 0;
};

struct AblationResult {
  std::vector<GridRow> rows;
  std::vector<GridTrial> trials;
  std::string reference_method;
};

struct AblationGrid {
  std::vector<std::string> methods;
  std::vector<double> rs;
  std::vector<double> alphas;
  std::vector<std::string> masks;
};

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads; the first exception
/// is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Every (method, r, alpha, mask) cell over the same seed list. Results are
/// independent of thread count: each trial owns its seeds and output slot.
inline AblationResult run_ablation_grid(const ExperimentSetup& setup, const AblationGrid& grid,
                                        std::span<const std::uint64_t> seeds, unsigned jobs = 1) {
  if (grid.methods.empty() || grid.rs.empty() || grid.alphas.empty() || grid.masks.empty()) {
    throw Error(Errc::ValidationError, "ablation grid has an empty axis");
  }
  if (seeds.empty()) throw Error(Errc::ValidationError, "ablation needs at least one seed");
  for (const auto& m : grid.methods)
    if (m != kBaselineMethod) parse_kd_method(m);
  std::vector<std::vector<bool>> masks;
  for (const auto& m : grid.masks) masks.push_back(parse_mask(m));

  // Cell order: ascending alpha, then r, then method and mask in given order.
  std::vector<double> alphas = grid.alphas, rs = grid.rs;
  std::sort(alphas.begin(), alphas.end());
  std::sort(rs.begin(), rs.end());
  struct CellIndex {
    std::size_t method, r, alpha, mask;
  };
  std::vector<CellIndex> cells;
  for (std::size_t a = 0; a < alphas.size(); ++a)
    for (std::size_t r = 0; r < rs.size(); ++r)
      for (std::size_t m = 0; m < grid.methods.size(); ++m)
        for (std::size_t k = 0; k < masks.size(); ++k) cells.push_back({m, r, a, k});

  // The baseline ignores r/alpha/mask, so it runs once per seed.
  const bool has_baseline = std::find(grid.methods.begin(), grid.methods.end(), kBaselineMethod) != grid.methods.end();
  std::vector<double> baseline_acc(seeds.size(), 0.0);
  std::vector<double> acc(cells.size() * seeds.size(), 0.0);
  std::vector<char> baseline_div(seeds.size(), 0), div(cells.size() * seeds.size(), 0);

  struct Job {
    std::optional<std::size_t> cell;
    std::size_t seed;
  };
  std::vector<Job> work;
  if (has_baseline)
    for (std::size_t s = 0; s < seeds.size(); ++s) work.push_back({std::nullopt, s});
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (grid.methods[cells[c].method] == kBaselineMethod) continue;
    for (std::size_t s = 0; s < seeds.size(); ++s) work.push_back({c, s});
  }
  const auto attempt = [](double& acc_slot, char& div_slot, auto&& run) {
    try {
      acc_slot = run().final_test_accuracy;
    } catch (const Error& e) {
      if (e.code() != Errc::Diverged) throw;
      acc_slot = 0.0;
      div_slot = 1;
    }
  };
  parallel_for(work.size(), jobs, [&](std::size_t i) {
    const Job& job = work[i];
    if (!job.cell) {
      attempt(baseline_acc[job.seed], baseline_div[job.seed],
              [&] { return run_trial(setup, kBaselineMethod, 1.0, 0.0, {}, seeds[job.seed]); });
      return;
    }
    const CellIndex& c = cells[*job.cell];
    const std::size_t slot = *job.cell * seeds.size() + job.seed;
    attempt(acc[slot], div[slot], [&] {
      return run_trial(setup, grid.methods[c.method], rs[c.r], alphas[c.alpha], masks[c.mask], seeds[job.seed]);
    });
  });
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (grid.methods[cells[c].method] != kBaselineMethod) continue;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      acc[c * seeds.size() + s] = baseline_acc[s];
      div[c * seeds.size() + s] = baseline_div[s];
    }
  }

  AblationResult out;
  out.reference_method = grid.methods.front();
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::size_t> reference_cell;
  for (std::size_t c = 0; c < cells.size(); ++c)
    if (cells[c].method == 0) reference_cell[{cells[c].r, cells[c].alpha, cells[c].mask}] = c;

  for (std::size_t c = 0; c < cells.size(); ++c) {
    const CellIndex& ci = cells[c];
    GridCell cell{grid.methods[ci.method], rs[ci.r], alphas[ci.alpha], grid.masks[ci.mask]};
    std::span<const double> cell_acc(acc.data() + c * seeds.size(), seeds.size());
    const auto n_div = static_cast<std::size_t>(std::count(div.begin() + static_cast<std::ptrdiff_t>(c * seeds.size()),
                                                           div.begin() + static_cast<std::ptrdiff_t>((c + 1) * seeds.size()), 1));
    out.rows.push_back({cell, mean_of(cell_acc), sample_std(cell_acc), seeds.size(), n_div});
    const std::size_t ref = reference_cell.at({ci.r, ci.alpha, ci.mask});
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      out.trials.push_back({cell, seeds[s], cell_acc[s], cell_acc[s] - acc[ref * seeds.size() + s],
                            div[c * seeds.size() + s] != 0});
    }
  }
  return out;
}

}  // namespace rdimkd
