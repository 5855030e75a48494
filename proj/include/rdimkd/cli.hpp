#pragma once

// Command implementations behind the rdimkd executable. Each command reads
// its inputs, writes every artifact under one output directory, and finishes
// with a manifest of SHA-256 hashes. Requires linking OpenSSL::Crypto.

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rdimkd/analysis.hpp"
#include "rdimkd/config.hpp"
#include "rdimkd/error.hpp"
#include "rdimkd/nets.hpp"
#include "rdimkd/projection.hpp"
#include "rdimkd/train.hpp"

namespace rdimkd::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitDiverged = 3;

inline int exit_code(Errc e) {
  switch (e) {
    case Errc::ParseError:
    case Errc::IoError: return kExitUsage;
    case Errc::Diverged: return kExitDiverged;
    default: return kExitValidation;
  }
}

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::IoError, "SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Collects the files a command writes and emits the manifest last.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + root_.string() + ": " + ec.message());
  }

  const fs::path& root() const noexcept { return root_; }

  void write(const std::string& relative, const std::string& content) {
    const fs::path p = root_ / relative;
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out || !(out << content) || !out.flush()) throw Error(Errc::IoError, "cannot write " + p.string());
    entries_.emplace_back(relative, sha256_hex(content));
  }

  /// "sha256  path" per artifact, sorted by path.
  std::string finish() {
    std::sort(entries_.begin(), entries_.end());
    std::string text;
    for (const auto& [path, hash] : entries_) text += hash + "  " + path + "\n";
    const fs::path p = root_ / "manifest.txt";
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text)) throw Error(Errc::IoError, "cannot write " + p.string());
    return text;
  }

 private:
  fs::path root_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

// ---------------------------------------------------------------------------
// Shared inputs

struct CommonOptions {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> epochs;
};

inline ExperimentConfig load_config(const std::optional<std::string>& path) {
  if (!path) return ExperimentConfig{};
  return parse_config(read_file(*path));
}

/// --seed, else RDIMKD_SEED, else the config's [run] seed.
inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const ExperimentConfig& c) {
  if (flag) return *flag;
  if (const char* env = std::getenv("RDIMKD_SEED"); env && *env) {
    std::uint64_t v = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw Error(Errc::ParseError, "RDIMKD_SEED is not an unsigned integer: '" + std::string(s) + "'");
    }
    return v;
  }
  return c.seed;
}

inline void apply_common(ExperimentConfig& c, const CommonOptions& o) {
  if (o.out) c.output_dir = *o.out;
  if (o.epochs) {
    if (*o.epochs < 0) throw Error(Errc::ValidationError, "epochs must be >= 0");
    c.train.epochs = *o.epochs;
  }
  c.seed = resolve_seed(o.seed, c);
}

inline Network load_network(const std::string& path) {
  std::istringstream in(read_file(path));
  Network net = read_network(in);
  validate(net);
  return net;
}

/// File name plus a short content hash, stable across machines.
inline std::string artifact_id(const std::string& path) {
  return fs::path(path).filename().string() + "@" + sha256_hex(read_file(path)).substr(0, 12);
}

inline std::vector<std::uint64_t> trial_seeds(std::uint64_t base, std::size_t trials) {
  std::vector<std::uint64_t> s(trials);
  for (std::size_t i = 0; i < trials; ++i) s[i] = base + i;
  return s;
}

// ---------------------------------------------------------------------------
// CSV writers

inline std::string metrics_csv(const std::vector<TrialResult>& trials) {
  std::size_t taps = 0;
  for (const auto& t : trials)
    if (!t.metrics.empty()) taps = std::max(taps, t.metrics.front().kd.size());
  std::string s = "trial_seed,epoch,lr,task_loss";
  for (std::size_t i = 0; i < taps; ++i) s += ",kd_" + std::to_string(i);
  s += ",kl_loss,total_loss,test_accuracy\n";
  for (const auto& t : trials) {
    for (const auto& m : t.metrics) {
      s += std::to_string(t.seed) + "," + std::to_string(m.epoch) + "," + format_shortest(m.lr) + "," +
           format_shortest(m.task_loss);
      for (std::size_t i = 0; i < taps; ++i) s += "," + format_shortest(i < m.kd.size() ? m.kd[i] : 0.0);
      s += "," + format_shortest(m.kl_loss) + "," + format_shortest(m.total_loss) + "," +
           format_shortest(m.test_accuracy) + "\n";
    }
  }
  return s;
}

inline std::string summary_csv(const std::vector<TrialResult>& trials) {
  std::string s = "trial_seed,final_test_accuracy\n";
  for (const auto& t : trials) s += std::to_string(t.seed) + "," + format_shortest(t.final_test_accuracy) + "\n";
  return s;
}

inline std::string grid_csv(const AblationResult& r) {
  std::string s = "method,r,alpha,mask,mean_acc,std_acc,n_seeds,n_diverged\n";
  for (const auto& row : r.rows) {
    s += row.cell.method + "," + format_shortest(row.cell.r) + "," + format_shortest(row.cell.alpha) + "," +
         row.cell.mask + "," + format_shortest(row.mean_acc) + "," + format_shortest(row.std_acc) + "," +
         std::to_string(row.n_seeds) + "," + std::to_string(row.n_diverged) + "\n";
  }
  return s;
}

inline std::string trials_csv(const AblationResult& r) {
  std::string s = "method,r,alpha,mask,seed,accuracy,delta_vs_" + r.reference_method + ",diverged\n";
  for (const auto& t : r.trials) {
    s += t.cell.method + "," + format_shortest(t.cell.r) + "," + format_shortest(t.cell.alpha) + "," + t.cell.mask +
         "," + std::to_string(t.seed) + "," + format_shortest(t.accuracy) + "," + format_shortest(t.delta_vs_reference) +
         "," + (t.diverged ? "1" : "0") + "\n";
  }
  return s;
}

inline std::string network_text(const Network& net) {
  std::ostringstream os;
  write_network(os, net);
  return os.str();
}

inline std::string projector_text(const Projector& p) {
  std::ostringstream os;
  write_projector(os, p);
  return os.str();
}

// ---------------------------------------------------------------------------
// train-teacher

struct CommandResult {
  fs::path out_dir;
  std::string manifest;
};

inline CommandResult train_teacher_command(const CommonOptions& opts) {
  ExperimentConfig c = load_config(opts.config_path);
  apply_common(c, opts);
  validate(c);
  const auto [train, test] = generate_dataset(c.dataset);
  TrainSpec ts = c.train;
  ts.seed = c.seed;
  const TrialResult r = train_network(c.teacher, train, test, ts);

  OutputDir out(c.output_dir);
  out.write("config.txt", dump_config(c));
  out.write("teacher.ckpt", network_text(r.network));
  out.write("metrics.csv", metrics_csv({r}));
  return {out.root(), out.finish()};
}

// ---------------------------------------------------------------------------
// distill

struct DistillOverrides {
  std::string teacher_path;
  std::optional<std::string> method;  // a KD method name or "baseline"
  std::optional<double> alpha, r, beta;
  std::optional<std::string> mask;
  std::optional<std::size_t> trials;
  std::optional<unsigned> jobs;
};

inline void apply_distill_overrides(ExperimentConfig& c, const DistillOverrides& o) {
  if (o.method && *o.method != kBaselineMethod) c.distill.method = parse_kd_method(*o.method);
  if (o.alpha) c.distill.alpha = *o.alpha;
  if (o.r) c.distill.r = *o.r;
  if (o.beta) c.distill.beta = *o.beta;
  if (o.mask) c.distill.mask = o.mask->empty() ? std::vector<bool>{} : parse_mask(*o.mask);
  if (o.trials) c.trials = *o.trials;
  if (o.jobs) c.jobs = *o.jobs;
}

inline CommandResult distill_command(const CommonOptions& opts, const DistillOverrides& o) {
  ExperimentConfig c = load_config(opts.config_path);
  apply_common(c, opts);
  apply_distill_overrides(c, o);
  validate(c);
  const bool baseline = o.method && *o.method == kBaselineMethod;
  const Network teacher = load_network(o.teacher_path);
  const auto [train, test] = generate_dataset(c.dataset);

  ExperimentSetup setup{c.student, &teacher, &train, &test, c.train, c.distill, DistillOptions{c.inherit, c.autoencoder}};
  const auto seeds = trial_seeds(c.seed, c.trials);
  const std::string method = baseline ? std::string(kBaselineMethod) : std::string(kd_method_name(c.distill.method));
  std::vector<TrialResult> results(seeds.size());
  parallel_for(seeds.size(), c.jobs, [&](std::size_t i) {
    results[i] = run_trial(setup, method, c.distill.r, c.distill.alpha, c.distill.mask, seeds[i]);
  });

  OutputDir out(c.output_dir);
  out.write("config.txt", dump_config(c) + "\n# teacher = " + artifact_id(o.teacher_path) + "\n# method = " + method + "\n");
  out.write("metrics.csv", metrics_csv(results));
  out.write("summary.csv", summary_csv(results));
  for (const auto& r : results) {
    const std::string dir = "trial_" + std::to_string(r.seed) + "/";
    out.write(dir + "student.ckpt", network_text(r.network));
    out.write(dir + "student_merged.ckpt", network_text(merge_splits(r.network)));
    for (std::size_t i = 0; i < r.projectors.size(); ++i)
      if (r.projectors[i]) out.write(dir + "projector_" + std::to_string(i) + ".txt", projector_text(*r.projectors[i]));
  }
  return {out.root(), out.finish()};
}

// ---------------------------------------------------------------------------
// ablate

struct AblateOptions {
  std::string teacher_path;
  std::vector<std::string> methods;
  std::vector<double> rs, alphas;
  std::vector<std::string> masks;
  std::optional<std::size_t> trials;
  std::optional<unsigned> jobs;
};

inline CommandResult ablate_command(const CommonOptions& opts, const AblateOptions& a) {
  ExperimentConfig c = load_config(opts.config_path);
  apply_common(c, opts);
  if (a.trials) c.trials = *a.trials;
  if (a.jobs) c.jobs = *a.jobs;
  validate(c);
  AblationGrid grid{a.methods, a.rs, a.alphas, a.masks};
  if (grid.methods.empty()) grid.methods = {std::string(kd_method_name(c.distill.method))};
  if (grid.rs.empty()) grid.rs = {c.distill.r};
  if (grid.alphas.empty()) grid.alphas = {c.distill.alpha};
  if (grid.masks.empty()) {
    std::vector<bool> all = c.distill.mask;
    if (all.empty()) all.assign(c.student.taps.size(), true);
    grid.masks = {mask_string(all)};
  }
  for (double r : grid.rs)
    if (!(r >= 1.0)) throw Error(Errc::ValidationError, "r must be >= 1");
  for (double al : grid.alphas)
    if (!(al >= 0.0)) throw Error(Errc::ValidationError, "alpha must be >= 0");

  const Network teacher = load_network(a.teacher_path);
  const auto [train, test] = generate_dataset(c.dataset);
  ExperimentSetup setup{c.student, &teacher, &train, &test, c.train, c.distill, DistillOptions{c.inherit, c.autoencoder}};
  const auto seeds = trial_seeds(c.seed, c.trials);
  const AblationResult res = run_ablation_grid(setup, grid, seeds, c.jobs);

  OutputDir out(c.output_dir);
  out.write("config.txt", dump_config(c) + "\n# teacher = " + artifact_id(a.teacher_path) + "\n");
  out.write("grid.csv", grid_csv(res));
  out.write("trials.csv", trials_csv(res));
  return {out.root(), out.finish()};
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeOptions {
  std::string checkpoint_path;
  std::vector<std::string> projector_paths;
  std::vector<std::size_t> taps;  // tap position per projector; defaults to 0, 1, ...
  std::optional<std::uint64_t> dataset_seed;
};

inline std::string spectrum_rows(const EigenSpectrum& s) {
  std::string out;
  const auto v = s.exported();
  for (std::size_t i = 0; i < v.size(); ++i)
    out += std::to_string(i) + "," + format_shortest(v[i]) + "," + std::string(subspace_name(s.subspace)) + "\n";
  return out;
}

inline CommandResult analyze_command(const CommonOptions& opts, const AnalyzeOptions& a) {
  ExperimentConfig c = load_config(opts.config_path);
  apply_common(c, opts);
  if (a.dataset_seed) c.dataset.seed = *a.dataset_seed;
  validate(c.dataset);
  if (a.projector_paths.empty()) throw Error(Errc::ValidationError, "analyze needs at least one --projector");
  std::vector<std::size_t> taps = a.taps;
  if (taps.empty())
    for (std::size_t i = 0; i < a.projector_paths.size(); ++i) taps.push_back(i);
  if (taps.size() != a.projector_paths.size()) {
    throw Error(Errc::ValidationError, "give one --tap per --projector");
  }

  const Network net = load_network(a.checkpoint_path);
  const auto [train, test] = generate_dataset(c.dataset);
  if (train.x.cols() != net.input_dim()) throw Error(Errc::DimensionMismatch, "dataset width differs from checkpoint input");
  const ForwardResult fr = forward(net, train.x);
  const std::string ckpt_id = artifact_id(a.checkpoint_path);

  OutputDir out(c.output_dir);
  std::string summary = "tap,c,d,trace_full,trace_S,trace_S_perp,anisotropy_full,anisotropy_S,diagonal_dominance\n";
  for (std::size_t j = 0; j < taps.size(); ++j) {
    const std::size_t tap = taps[j];
    if (tap >= fr.taps.size()) {
      throw Error(Errc::DimensionMismatch, "checkpoint has " + std::to_string(fr.taps.size()) + " taps, asked for tap " +
                                               std::to_string(tap));
    }
    std::istringstream pin(read_file(a.projector_paths[j]));
    const Projector p = read_projector(pin);
    const Matrix& f = fr.taps[tap];
    if (p.k.rows() != f.cols()) {
      throw Error(Errc::DimensionMismatch, "tap " + std::to_string(tap) + " has " + std::to_string(f.cols()) +
                                               " features, projector expects " + std::to_string(p.k.rows()));
    }
    const EigenSpectrum full = spectrum(f);
    const SubspaceSpectra split = subspace_split_spectra(f, p.k, c.seed);
    const CovarianceGrid grid = covariance_heatmap(f, p.k);

    const std::string header = "# checkpoint=" + ckpt_id + " projector=" + artifact_id(a.projector_paths[j]) +
                               " tap=" + std::to_string(tap) + "\n";
    out.write("spectrum_tap" + std::to_string(tap) + ".csv",
              header + "index,eigenvalue,subspace_tag\n" + spectrum_rows(full) + spectrum_rows(split.in_s) +
                  spectrum_rows(split.in_s_perp));
    std::string heat = header + "row,col,abs_cov\n";
    for (std::size_t r = 0; r < grid.abs_cov.rows(); ++r)
      for (std::size_t col = 0; col < grid.abs_cov.cols(); ++col)
        heat += std::to_string(r) + "," + std::to_string(col) + "," + format_shortest(grid.abs_cov(r, col)) + "\n";
    out.write("heatmap_tap" + std::to_string(tap) + ".csv", heat);
    summary += std::to_string(tap) + "," + std::to_string(p.k.rows()) + "," + std::to_string(p.k.cols()) + "," +
               format_shortest(full.trace) + "," + format_shortest(split.in_s.trace) + "," +
               format_shortest(split.in_s_perp.trace) + "," + format_shortest(full.anisotropy()) + "," +
               format_shortest(split.in_s.anisotropy()) + "," + format_shortest(grid.diagonal_dominance) + "\n";
  }
  out.write("analysis_summary.csv", summary);
  return {out.root(), out.finish()};
}

}  // namespace rdimkd::cli
