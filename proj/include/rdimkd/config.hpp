#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rdimkd/dataset.hpp"
#include "rdimkd/error.hpp"
#include "rdimkd/losses.hpp"
#include "rdimkd/matrix.hpp"
#include "rdimkd/projection.hpp"
#include "rdimkd/train.hpp"

namespace rdimkd {

// Config grammar:
//
//   file    := { line '\n' }
//   line    := blank | comment | section | entry
//   comment := '#' text
//   section := '[' name ']'
//   entry   := key '=' value          (surrounding whitespace ignored)
//
// Sections and keys:
//   [dataset]  kind (moons|spirals|gaussian-mixture), n_train, n_test, noise, classes, seed
//   [teacher]  hidden (comma list), taps (comma list of layer indices),
//              splits (comma list of index:width)
//   [student]  hidden, taps, splits, inherit (true|false)
//   [train]    epochs, batch_size, lr, momentum, weight_decay, schedule (cosine|constant)
//   [distill]  method, r, alpha, beta, mask (0/1 string, empty = all), ae_gamma, ae_steps, ae_step_size
//   [run]      output_dir, trials, seed, jobs
//
// Every key is optional; missing keys keep the defaults below.

struct ExperimentConfig {
  DatasetSpec dataset;
  NetSpec teacher{{64, 64}, {1}, {}};
  NetSpec student{{8, 8}, {1}, {{1, 64}}};
  bool inherit = false;
  TrainSpec train;
  DistillSpec distill;
  AutoencoderOptions autoencoder;
  std::string output_dir = "out";
  std::size_t trials = 3;
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  ExperimentConfig() { distill.mask = {}; }

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.dataset == b.dataset && a.teacher == b.teacher && a.student == b.student && a.inherit == b.inherit &&
           a.train == b.train && a.distill == b.distill && a.autoencoder.gamma == b.autoencoder.gamma &&
           a.autoencoder.steps == b.autoencoder.steps && a.autoencoder.step_size == b.autoencoder.step_size &&
           a.output_dir == b.output_dir && a.trials == b.trials && a.seed == b.seed && a.jobs == b.jobs;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& where) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw Error(Errc::ParseError, where + ": expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw Error(Errc::ParseError, where + ": integer out of range '" + v + "'");
  }
}

inline double parse_real(const std::string& v, const std::string& where) {
  try {
    return parse_double(v);
  } catch (const Error&) {
    throw Error(Errc::ParseError, where + ": expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(Errc::ParseError, where + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::size_t> parse_index_list(const std::string& v, const std::string& where) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) out.push_back(parse_u64(item, where));
  return out;
}

inline std::vector<std::pair<std::size_t, std::size_t>> parse_splits(const std::string& v, const std::string& where) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& item : split_list(v)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw Error(Errc::ParseError, where + ": split must be index:width, got '" + item + "'");
    out.emplace_back(parse_u64(trim(item.substr(0, colon)), where), parse_u64(trim(item.substr(colon + 1)), where));
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::string join_splits(const std::vector<std::pair<std::size_t, std::size_t>>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i].first) + ":" + std::to_string(v[i].second);
  }
  return s;
}

inline void apply_net_key(NetSpec& net, const std::string& key, const std::string& value, const std::string& where,
                          bool& known) {
  known = true;
  if (key == "hidden") net.hidden = parse_index_list(value, where);
  else if (key == "taps") net.taps = parse_index_list(value, where);
  else if (key == "splits") net.splits = parse_splits(value, where);
  else known = false;
}

}  // namespace detail

/// Checks every cross-field constraint; throws ValidationError naming it.
inline void validate(const ExperimentConfig& c) {
  validate(c.dataset);
  validate(c.train);
  validate(c.distill);
  if (c.trials < 1) throw Error(Errc::ValidationError, "trials must be >= 1");
  if (c.jobs < 1) throw Error(Errc::ValidationError, "jobs must be >= 1");
  if (!(c.autoencoder.gamma > 0.0)) throw Error(Errc::ValidationError, "ae_gamma must be > 0");
  if (c.autoencoder.steps < 1) throw Error(Errc::ValidationError, "ae_steps must be >= 1");
  if (!(c.autoencoder.step_size > 0.0)) throw Error(Errc::ValidationError, "ae_step_size must be > 0");

  std::vector<LayerSpec> t_layers, s_layers;
  try {
    t_layers = layer_specs(c.teacher, 2, c.dataset.classes);
    s_layers = layer_specs(c.student, 2, c.dataset.classes);
    validate_specs(t_layers);
    validate_specs(s_layers);
  } catch (const Error& e) {
    throw Error(Errc::ValidationError, std::string("network: ") + e.what());
  }
  std::vector<std::size_t> t_dims, s_dims;
  for (const auto& l : t_layers)
    if (l.tap) t_dims.push_back(l.tap_dim());
  for (const auto& l : s_layers)
    if (l.tap) s_dims.push_back(l.tap_dim());
  if (!c.distill.mask.empty() && c.distill.mask.size() != s_dims.size()) {
    throw Error(Errc::ValidationError, "mask has " + std::to_string(c.distill.mask.size()) + " entries but the student has " +
                                           std::to_string(s_dims.size()) + " taps");
  }
  if (t_dims.size() != s_dims.size()) {
    throw Error(Errc::ValidationError, "teacher has " + std::to_string(t_dims.size()) + " taps, student " +
                                           std::to_string(s_dims.size()));
  }
  for (std::size_t i = 0; i < s_dims.size(); ++i) {
    const bool active = c.distill.mask.empty() || c.distill.mask[i];
    if (active && s_dims[i] != t_dims[i]) {
      throw Error(Errc::ValidationError, "tap " + std::to_string(i) + " width differs: teacher " + std::to_string(t_dims[i]) +
                                             ", student " + std::to_string(s_dims[i]) + " (use a split layer)");
    }
  }
}

inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  for (int lineno = 1; std::getline(in, raw); ++lineno) {
    const std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::string where = "line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(Errc::ParseError, where + ": unterminated section header");
      section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
      if (section != "dataset" && section != "teacher" && section != "student" && section != "train" &&
          section != "distill" && section != "run") {
        throw Error(Errc::ParseError, where + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(Errc::ParseError, where + ": expected key = value");
    if (section.empty()) throw Error(Errc::ParseError, where + ": entry outside any section");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    const std::string field = where + " [" + section + "] " + key;

    bool known = true;
    if (section == "dataset") {
      if (key == "kind") {
        try {
          c.dataset.kind = parse_dataset_kind(value);
        } catch (const Error&) {
          throw Error(Errc::ParseError, field + ": unknown dataset kind '" + value + "'");
        }
      } else if (key == "n_train") c.dataset.n_train = detail::parse_u64(value, field);
      else if (key == "n_test") c.dataset.n_test = detail::parse_u64(value, field);
      else if (key == "noise") c.dataset.noise = detail::parse_real(value, field);
      else if (key == "classes") c.dataset.classes = detail::parse_u64(value, field);
      else if (key == "seed") c.dataset.seed = detail::parse_u64(value, field);
      else known = false;
    } else if (section == "teacher") {
      detail::apply_net_key(c.teacher, key, value, field, known);
    } else if (section == "student") {
      detail::apply_net_key(c.student, key, value, field, known);
      if (!known && key == "inherit") {
        c.inherit = detail::parse_bool(value, field);
        known = true;
      }
    } else if (section == "train") {
      if (key == "epochs") c.train.epochs = static_cast<int>(detail::parse_u64(value, field));
      else if (key == "batch_size") c.train.batch_size = detail::parse_u64(value, field);
      else if (key == "lr") c.train.lr_init = detail::parse_real(value, field);
      else if (key == "momentum") c.train.momentum = detail::parse_real(value, field);
      else if (key == "weight_decay") c.train.weight_decay = detail::parse_real(value, field);
      else if (key == "schedule") {
        if (value == "cosine") c.train.schedule = Schedule::Cosine;
        else if (value == "constant") c.train.schedule = Schedule::Constant;
        else throw Error(Errc::ParseError, field + ": schedule must be cosine or constant");
      } else known = false;
    } else if (section == "distill") {
      if (key == "method") {
        try {
          c.distill.method = parse_kd_method(value);
        } catch (const Error& e) {
          throw Error(Errc::ParseError, field + ": " + e.what());
        }
      } else if (key == "r") c.distill.r = detail::parse_real(value, field);
      else if (key == "alpha") c.distill.alpha = detail::parse_real(value, field);
      else if (key == "beta") c.distill.beta = detail::parse_real(value, field);
      else if (key == "mask") {
        try {
          c.distill.mask = value.empty() ? std::vector<bool>{} : parse_mask(value);
        } catch (const Error& e) {
          throw Error(Errc::ParseError, field + ": " + e.what());
        }
      } else if (key == "ae_gamma") c.autoencoder.gamma = detail::parse_real(value, field);
      else if (key == "ae_steps") c.autoencoder.steps = static_cast<int>(detail::parse_u64(value, field));
      else if (key == "ae_step_size") c.autoencoder.step_size = detail::parse_real(value, field);
      else known = false;
    } else if (section == "run") {
      if (key == "output_dir") c.output_dir = value;
      else if (key == "trials") c.trials = detail::parse_u64(value, field);
      else if (key == "seed") c.seed = detail::parse_u64(value, field);
      else if (key == "jobs") c.jobs = static_cast<unsigned>(detail::parse_u64(value, field));
      else known = false;
    }
    if (!known) throw Error(Errc::ParseError, field + ": unknown key");
  }
  validate(c);
  return c;
}

/// Every field, fixed order, shortest round-trip numbers.
inline std::string dump_config(const ExperimentConfig& c) {
  std::ostringstream os;
  auto net = [&](const char* name, const NetSpec& n) {
    os << "[" << name << "]\n";
    os << "hidden = " << detail::join(n.hidden) << "\n";
    os << "taps = " << detail::join(n.taps) << "\n";
    os << "splits = " << detail::join_splits(n.splits) << "\n";
  };
  os << "[dataset]\n";
  os << "kind = " << dataset_kind_name(c.dataset.kind) << "\n";
  os << "n_train = " << c.dataset.n_train << "\n";
  os << "n_test = " << c.dataset.n_test << "\n";
  os << "noise = " << format_shortest(c.dataset.noise) << "\n";
  os << "classes = " << c.dataset.classes << "\n";
  os << "seed = " << c.dataset.seed << "\n\n";
  net("teacher", c.teacher);
  os << "\n";
  net("student", c.student);
  os << "inherit = " << (c.inherit ? "true" : "false") << "\n\n";
  os << "[train]\n";
  os << "epochs = " << c.train.epochs << "\n";
  os << "batch_size = " << c.train.batch_size << "\n";
  os << "lr = " << format_shortest(c.train.lr_init) << "\n";
  os << "momentum = " << format_shortest(c.train.momentum) << "\n";
  os << "weight_decay = " << format_shortest(c.train.weight_decay) << "\n";
  os << "schedule = " << (c.train.schedule == Schedule::Cosine ? "cosine" : "constant") << "\n\n";
  os << "[distill]\n";
  os << "method = " << kd_method_name(c.distill.method) << "\n";
  os << "r = " << format_shortest(c.distill.r) << "\n";
  os << "alpha = " << format_shortest(c.distill.alpha) << "\n";
  os << "beta = " << format_shortest(c.distill.beta) << "\n";
  os << "mask = " << mask_string(c.distill.mask) << "\n";
  os << "ae_gamma = " << format_shortest(c.autoencoder.gamma) << "\n";
  os << "ae_steps = " << c.autoencoder.steps << "\n";
  os << "ae_step_size = " << format_shortest(c.autoencoder.step_size) << "\n\n";
  os << "[run]\n";
  os << "output_dir = " << c.output_dir << "\n";
  os << "trials = " << c.trials << "\n";
  os << "seed = " << c.seed << "\n";
  os << "jobs = " << c.jobs << "\n";
  return os.str();
}

}  // namespace rdimkd
