#include <CLI11.hpp>

#include <iostream>

#include "rdimkd/cli.hpp"

namespace {

using namespace rdimkd;
using namespace rdimkd::cli;

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "Experiment config file (sectioned key = value)")->check(CLI::ExistingFile);
  cmd->add_option("-s,--seed", o.seed, "Global seed; falls back to RDIMKD_SEED, then the config");
  cmd->add_option("-o,--out", o.out, "Output directory (overrides [run] output_dir)");
  cmd->add_option("--epochs", o.epochs, "Training epochs (overrides [train] epochs)");
}

std::vector<double> parse_reals(const std::vector<std::string>& items, const char* flag) {
  std::vector<double> out;
  for (const auto& s : items) {
    try {
      out.push_back(parse_double(s));
    } catch (const Error&) {
      throw Error(Errc::ParseError, std::string(flag) + ": '" + s + "' is not a number");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced-dimension feature distillation experiments on toy MLPs"};
  app.require_subcommand(1);

  CommonOptions teacher_opts;
  auto* teacher_cmd = app.add_subcommand("train-teacher", "Train the teacher network and write its checkpoint");
  add_common(teacher_cmd, teacher_opts);

  CommonOptions distill_opts;
  DistillOverrides distill;
  auto* distill_cmd = app.add_subcommand("distill", "Train students against a frozen teacher");
  add_common(distill_cmd, distill_opts);
  distill_cmd->add_option("-t,--teacher", distill.teacher_path, "Teacher checkpoint")->required();
  distill_cmd->add_option("-m,--method", distill.method, "Projector: " + kd_method_list() + ", or baseline (no teacher)");
  distill_cmd->add_option("--alpha", distill.alpha, "Weight of the projected feature loss");
  distill_cmd->add_option("-r,--r", distill.r, "Reduction rate c/d");
  distill_cmd->add_option("--beta", distill.beta, "Weight of the soft-label term");
  distill_cmd->add_option("--mask", distill.mask, "0/1 per tap position, e.g. 001111");
  distill_cmd->add_option("--trials", distill.trials, "Number of seeds (seed, seed+1, ...)");
  distill_cmd->add_option("-j,--jobs", distill.jobs, "Parallel trials");

  CommonOptions ablate_opts;
  AblateOptions ablate;
  std::vector<std::string> rs, alphas;
  auto* ablate_cmd = app.add_subcommand("ablate", "Sweep methods x r x alpha x mask over paired seeds");
  add_common(ablate_cmd, ablate_opts);
  ablate_cmd->add_option("-t,--teacher", ablate.teacher_path, "Teacher checkpoint")->required();
  ablate_cmd->add_option("--methods", ablate.methods, "Comma list; the first is the delta reference")->delimiter(',');
  ablate_cmd->add_option("--rs", rs, "Comma list of reduction rates")->delimiter(',');
  ablate_cmd->add_option("--alphas", alphas, "Comma list of alpha values")->delimiter(',');
  ablate_cmd->add_option("--masks", ablate.masks, "Comma list of 0/1 masks")->delimiter(',');
  ablate_cmd->add_option("--trials", ablate.trials, "Number of paired seeds");
  ablate_cmd->add_option("-j,--jobs", ablate.jobs, "Parallel trials");

  CommonOptions analyze_opts;
  AnalyzeOptions analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Spectra and covariance heatmaps of tapped features");
  add_common(analyze_cmd, analyze_opts);
  analyze_cmd->add_option("-k,--checkpoint", analyze.checkpoint_path, "Network checkpoint")->required();
  analyze_cmd->add_option("-p,--projector", analyze.projector_paths, "Projector file, repeatable")->required();
  analyze_cmd->add_option("--tap", analyze.taps, "Tap position for each projector, repeatable");
  analyze_cmd->add_option("--dataset-seed", analyze.dataset_seed, "Dataset seed (overrides [dataset] seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    CommandResult r;
    if (*teacher_cmd) {
      r = train_teacher_command(teacher_opts);
    } else if (*distill_cmd) {
      r = distill_command(distill_opts, distill);
    } else if (*ablate_cmd) {
      ablate.rs = parse_reals(rs, "--rs");
      ablate.alphas = parse_reals(alphas, "--alphas");
      r = ablate_command(ablate_opts, ablate);
    } else {
      r = analyze_command(analyze_opts, analyze);
    }
    std::cout << "wrote " << r.out_dir.string() << "\n" << r.manifest;
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "rdimkd: " << errc_name(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "rdimkd: " << e.what() << "\n";
    return kExitValidation;
  }
}
