#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "camkd/commands.hpp"
#include "camkd/errors.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "JSON config file (defaults apply to missing keys)");
  cmd->add_option("--out", opts.out, "output directory (overrides out_dir)");
  cmd->add_option("--seed", opts.seed, "run seed (overrides seed)");
}

camkd::ExperimentConfig resolve(const CommonOptions& opts) {
  camkd::ExperimentConfig cfg;
  if (!opts.config.empty()) cfg = camkd::load_config(opts.config);
  if (!opts.out.empty()) cfg.out_dir = opts.out;
  if (opts.seed) cfg.seed = *opts.seed;
  cfg.validate();
  return cfg;
}

void print_summary(const std::vector<camkd::SummaryRow>& rows) {
  for (const camkd::SummaryRow& r : rows) {
    fmt::print("{:<12} {:.2f} +- {:.2f} ({} runs)\n", r.label, 100.0 * r.summary.mean,
               100.0 * r.summary.stddev, r.summary.runs);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"camkd: confidence-aware multi-teacher knowledge distillation"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string run_dir;
  auto* gen = app.add_subcommand("gen-data", "generate train.csv and test.csv");
  auto* teach = app.add_subcommand("train-teachers", "train teachers and write checkpoints");
  auto* distill = app.add_subcommand("distill", "distil one student and write its run log");
  auto* compare = app.add_subcommand("compare", "compare strategies over the listed seeds");
  auto* sweep = app.add_subcommand("sweep-teachers", "student accuracy against teacher count");
  auto* exportw = app.add_subcommand("export-weights", "recompute the weight trace of a run");
  auto* ablate = app.add_subcommand("ablate", "ablation rows over the listed seeds");
  for (CLI::App* cmd : {gen, teach, distill, compare, sweep, ablate}) add_common(cmd, opts);
  exportw->add_option("--run", run_dir, "directory of a finished distill run")->required();
  exportw->add_option("--out", opts.out, "output directory (defaults to the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (exportw->parsed()) {
      const std::filesystem::path out = opts.out.empty() ? run_dir : opts.out;
      const auto rows = camkd::cmd_export_weights(run_dir, out);
      fmt::print("wrote {} rows to {}\n", rows.size(), (out / "weights.csv").string());
      return 0;
    }
    const camkd::ExperimentConfig cfg = resolve(opts);
    if (gen->parsed()) {
      const camkd::Split data = camkd::cmd_gen_data(cfg);
      fmt::print("train {} samples, test {} samples -> {}\n", data.train.size(), data.test.size(),
                 cfg.out_dir);
    } else if (teach->parsed()) {
      const auto teachers = camkd::cmd_train_teachers(cfg);
      for (std::size_t k = 0; k < teachers.size(); ++k) {
        fmt::print("teacher {} noise {} test accuracy {:.4f}\n", k, cfg.teacher_noise[k],
                   teachers[k].test_accuracy);
      }
    } else if (distill->parsed()) {
      const auto result = camkd::cmd_distill(cfg);
      fmt::print("{} student test accuracy {:.4f}\n", camkd::to_string(cfg.distill.strategy),
                 result.log.final_test_accuracy());
    } else if (compare->parsed()) {
      print_summary(camkd::cmd_compare(cfg));
    } else if (sweep->parsed()) {
      for (const auto& r : camkd::cmd_sweep_teachers(cfg, cfg.k_list)) {
        fmt::print("K={} {:<10} {:.2f} +- {:.2f}\n", r.teachers, r.strategy, 100.0 * r.summary.mean,
                   100.0 * r.summary.stddev);
      }
    } else if (ablate->parsed()) {
      print_summary(camkd::cmd_ablate(cfg));
    }
    return 0;
  } catch (const camkd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
