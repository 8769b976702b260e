#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "camkd/config.hpp"
#include "camkd/report.hpp"
#include "camkd/train.hpp"

namespace camkd {

// Every command validates its config before any compute, writes the resolved
// config next to its outputs, and writes nothing outside cfg.out_dir.

/// Loads data_dir/{train,test}.csv or generates blobs.
Split prepare_data(const ExperimentConfig& cfg);
/// Loads teacher_dir/teacher_<k>.json or trains one teacher per noise entry.
std::vector<TeacherResult> prepare_teachers(const ExperimentConfig& cfg, const Split& data);

/// Writes train.csv and test.csv.
Split cmd_gen_data(const ExperimentConfig& cfg);

/// Writes teacher_<k>.json and teachers.csv (per-teacher and majority-vote accuracy).
std::vector<TeacherResult> cmd_train_teachers(const ExperimentConfig& cfg);

/// Writes student.json, adapters.json, metrics.csv and weights.csv.
DistillResult cmd_distill(const ExperimentConfig& cfg);

/// One run per strategy and seed with shared teachers. Writes compare_runs.csv and
/// compare.csv (mean/std per strategy plus teacher and ensemble reference rows).
std::vector<SummaryRow> cmd_compare(const ExperimentConfig& cfg);

struct SweepRow {
  std::size_t teachers = 0;
  std::string strategy;
  Summary summary;
};

/// Student accuracy against the number of teachers. Teachers are ranked by clean
/// training accuracy and the best k are used; k = 1 is single-teacher KD (AVER).
/// Writes sweep.csv.
std::vector<SweepRow> cmd_sweep_teachers(const ExperimentConfig& cfg,
                                         std::span<const std::size_t> k_list);

/// Recomputes the probe-set weight trace of a finished distill run and writes
/// weights.csv under `out_dir`.
std::vector<WeightTraceRow> cmd_export_weights(const std::filesystem::path& run_dir,
                                               const std::filesystem::path& out_dir);

/// Rows avg_weight, wo_l_inter, wo_w_inter, full. Writes ablation_runs.csv and
/// ablation.csv.
std::vector<SummaryRow> cmd_ablate(const ExperimentConfig& cfg);

/// Ablation variant applied on top of a base distillation config.
DistillConfig ablation_variant(const DistillConfig& base, const std::string& name);
inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> names{"avg_weight", "wo_l_inter", "wo_w_inter", "full"};
  return names;
}

/// Teacher indices ordered by clean training accuracy, best first (stable).
std::vector<std::size_t> rank_teachers(std::span<const BlockNet> teachers, const Dataset& train);

}  // namespace camkd
