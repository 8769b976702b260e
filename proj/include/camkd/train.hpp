#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "camkd/data.hpp"
#include "camkd/distill.hpp"
#include "camkd/models.hpp"

namespace camkd {

/// Step decay: the rate is multiplied by `decay` once for every milestone that
/// has been passed. Epochs are 1-based; milestone m first affects epoch m + 1.
struct Schedule {
  double base_lr = 0.05;
  std::vector<std::size_t> milestones{30, 45, 55};
  double decay = 0.1;
  std::size_t epochs = 60;

  /// 240 epochs at lr 0.1 with decays after 150, 180 and 210.
  static Schedule full_scale();

  /// Throws ConfigError.
  void validate() const;
  double lr_at(std::size_t epoch) const;
};

struct SgdState {
  std::vector<Tensor> velocity;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr = 0.05;
};

SgdState make_sgd_state(std::span<const Tensor* const> params, double momentum,
                        double weight_decay, double lr);

/// v <- momentum * v + g + weight_decay * theta;  theta <- theta - lr * v.
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, SgdState& state);

struct TrainSettings {
  Schedule schedule;
  std::size_t batch_size = 64;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  void validate() const;
};

/// Top-1 accuracy of `net` on `data`.
double evaluate(const BlockNet& net, const Dataset& data);

struct TeacherResult {
  BlockNet net;
  double test_accuracy = 0.0;
};

/// Trains a BlockNet with plain cross-entropy on the training split after
/// replacing `noise_fraction` of its labels; accuracy is measured on the clean
/// test split. Throws ParameterError unless 0 <= noise_fraction < 1.
TeacherResult train_teacher(const Split& data, std::span<const std::size_t> layer_widths,
                            double noise_fraction, std::uint64_t seed,
                            const TrainSettings& settings);

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;  // "train" or "test"
  double accuracy = 0.0;
  double loss_total = 0.0;
  double loss_ce = 0.0;
  double loss_kd = 0.0;
  double loss_inter = 0.0;
  double lr = 0.0;
};

struct WeightTraceRow {
  std::size_t sample_id = 0;
  std::size_t teacher_id = 0;
  double w_kd = 0.0;
  double w_inter = 0.0;
  double teacher_conf_loss = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
  std::vector<WeightTraceRow> weights;

  double final_test_accuracy() const;
};

struct DistillResult {
  Student student;
  RunLog log;
};

/// Per-sample weights of every teacher on `probe` under the given student.
std::vector<WeightTraceRow> weight_trace(const Student& student, std::span<const BlockNet> teachers,
                                         const Dataset& probe, const DistillConfig& cfg);

/// Distils a student of the given widths (input width first) from frozen
/// teachers. The probe set for weight traces is the first `probe_size` test
/// samples. Throws ConfigError when the strategy needs more teachers.
DistillResult distill_student(const Split& data, std::span<const BlockNet> teachers,
                              std::span<const std::size_t> student_widths,
                              const DistillConfig& cfg, const TrainSettings& settings,
                              std::uint64_t seed, std::size_t probe_size = 256);

}  // namespace camkd
