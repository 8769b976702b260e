#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "camkd/autodiff.hpp"
#include "camkd/models.hpp"
#include "camkd/tensor.hpp"

namespace camkd {

enum class Strategy { CaMkd, Aver, Ebkd, FitnetMkd };

/// How teacher logits become KD targets. Softened uses sigma(z_T / tau) as a
/// probability target; LiteralLogits multiplies the student log-probabilities by
/// the raw teacher logits.
enum class KdTargetForm { Softened, LiteralLogits };

/// Which weights aggregate the feature loss under CA-MKD. `Kd` reuses the
/// prediction weights (the "w/o w_inter" ablation).
enum class InterWeightSource { Inter, Kd };

std::string_view to_string(Strategy s);
std::string_view to_string(KdTargetForm f);
std::string_view to_string(InterWeightSource s);
std::optional<Strategy> parse_strategy(std::string_view name);
std::optional<KdTargetForm> parse_kd_target_form(std::string_view name);
std::optional<InterWeightSource> parse_inter_weight_source(std::string_view name);

/// True for strategies whose weighting needs at least two teachers.
bool requires_multiple_teachers(Strategy s);

struct DistillConfig {
  std::size_t teachers = 3;
  double tau = 4.0;
  /// Temperature of the confidence cross-entropies that feed the CA-MKD weights.
  double tau_conf = 1.0;
  double alpha = 1.0;
  double beta = 50.0;
  Strategy strategy = Strategy::CaMkd;
  KdTargetForm kd_target_form = KdTargetForm::Softened;
  bool tau_square_scaling = true;
  /// Treat sample weights as constants during backprop. When false, w_inter is
  /// differentiated through the student features.
  bool detach_weights = true;
  InterWeightSource inter_weight_source = InterWeightSource::Inter;

  /// Throws ConfigError.
  void validate() const;
};

/// Per-sample teacher weights, samples x teachers. Each row is one sample's
/// weight vector over the K teachers.
class WeightMatrix {
 public:
  WeightMatrix() = default;
  explicit WeightMatrix(Tensor values) : values_(std::move(values)) {}

  std::size_t samples() const { return values_.rows(); }
  std::size_t teachers() const { return values_.cols(); }
  double operator()(std::size_t sample, std::size_t teacher) const {
    return values_(sample, teacher);
  }
  std::span<const double> sample(std::size_t i) const { return values_.row(i); }
  const Tensor& tensor() const { return values_; }

 private:
  Tensor values_;
};

/// Entry (i, k) is the cross-entropy of teacher k's tempered prediction against
/// label i.
Tensor teacher_conf_losses(std::span<const Tensor> teacher_logits, std::span<const int> labels,
                           double tau_conf);

/// w_k = (1 - exp(L_k) / sum_j exp(L_j)) / (K - 1), per sample. Lower loss means
/// larger weight; rows sum to one and every entry lies in [0, 1/(K-1)].
/// Throws ConfigError when fewer than two teachers are given.
WeightMatrix confidence_weights(const Tensor& conf_losses);

/// Prediction weights from teacher confidence losses.
inline WeightMatrix kd_weights(const Tensor& conf_losses) { return confidence_weights(conf_losses); }
/// Feature weights from the confidence losses of student features under each
/// teacher's classifier. Same formula as kd_weights.
inline WeightMatrix inter_weights(const Tensor& inter_conf_losses) {
  return confidence_weights(inter_conf_losses);
}

/// Uniform 1/K weights (AVER).
WeightMatrix avg_weights(std::size_t teachers, std::size_t samples = 1);

/// Label-free entropy weights (EBKD): w_k = (1 - H_k / sum_j H_j) / (K - 1), with H_k the
/// Shannon entropy of sigma(z_k / tau). Uniform when every entropy is zero.
WeightMatrix entropy_weights(std::span<const Tensor> teacher_logits, double tau);
WeightMatrix entropy_weights_from_entropies(const Tensor& entropies);

/// Student features through a frozen teacher classifier: h W_T + b_T.
Tensor project_student_feature(const Tensor& h_adapted, const Linear& teacher_classifier);
/// Graph form. The classifier enters as constants, so no gradient reaches it.
Var project_student_feature(Var h_adapted, const Linear& teacher_classifier);

/// Differentiable confidence_weights.
Var confidence_weights(Var conf_losses);

/// Weighted KD cross-entropy between teacher targets and the student's tempered
/// prediction, averaged over the batch.
Var loss_kd(const WeightMatrix& weights, std::span<const Tensor> teacher_logits,
            Var student_logits, const DistillConfig& cfg);

/// sum_k w_k ||F_Tk - r_k(F_S)||^2 averaged over the batch. `weights` is samples x K;
/// teacher features are constants.
Var loss_inter(Var weights, std::span<const Tensor> teacher_features,
               std::span<const Var> adapted_student);

/// ||mean_k F_Tk - r(F_S)||^2 averaged over the batch (FitNet-MKD hint term).
Var loss_fitnet_inter(std::span<const Tensor> teacher_features, Var adapted_student);

/// Per-sample majority class; ties broken by summed softmax probability, then by
/// lowest class index.
std::vector<int> majority_vote(std::span<const Tensor> teacher_logits);
/// Top-1 accuracy of the majority vote.
double ensemble_majority_vote(std::span<const Tensor> teacher_logits, std::span<const int> labels);

/// Frozen teacher outputs for one batch.
struct TeacherBatch {
  std::vector<Tensor> logits;
  std::vector<Tensor> features;
  std::vector<const Linear*> classifiers;

  std::size_t size() const { return logits.size(); }
};

TeacherBatch evaluate_teachers(std::span<const BlockNet> teachers, const Tensor& x);

/// Student network plus its feature adapters (one per teacher; FitNet-MKD uses
/// only the first). Adapters of equal shape start from the same initial values,
/// so duplicated teachers see duplicated adapters.
struct Student {
  BlockNet net;
  std::vector<Adapter> adapters;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  bool operator==(const Student&) const = default;
};

Student make_student(std::span<const std::size_t> layer_widths, std::size_t classes,
                     std::span<const std::size_t> teacher_feature_widths, std::uint64_t seed);

/// Fixed weights to use instead of the strategy's own, e.g. to finite-difference
/// the detached objective.
struct WeightOverride {
  std::optional<Tensor> kd;
  std::optional<Tensor> inter;
};

struct ObjectiveVars {
  Var total;
  Var ce;
  Var kd;
  Var inter;
  Tensor conf_losses;  // teacher confidence losses, samples x K
  WeightMatrix w_kd;
  WeightMatrix w_inter;
};

/// Records L = L_CE + alpha L_KD + beta L_inter on `g`. `adapter_params` holds one
/// projection leaf per adapter of the student.
ObjectiveVars build_objective(Graph& g, const ForwardVars& student,
                              std::span<const Var> adapter_params, const TeacherBatch& teachers,
                              std::span<const int> labels, const DistillConfig& cfg,
                              const WeightOverride* override_weights = nullptr);

struct LossDiagnostics {
  double total = 0.0;
  double ce = 0.0;
  double kd = 0.0;
  double inter = 0.0;
  Tensor teacher_conf_losses;
  WeightMatrix w_kd;
  WeightMatrix w_inter;
};

struct LossEvaluation {
  LossDiagnostics diagnostics;
  /// Gradients in Student::parameters() order; empty unless requested.
  std::vector<Tensor> gradients;
};

LossEvaluation total_loss(const Student& student, const TeacherBatch& teachers, const Tensor& x,
                          std::span<const int> labels, const DistillConfig& cfg,
                          bool with_gradients = false,
                          const WeightOverride* override_weights = nullptr);

LossEvaluation total_loss(const Student& student, std::span<const BlockNet> teachers,
                          const Tensor& x, std::span<const int> labels, const DistillConfig& cfg,
                          bool with_gradients = false,
                          const WeightOverride* override_weights = nullptr);

}  // namespace camkd
