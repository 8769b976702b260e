#include "camkd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "camkd/errors.hpp"
#include "camkd/rng.hpp"

namespace camkd {

namespace {

void require_teacher_shapes(std::span<const Tensor> teacher_logits, const char* op) {
  if (teacher_logits.empty()) throw DimensionError(std::string(op) + ": no teachers");
  const Shape first = teacher_logits.front().shape();
  for (const Tensor& z : teacher_logits) {
    if (z.shape() != first) {
      throw DimensionError(std::string(op) + ": teacher logits " + to_string(z.shape()) +
                           " vs " + to_string(first));
    }
  }
}

void require_multiple(std::size_t teachers) {
  if (teachers < 2) throw ConfigError("CA-MKD weighting requires >= 2 teachers");
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::CaMkd: return "CA_MKD";
    case Strategy::Aver: return "AVER";
    case Strategy::Ebkd: return "EBKD";
    case Strategy::FitnetMkd: return "FITNET_MKD";
  }
  return "?";
}

std::string_view to_string(KdTargetForm f) {
  return f == KdTargetForm::Softened ? "SOFTENED" : "LITERAL_LOGITS";
}

std::string_view to_string(InterWeightSource s) {
  return s == InterWeightSource::Inter ? "INTER" : "KD";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::CaMkd, Strategy::Aver, Strategy::Ebkd, Strategy::FitnetMkd}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

std::optional<KdTargetForm> parse_kd_target_form(std::string_view name) {
  for (KdTargetForm f : {KdTargetForm::Softened, KdTargetForm::LiteralLogits}) {
    if (to_string(f) == name) return f;
  }
  return std::nullopt;
}

std::optional<InterWeightSource> parse_inter_weight_source(std::string_view name) {
  for (InterWeightSource s : {InterWeightSource::Inter, InterWeightSource::Kd}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

bool requires_multiple_teachers(Strategy s) {
  return s == Strategy::CaMkd || s == Strategy::Ebkd;
}

void DistillConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(tau_conf > 0.0)) throw ConfigError("tau_conf must be positive");
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
  if (teachers < 1) throw ConfigError("at least one teacher is required");
  if (requires_multiple_teachers(strategy) && teachers < 2) {
    throw ConfigError(std::string(to_string(strategy)) + " weighting requires >= 2 teachers");
  }
}

Tensor teacher_conf_losses(std::span<const Tensor> teacher_logits, std::span<const int> labels,
                           double tau_conf) {
  require_teacher_shapes(teacher_logits, "teacher_conf_losses");
  const std::size_t batch = teacher_logits.front().rows();
  Tensor out(batch, teacher_logits.size());
  for (std::size_t k = 0; k < teacher_logits.size(); ++k) {
    const Tensor ce = cross_entropy(softmax_t(teacher_logits[k], tau_conf), labels);
    for (std::size_t i = 0; i < batch; ++i) out(i, k) = ce[i];
  }
  return out;
}

WeightMatrix confidence_weights(const Tensor& conf_losses) {
  const std::size_t teachers = conf_losses.cols();
  require_multiple(teachers);
  // Same op sequence as the graph form so both agree to the last bit.
  Tensor w = softmax_t(conf_losses, 1.0);
  const double inv = 1.0 / static_cast<double>(teachers - 1);
  for (auto& v : w.values()) v = (1.0 + (-v)) * inv;
  return WeightMatrix(std::move(w));
}

Var confidence_weights(Var conf_losses) {
  const std::size_t teachers = conf_losses.value().cols();
  require_multiple(teachers);
  const double inv = 1.0 / static_cast<double>(teachers - 1);
  return ad::scale(ad::add_scalar(ad::scale(ad::softmax_t(conf_losses, 1.0), -1.0), 1.0), inv);
}

WeightMatrix avg_weights(std::size_t teachers, std::size_t samples) {
  if (teachers == 0) throw ConfigError("avg_weights: no teachers");
  return WeightMatrix(Tensor(samples, teachers, 1.0 / static_cast<double>(teachers)));
}

WeightMatrix entropy_weights_from_entropies(const Tensor& entropies) {
  const std::size_t teachers = entropies.cols();
  require_multiple(teachers);
  Tensor w(entropies.rows(), teachers);
  const double inv = 1.0 / static_cast<double>(teachers - 1);
  for (std::size_t i = 0; i < entropies.rows(); ++i) {
    double total = 0.0;
    for (const double h : entropies.row(i)) total += h;
    auto wr = w.row(i);
    if (!(total > 0.0)) {
      std::fill(wr.begin(), wr.end(), 1.0 / static_cast<double>(teachers));
      continue;
    }
    for (std::size_t k = 0; k < teachers; ++k) wr[k] = (1.0 - entropies(i, k) / total) * inv;
  }
  return WeightMatrix(std::move(w));
}

WeightMatrix entropy_weights(std::span<const Tensor> teacher_logits, double tau) {
  require_teacher_shapes(teacher_logits, "entropy_weights");
  require_multiple(teacher_logits.size());
  const std::size_t batch = teacher_logits.front().rows();
  Tensor entropies(batch, teacher_logits.size());
  for (std::size_t k = 0; k < teacher_logits.size(); ++k) {
    const Tensor h = row_entropy(softmax_t(teacher_logits[k], tau));
    for (std::size_t i = 0; i < batch; ++i) entropies(i, k) = h[i];
  }
  return entropy_weights_from_entropies(entropies);
}

Tensor project_student_feature(const Tensor& h_adapted, const Linear& teacher_classifier) {
  if (h_adapted.cols() != teacher_classifier.in_width()) {
    throw DimensionError("project_student_feature: feature width " +
                         std::to_string(h_adapted.cols()) + " but teacher classifier expects " +
                         std::to_string(teacher_classifier.in_width()));
  }
  return add_row_broadcast(matmul(h_adapted, teacher_classifier.weight), teacher_classifier.bias);
}

Var project_student_feature(Var h_adapted, const Linear& teacher_classifier) {
  if (h_adapted.value().cols() != teacher_classifier.in_width()) {
    throw DimensionError("project_student_feature: feature width " +
                         std::to_string(h_adapted.value().cols()) +
                         " but teacher classifier expects " +
                         std::to_string(teacher_classifier.in_width()));
  }
  Graph& g = *h_adapted.graph();
  return ad::add_row_broadcast(ad::matmul(h_adapted, g.constant(teacher_classifier.weight)),
                               g.constant(teacher_classifier.bias));
}

Var loss_kd(const WeightMatrix& weights, std::span<const Tensor> teacher_logits,
            Var student_logits, const DistillConfig& cfg) {
  require_teacher_shapes(teacher_logits, "loss_kd");
  if (weights.teachers() != teacher_logits.size()) {
    throw DimensionError("loss_kd: " + std::to_string(weights.teachers()) + " weights for " +
                         std::to_string(teacher_logits.size()) + " teachers");
  }
  const Shape shape = student_logits.value().shape();
  if (teacher_logits.front().shape() != shape || weights.samples() != shape.rows) {
    throw DimensionError("loss_kd: student logits " + to_string(shape) + " vs teacher logits " +
                         to_string(teacher_logits.front().shape()) + " and " +
                         std::to_string(weights.samples()) + " weight rows");
  }

  // Aggregate the weighted targets first; weights never depend on the student.
  Tensor target(shape.rows, shape.cols);
  for (std::size_t k = 0; k < teacher_logits.size(); ++k) {
    const Tensor t = cfg.kd_target_form == KdTargetForm::Softened
                         ? softmax_t(teacher_logits[k], cfg.tau)
                         : teacher_logits[k];
    for (std::size_t i = 0; i < shape.rows; ++i) {
      const double w = weights(i, k);
      auto tr = target.row(i);
      const auto src = t.row(i);
      for (std::size_t c = 0; c < shape.cols; ++c) tr[c] += w * src[c];
    }
  }

  Graph& g = *student_logits.graph();
  const Var log_p = ad::log(ad::softmax_t(student_logits, cfg.tau));
  const Var per_sample = ad::row_sum(ad::mul(g.constant(std::move(target)), log_p));
  const double factor = cfg.tau_square_scaling ? cfg.tau * cfg.tau : 1.0;
  return ad::scale(ad::mean(per_sample), -factor);
}

Var loss_inter(Var weights, std::span<const Tensor> teacher_features,
               std::span<const Var> adapted_student) {
  const std::size_t teachers = teacher_features.size();
  if (teachers == 0 || adapted_student.size() != teachers ||
      weights.value().cols() != teachers) {
    throw DimensionError("loss_inter: " + std::to_string(weights.value().cols()) +
                         " weight columns, " + std::to_string(teachers) + " teacher features, " +
                         std::to_string(adapted_student.size()) + " adapted student features");
  }
  Graph& g = *weights.graph();
  Var acc;
  for (std::size_t k = 0; k < teachers; ++k) {
    const Var dist = ad::l2_sq(g.constant(teacher_features[k]), adapted_student[k]);
    const Var term = ad::mul(ad::column(weights, k), dist);
    acc = k == 0 ? term : ad::add(acc, term);
  }
  return ad::mean(acc);
}

Var loss_fitnet_inter(std::span<const Tensor> teacher_features, Var adapted_student) {
  if (teacher_features.empty()) throw DimensionError("loss_fitnet_inter: no teachers");
  Tensor avg(teacher_features.front().rows(), teacher_features.front().cols());
  for (const Tensor& f : teacher_features) {
    if (f.shape() != avg.shape()) {
      throw DimensionError("FITNET_MKD requires teachers with equal feature width");
    }
    avg = add(avg, f);
  }
  avg = scale(avg, 1.0 / static_cast<double>(teacher_features.size()));
  Graph& g = *adapted_student.graph();
  return ad::mean(ad::l2_sq(g.constant(std::move(avg)), adapted_student));
}

std::vector<int> majority_vote(std::span<const Tensor> teacher_logits) {
  require_teacher_shapes(teacher_logits, "majority_vote");
  const std::size_t batch = teacher_logits.front().rows();
  const std::size_t classes = teacher_logits.front().cols();
  std::vector<std::vector<int>> predictions;
  std::vector<Tensor> probs;
  for (const Tensor& z : teacher_logits) {
    predictions.push_back(argmax_rows(z));
    probs.push_back(softmax_t(z, 1.0));
  }

  std::vector<int> out(batch, 0);
  std::vector<std::size_t> votes(classes);
  for (std::size_t i = 0; i < batch; ++i) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& pred : predictions) ++votes[static_cast<std::size_t>(pred[i])];
    const std::size_t top = *std::max_element(votes.begin(), votes.end());
    int best = -1;
    double best_mass = -1.0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (votes[c] != top) continue;
      double mass = 0.0;
      for (const Tensor& p : probs) mass += p(i, c);
      if (mass > best_mass) {
        best = static_cast<int>(c);
        best_mass = mass;
      }
    }
    out[i] = best;
  }
  return out;
}

double ensemble_majority_vote(std::span<const Tensor> teacher_logits,
                              std::span<const int> labels) {
  const std::vector<int> votes = majority_vote(teacher_logits);
  check_labels(labels, votes.size(), teacher_logits.front().cols(), "ensemble_majority_vote");
  if (votes.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < votes.size(); ++i) hits += votes[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(votes.size());
}

TeacherBatch evaluate_teachers(std::span<const BlockNet> teachers, const Tensor& x) {
  TeacherBatch out;
  for (const BlockNet& t : teachers) {
    ForwardOutputs f = forward_full(t, x);
    out.logits.push_back(std::move(f.logits));
    out.features.push_back(std::move(f.features));
    out.classifiers.push_back(&t.classifier);
  }
  return out;
}

std::vector<Tensor*> Student::parameters() {
  std::vector<Tensor*> out = net.parameters();
  for (Adapter& a : adapters) out.push_back(&a.projection);
  return out;
}

std::vector<const Tensor*> Student::parameters() const {
  std::vector<const Tensor*> out = net.parameters();
  for (const Adapter& a : adapters) out.push_back(&a.projection);
  return out;
}

Student make_student(std::span<const std::size_t> layer_widths, std::size_t classes,
                     std::span<const std::size_t> teacher_feature_widths, std::uint64_t seed) {
  Student s;
  s.net = init_net(layer_widths, classes, derive_seed(seed, 1));
  for (std::size_t k = 0; k < teacher_feature_widths.size(); ++k) {
    s.adapters.push_back(
        init_adapter(s.net.feature_width(), teacher_feature_widths[k], derive_seed(seed, 100)));
  }
  return s;
}

ObjectiveVars build_objective(Graph& g, const ForwardVars& student,
                              std::span<const Var> adapter_params, const TeacherBatch& teachers,
                              std::span<const int> labels, const DistillConfig& cfg,
                              const WeightOverride* override_weights) {
  cfg.validate();
  const std::size_t K = teachers.size();
  if (K != cfg.teachers) {
    throw ConfigError("configured for " + std::to_string(cfg.teachers) + " teachers but got " +
                      std::to_string(K));
  }
  const std::size_t batch = student.logits.value().rows();
  check_labels(labels, batch, student.logits.value().cols(), "build_objective");

  ObjectiveVars out;
  out.ce = ad::mean(ad::cross_entropy(ad::softmax_t(student.logits, 1.0), labels));
  out.conf_losses = teacher_conf_losses(teachers.logits, labels, cfg.tau_conf);

  switch (cfg.strategy) {
    case Strategy::CaMkd: out.w_kd = kd_weights(out.conf_losses); break;
    case Strategy::Ebkd: out.w_kd = entropy_weights(teachers.logits, cfg.tau); break;
    case Strategy::Aver:
    case Strategy::FitnetMkd: out.w_kd = avg_weights(K, batch); break;
  }
  if (override_weights && override_weights->kd) out.w_kd = WeightMatrix(*override_weights->kd);
  out.kd = loss_kd(out.w_kd, teachers.logits, student.logits, cfg);

  if (cfg.strategy == Strategy::FitnetMkd) {
    if (adapter_params.empty()) throw DimensionError("FITNET_MKD needs an adapter");
    out.w_inter = avg_weights(K, batch);
    out.inter = loss_fitnet_inter(teachers.features, adapt(adapter_params[0], student.features));
  } else {
    if (adapter_params.size() != K) {
      throw DimensionError("build_objective: " + std::to_string(adapter_params.size()) +
                           " adapters for " + std::to_string(K) + " teachers");
    }
    std::vector<Var> adapted;
    for (std::size_t k = 0; k < K; ++k) adapted.push_back(adapt(adapter_params[k], student.features));

    Var w_inter;
    const bool own_inter = cfg.strategy == Strategy::CaMkd &&
                           cfg.inter_weight_source == InterWeightSource::Inter &&
                           !(override_weights && override_weights->inter);
    if (own_inter && !cfg.detach_weights) {
      std::vector<Var> losses;
      for (std::size_t k = 0; k < K; ++k) {
        const Var z = project_student_feature(adapt(adapter_params[k], student.pooled),
                                              *teachers.classifiers[k]);
        losses.push_back(ad::cross_entropy(ad::softmax_t(z, cfg.tau_conf), labels));
      }
      w_inter = confidence_weights(ad::concat_cols(losses));
      out.w_inter = WeightMatrix(w_inter.value());
    } else {
      if (own_inter) {
        std::vector<Tensor> projected;
        for (std::size_t k = 0; k < K; ++k) {
          projected.push_back(project_student_feature(
              adapt(Adapter{adapter_params[k].value()}, student.pooled.value()),
              *teachers.classifiers[k]));
        }
        out.w_inter = inter_weights(teacher_conf_losses(projected, labels, cfg.tau_conf));
      } else if (override_weights && override_weights->inter) {
        out.w_inter = WeightMatrix(*override_weights->inter);
      } else if (cfg.strategy == Strategy::Aver) {
        out.w_inter = avg_weights(K, batch);
      } else {
        out.w_inter = out.w_kd;
      }
      w_inter = g.constant(out.w_inter.tensor());
    }
    out.inter = loss_inter(w_inter, teachers.features, adapted);
  }

  out.total = ad::add(ad::add(out.ce, ad::scale(out.kd, cfg.alpha)), ad::scale(out.inter, cfg.beta));
  return out;
}

LossEvaluation total_loss(const Student& student, const TeacherBatch& teachers, const Tensor& x,
                          std::span<const int> labels, const DistillConfig& cfg,
                          bool with_gradients, const WeightOverride* override_weights) {
  Graph g;
  const BoundNet bound = bind(g, student.net);
  std::vector<Var> adapter_params;
  for (const Adapter& a : student.adapters) adapter_params.push_back(g.parameter(a.projection));
  const ForwardVars fv = forward_full(bound, g.constant(x));
  ObjectiveVars obj = build_objective(g, fv, adapter_params, teachers, labels, cfg, override_weights);

  LossEvaluation out;
  out.diagnostics.total = obj.total.value().item();
  out.diagnostics.ce = obj.ce.value().item();
  out.diagnostics.kd = obj.kd.value().item();
  out.diagnostics.inter = obj.inter.value().item();
  out.diagnostics.teacher_conf_losses = std::move(obj.conf_losses);
  out.diagnostics.w_kd = std::move(obj.w_kd);
  out.diagnostics.w_inter = std::move(obj.w_inter);
  if (with_gradients) {
    g.backward(obj.total);
    for (const Var& p : bound.params) out.gradients.push_back(p.grad());
    for (const Var& p : adapter_params) out.gradients.push_back(p.grad());
  }
  return out;
}

LossEvaluation total_loss(const Student& student, std::span<const BlockNet> teachers,
                          const Tensor& x, std::span<const int> labels, const DistillConfig& cfg,
                          bool with_gradients, const WeightOverride* override_weights) {
  return total_loss(student, evaluate_teachers(teachers, x), x, labels, cfg, with_gradients,
                    override_weights);
}

}  // namespace camkd
