#include "camkd/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "camkd/errors.hpp"
#include "camkd/rng.hpp"

namespace camkd {

namespace {

enum Stream : std::uint64_t { kInit = 1, kNoise = 2, kShuffle = 3 };

/// Frozen teacher outputs on a whole split, gathered per batch.
struct TeacherCache {
  std::vector<Tensor> logits;
  std::vector<Tensor> features;
  std::vector<const Linear*> classifiers;

  TeacherCache(std::span<const BlockNet> teachers, const Dataset& data) {
    TeacherBatch all = evaluate_teachers(teachers, data.inputs);
    logits = std::move(all.logits);
    features = std::move(all.features);
    classifiers = std::move(all.classifiers);
  }

  TeacherBatch batch(std::span<const std::size_t> idx) const {
    TeacherBatch out;
    for (std::size_t k = 0; k < logits.size(); ++k) {
      out.logits.push_back(gather_rows(logits[k], idx));
      out.features.push_back(gather_rows(features[k], idx));
    }
    out.classifiers = classifiers;
    return out;
  }
};

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

/// Loss diagnostics of the student over a whole split, without gradients.
LossDiagnostics split_losses(const Student& student, const TeacherCache& cache, const Dataset& data,
                             const DistillConfig& cfg, std::size_t batch_size) {
  LossDiagnostics sum;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, data.size() - start);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), start);
    const Dataset b = data.subset(idx);
    const LossDiagnostics d = total_loss(student, cache.batch(idx), b.inputs, b.labels, cfg).diagnostics;
    const double w = static_cast<double>(n);
    sum.total += w * d.total;
    sum.ce += w * d.ce;
    sum.kd += w * d.kd;
    sum.inter += w * d.inter;
  }
  const double inv = 1.0 / static_cast<double>(data.size());
  sum.total *= inv;
  sum.ce *= inv;
  sum.kd *= inv;
  sum.inter *= inv;
  return sum;
}

}  // namespace

Schedule Schedule::full_scale() { return Schedule{0.1, {150, 180, 210}, 0.1, 240}; }

void Schedule::validate() const {
  if (epochs == 0) throw ConfigError("schedule: epochs must be positive");
  if (!(base_lr > 0.0)) throw ConfigError("schedule: base learning rate must be positive");
  if (!(decay > 0.0)) throw ConfigError("schedule: decay must be positive");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] == 0 || milestones[i] > epochs) {
      throw ConfigError("schedule: milestone " + std::to_string(milestones[i]) +
                        " outside 1.." + std::to_string(epochs));
    }
    if (i > 0 && milestones[i] <= milestones[i - 1]) {
      throw ConfigError("schedule: milestones must be strictly increasing");
    }
  }
}

double Schedule::lr_at(std::size_t epoch) const {
  double lr = base_lr;
  for (const std::size_t m : milestones) {
    if (epoch > m) lr *= decay;
  }
  return lr;
}

SgdState make_sgd_state(std::span<const Tensor* const> params, double momentum,
                        double weight_decay, double lr) {
  SgdState s;
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  s.lr = lr;
  for (const Tensor* p : params) s.velocity.emplace_back(p->rows(), p->cols());
  return s;
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, SgdState& state) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw DimensionError("sgd_step: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " +
                         std::to_string(state.velocity.size()) + " momentum buffers");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& theta = *params[p];
    Tensor& v = state.velocity[p];
    const Tensor& g = grads[p];
    if (theta.shape() != g.shape() || theta.shape() != v.shape()) {
      throw DimensionError("sgd_step: parameter " + to_string(theta.shape()) + ", gradient " +
                           to_string(g.shape()) + ", buffer " + to_string(v.shape()));
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = state.momentum * v[i] + g[i] + state.weight_decay * theta[i];
      theta[i] -= state.lr * v[i];
    }
  }
}

void TrainSettings::validate() const {
  schedule.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
}

double evaluate(const BlockNet& net, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const std::vector<int> pred = argmax_rows(forward_full(net, data.inputs).logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TeacherResult train_teacher(const Split& data, std::span<const std::size_t> layer_widths,
                            double noise_fraction, std::uint64_t seed,
                            const TrainSettings& settings) {
  if (!(noise_fraction >= 0.0 && noise_fraction < 1.0)) {
    throw ParameterError("train_teacher: noise fraction must lie in [0, 1)");
  }
  settings.validate();
  const Dataset train = corrupt_labels(data.train, noise_fraction, derive_seed(seed, kNoise));
  BlockNet net = init_net(layer_widths, train.classes, derive_seed(seed, kInit));
  const std::vector<Tensor*> params = net.parameters();
  SgdState sgd = make_sgd_state(std::vector<const Tensor*>(params.begin(), params.end()),
                                settings.momentum, settings.weight_decay, settings.schedule.base_lr);
  Rng shuffle_rng(derive_seed(seed, kShuffle));
  std::vector<std::size_t> order = iota_indices(train.size());

  for (std::size_t epoch = 1; epoch <= settings.schedule.epochs; ++epoch) {
    sgd.lr = settings.schedule.lr_at(epoch);
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += settings.batch_size) {
      const std::size_t n = std::min(settings.batch_size, order.size() - start);
      const Dataset b = train.subset(std::span<const std::size_t>(order).subspan(start, n));
      Graph g;
      const BoundNet bound = bind(g, net);
      const ForwardVars fv = forward_full(bound, g.constant(b.inputs));
      const Var loss = ad::mean(ad::cross_entropy(ad::softmax_t(fv.logits, 1.0), b.labels));
      g.backward(loss);
      std::vector<Tensor> grads;
      for (const Var& p : bound.params) grads.push_back(p.grad());
      sgd_step(params, grads, sgd);
    }
  }
  const double accuracy = evaluate(net, data.test);
  return TeacherResult{std::move(net), accuracy};
}

double RunLog::final_test_accuracy() const {
  for (auto it = epochs.rbegin(); it != epochs.rend(); ++it) {
    if (it->split == "test") return it->accuracy;
  }
  return 0.0;
}

std::vector<WeightTraceRow> weight_trace(const Student& student, std::span<const BlockNet> teachers,
                                         const Dataset& probe, const DistillConfig& cfg) {
  const LossDiagnostics d = total_loss(student, teachers, probe.inputs, probe.labels, cfg).diagnostics;
  std::vector<WeightTraceRow> rows;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (std::size_t k = 0; k < teachers.size(); ++k) {
      rows.push_back(WeightTraceRow{i, k, d.w_kd(i, k), d.w_inter(i, k), d.teacher_conf_losses(i, k)});
    }
  }
  return rows;
}

DistillResult distill_student(const Split& data, std::span<const BlockNet> teachers,
                              std::span<const std::size_t> student_widths,
                              const DistillConfig& cfg, const TrainSettings& settings,
                              std::uint64_t seed, std::size_t probe_size) {
  if (teachers.empty()) throw ConfigError("distill_student: at least one teacher is required");
  DistillConfig run_cfg = cfg;
  run_cfg.teachers = teachers.size();
  run_cfg.validate();
  settings.validate();

  std::vector<std::size_t> teacher_widths;
  for (const BlockNet& t : teachers) teacher_widths.push_back(t.feature_width());
  DistillResult result;
  result.student = make_student(student_widths, data.train.classes, teacher_widths,
                                derive_seed(seed, kInit));
  Student& student = result.student;

  const TeacherCache train_cache(teachers, data.train);
  const TeacherCache test_cache(teachers, data.test);
  const std::vector<Tensor*> params = student.parameters();
  SgdState sgd = make_sgd_state(std::vector<const Tensor*>(params.begin(), params.end()),
                                settings.momentum, settings.weight_decay, settings.schedule.base_lr);
  Rng shuffle_rng(derive_seed(seed, kShuffle));
  std::vector<std::size_t> order = iota_indices(data.train.size());

  for (std::size_t epoch = 1; epoch <= settings.schedule.epochs; ++epoch) {
    sgd.lr = settings.schedule.lr_at(epoch);
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    EpochRecord train_rec{epoch, "train", 0.0, 0.0, 0.0, 0.0, 0.0, sgd.lr};
    for (std::size_t start = 0; start < order.size(); start += settings.batch_size) {
      const std::size_t n = std::min(settings.batch_size, order.size() - start);
      const auto idx = std::span<const std::size_t>(order).subspan(start, n);
      const Dataset b = data.train.subset(idx);
      const LossEvaluation eval =
          total_loss(student, train_cache.batch(idx), b.inputs, b.labels, run_cfg, true);
      sgd_step(params, eval.gradients, sgd);
      const double w = static_cast<double>(n);
      train_rec.loss_total += w * eval.diagnostics.total;
      train_rec.loss_ce += w * eval.diagnostics.ce;
      train_rec.loss_kd += w * eval.diagnostics.kd;
      train_rec.loss_inter += w * eval.diagnostics.inter;
    }
    const double inv = 1.0 / static_cast<double>(order.size());
    train_rec.loss_total *= inv;
    train_rec.loss_ce *= inv;
    train_rec.loss_kd *= inv;
    train_rec.loss_inter *= inv;
    train_rec.accuracy = evaluate(student.net, data.train);

    const LossDiagnostics test_losses =
        split_losses(student, test_cache, data.test, run_cfg, settings.batch_size);
    EpochRecord test_rec{epoch,           "test",         evaluate(student.net, data.test),
                         test_losses.total, test_losses.ce, test_losses.kd,
                         test_losses.inter, sgd.lr};
    result.log.epochs.push_back(train_rec);
    result.log.epochs.push_back(test_rec);
  }

  result.log.weights = weight_trace(student, teachers, data.test.head(probe_size), run_cfg);
  return result;
}

}  // namespace camkd
