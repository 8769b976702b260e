#include "properties.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "camkd/distill.hpp"
#include "camkd/rng.hpp"
#include "oracles.hpp"

namespace camkd::testing {

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.uniform_int(hi - lo + 1));
}

double between(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

// Returns an empty string when every row is on the simplex with entries in
// [0, 1/(K-1)].
std::string simplex_violation(const WeightMatrix& w, const char* family) {
  const double cap = 1.0 / static_cast<double>(w.teachers() - 1);
  for (std::size_t i = 0; i < w.samples(); ++i) {
    double sum = 0.0;
    for (const double v : w.sample(i)) {
      if (!(v >= 0.0 && v <= cap)) return fmt::format("{} entry {} outside [0, {}]", family, v, cap);
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) return fmt::format("{} row sums to {}", family, sum);
  }
  return {};
}

struct Micro {
  std::vector<BlockNet> teachers;
  Student student;
  Tensor x;
  std::vector<int> labels;
};

Micro make_micro(Rng& rng, std::size_t teachers, bool equal_widths) {
  Micro m;
  const std::size_t d = pick(rng, 2, 8), classes = pick(rng, 2, 8), batch = pick(rng, 1, 8);
  const std::size_t shared_width = pick(rng, 2, 8);
  std::vector<std::size_t> feature_widths;
  for (std::size_t k = 0; k < teachers; ++k) {
    const std::size_t w = equal_widths ? shared_width : pick(rng, 2, 8);
    m.teachers.push_back(init_net(std::vector<std::size_t>{d, w}, classes, rng.next_u64()));
    for (Tensor* p : m.teachers.back().parameters()) {
      for (double& v : p->values()) v += between(rng, -0.5, 0.5);
    }
    feature_widths.push_back(w);
  }
  m.student = make_student(std::vector<std::size_t>{d, pick(rng, 2, 8)}, classes, feature_widths,
                           rng.next_u64());
  for (Tensor* p : m.student.parameters()) {
    for (double& v : p->values()) v += between(rng, -0.3, 0.3);
  }
  m.x = random_tensor(rng, batch, d);
  m.labels = random_labels(rng, batch, classes);
  return m;
}

}  // namespace

CheckResult check_weight_simplex(std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  CheckResult r;
  const double scales[] = {0.1, 1.0, 5.0, 30.0};
  for (std::size_t c = 0; c < cases; ++c) {
    ++r.cases;
    const std::size_t K = pick(rng, 2, 8), C = pick(rng, 2, 16), B = pick(rng, 1, 32);
    const double s = scales[rng.uniform_int(4)];
    const bool degenerate = c % 10 == 9;
    std::vector<Tensor> logits;
    for (std::size_t k = 0; k < K; ++k) {
      if (degenerate) {
        Tensor z(B, C, 0.0);
        for (std::size_t i = 0; i < B; ++i) z(i, rng.uniform_int(C)) = 1e4;
        logits.push_back(std::move(z));
      } else {
        logits.push_back(random_tensor(rng, B, C, -s, s));
      }
    }
    const std::vector<int> labels = random_labels(rng, B, C);

    const std::size_t f = pick(rng, 1, 8);
    const Tensor h = random_tensor(rng, B, f, -s, s);
    std::vector<Tensor> projected;
    for (std::size_t k = 0; k < K; ++k) {
      const Linear cls{random_tensor(rng, f, C), random_tensor(rng, 1, C)};
      projected.push_back(project_student_feature(h, cls));
    }

    const WeightMatrix kd = kd_weights(teacher_conf_losses(logits, labels, 1.0));
    const WeightMatrix inter = inter_weights(teacher_conf_losses(projected, labels, 1.0));
    const WeightMatrix ent = entropy_weights(logits, 4.0);
    std::string why = simplex_violation(kd, "kd_weights");
    if (why.empty()) why = simplex_violation(inter, "inter_weights");
    if (why.empty()) why = simplex_violation(ent, "entropy_weights");
    if (why.empty() && degenerate) {
      for (const double v : ent.tensor().values()) {
        if (v != 1.0 / static_cast<double>(K)) {
          why = fmt::format("degenerate entropy weights not uniform: {}", v);
          break;
        }
      }
    }
    if (!why.empty()) r.fail(fmt::format("case {} (K={}, C={}, B={}): {}", c, K, C, B, why));
  }
  return r;
}

CheckResult check_weight_oracle(std::size_t cases, std::uint64_t seed, double tolerance) {
  Rng rng(seed);
  CheckResult r;
  for (std::size_t c = 0; c < cases; ++c) {
    ++r.cases;
    const std::size_t K = pick(rng, 2, 8);
    const double spread = c % 2 == 0 ? 5.0 : 30.0;
    std::vector<double> losses(K);
    for (double& l : losses) l = between(rng, 0.0, spread);
    const WeightMatrix w = kd_weights(Tensor(1, K, losses));
    const std::vector<double> want = weights_oracle(losses);
    for (std::size_t k = 0; k < K; ++k) {
      const double err = std::abs(w(0, k) - want[k]);
      r.worst = std::max(r.worst, err);
      if (!(err <= tolerance)) {
        r.fail(fmt::format("case {}: weight {} is {} but oracle gives {}", c, k, w(0, k), want[k]));
        break;
      }
    }
  }
  return r;
}

CheckResult check_objective_gradients(std::size_t instances, std::uint64_t seed,
                                      double tolerance) {
  Rng rng(seed);
  CheckResult r;
  const Strategy strategies[] = {Strategy::CaMkd, Strategy::Aver, Strategy::Ebkd,
                                 Strategy::FitnetMkd};
  for (std::size_t i = 0; i < instances; ++i) {
    ++r.cases;
    DistillConfig cfg;
    cfg.strategy = strategies[i % 4];
    cfg.kd_target_form = (i / 4) % 2 == 0 ? KdTargetForm::Softened : KdTargetForm::LiteralLogits;
    cfg.detach_weights = (i / 8) % 2 == 0;
    cfg.inter_weight_source = (i / 16) % 2 == 0 ? InterWeightSource::Inter : InterWeightSource::Kd;
    cfg.tau_square_scaling = rng.uniform() < 0.5;
    cfg.tau = between(rng, 1.0, 5.0);
    cfg.tau_conf = between(rng, 0.5, 2.0);
    cfg.alpha = between(rng, 0.5, 2.0);
    cfg.beta = between(rng, 0.1, 2.0);
    cfg.teachers = 2 + i % 2;

    Micro m = make_micro(rng, cfg.teachers, cfg.strategy == Strategy::FitnetMkd);
    const LossEvaluation eval = total_loss(m.student, m.teachers, m.x, m.labels, cfg, true);

    WeightOverride frozen;
    const bool weights_follow_student = cfg.strategy == Strategy::CaMkd &&
                                        cfg.inter_weight_source == InterWeightSource::Inter;
    if (weights_follow_student && cfg.detach_weights) {
      frozen.kd = eval.diagnostics.w_kd.tensor();
      frozen.inter = eval.diagnostics.w_inter.tensor();
    }
    const auto numeric = finite_differences(m.student.parameters(), [&] {
      return total_loss(m.student, m.teachers, m.x, m.labels, cfg, false, &frozen).diagnostics.total;
    });
    const double err = relative_error(eval.gradients, numeric);
    r.worst = std::max(r.worst, err);
    if (!(err < tolerance)) {
      r.fail(fmt::format("instance {} ({}, {}, detach={}, source={}, K={}): relative error {:.3g}", i,
                         to_string(cfg.strategy), to_string(cfg.kd_target_form),
                         cfg.detach_weights, to_string(cfg.inter_weight_source), cfg.teachers, err));
    }
  }
  return r;
}

CheckResult check_ordering(std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  CheckResult r;
  for (std::size_t c = 0; c < cases; ++c) {
    ++r.cases;
    const std::size_t K = pick(rng, 2, 8), C = pick(rng, 2, 16);
    const int label = static_cast<int>(rng.uniform_int(C));
    const std::vector<int> labels{label};
    std::string why;

    // Strictly smaller loss, strictly larger weight.
    std::vector<double> losses(K);
    for (double& l : losses) l = between(rng, 0.0, 10.0);
    const WeightMatrix w = kd_weights(Tensor(1, K, losses));
    for (std::size_t a = 0; a < K && why.empty(); ++a) {
      for (std::size_t b = 0; b < K; ++b) {
        if (losses[a] < losses[b] && !(w(0, a) > w(0, b))) {
          why = fmt::format("loss {} < {} but weight {} <= {}", losses[a], losses[b], w(0, a), w(0, b));
          break;
        }
      }
    }

    // Raising the true-label logit never lowers that teacher's weight, and a
    // constant shift of one teacher's logits changes nothing.
    std::vector<Tensor> logits;
    for (std::size_t k = 0; k < K; ++k) logits.push_back(random_tensor(rng, 1, C, -4.0, 4.0));
    const WeightMatrix before = kd_weights(teacher_conf_losses(logits, labels, 1.0));
    const std::size_t j = rng.uniform_int(K);
    std::vector<Tensor> raised = logits;
    raised[j](0, label) += between(rng, 1e-3, 3.0);
    const WeightMatrix after = kd_weights(teacher_conf_losses(raised, labels, 1.0));
    if (why.empty() && after(0, j) < before(0, j)) {
      why = fmt::format("raising the label logit lowered the weight {} -> {}", before(0, j), after(0, j));
    }
    std::vector<Tensor> shifted = logits;
    const double offset = between(rng, -50.0, 50.0);
    for (double& v : shifted[j].values()) v += offset;
    const WeightMatrix moved = kd_weights(teacher_conf_losses(shifted, labels, 1.0));
    for (std::size_t k = 0; k < K && why.empty(); ++k) {
      if (std::abs(moved(0, k) - before(0, k)) > 1e-10) {
        why = fmt::format("shift by {} changed weight {} by {}", offset, k, moved(0, k) - before(0, k));
      }
    }

    // Same logit multiset for every teacher; only `wrong` misplaces its argmax.
    std::vector<double> v(C);
    for (double& x : v) x = between(rng, -3.0, 3.0);
    const std::size_t top = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    v[top] += 0.01;
    std::swap(v[top], v[static_cast<std::size_t>(label)]);
    std::size_t other = rng.uniform_int(C - 1);
    if (other >= static_cast<std::size_t>(label)) ++other;
    std::vector<double> miss = v;
    std::swap(miss[static_cast<std::size_t>(label)], miss[other]);
    const std::size_t wrong = rng.uniform_int(K);
    std::vector<Tensor> agree;
    for (std::size_t k = 0; k < K; ++k) agree.push_back(Tensor(1, C, k == wrong ? miss : v));
    const WeightMatrix wa = kd_weights(teacher_conf_losses(agree, labels, 1.0));
    for (std::size_t k = 0; k < K && why.empty(); ++k) {
      if (k != wrong && !(wa(0, wrong) < wa(0, k))) {
        why = fmt::format("misled teacher weight {} not below {}", wa(0, wrong), wa(0, k));
      }
    }

    if (!why.empty()) r.fail(fmt::format("case {} (K={}, C={}): {}", c, K, C, why));
  }
  return r;
}

CheckResult check_masking(std::size_t cases, std::uint64_t seed, double tolerance) {
  Rng rng(seed);
  CheckResult r;
  for (std::size_t c = 0; c < cases; ++c) {
    ++r.cases;
    DistillConfig cfg;
    cfg.teachers = pick(rng, 2, 4);
    cfg.kd_target_form = c % 2 == 0 ? KdTargetForm::Softened : KdTargetForm::LiteralLogits;
    cfg.beta = between(rng, 0.1, 2.0);
    Micro m = make_micro(rng, cfg.teachers, false);
    const TeacherBatch base = evaluate_teachers(m.teachers, m.x);
    const std::size_t B = m.x.rows(), masked = rng.uniform_int(cfg.teachers);

    WeightOverride w;
    for (auto* slot : {&w.kd, &w.inter}) {
      Tensor t(B, cfg.teachers);
      for (std::size_t i = 0; i < B; ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < cfg.teachers; ++k) {
          t(i, k) = k == masked ? 0.0 : between(rng, 0.1, 1.0);
          sum += t(i, k);
        }
        for (std::size_t k = 0; k < cfg.teachers; ++k) t(i, k) /= sum;
      }
      *slot = t;
    }

    TeacherBatch perturbed = base;
    for (double& v : perturbed.logits[masked].values()) v += between(rng, -5.0, 5.0);
    for (double& v : perturbed.features[masked].values()) v += between(rng, -5.0, 5.0);

    const LossEvaluation a = total_loss(m.student, base, m.x, m.labels, cfg, true, &w);
    const LossEvaluation b = total_loss(m.student, perturbed, m.x, m.labels, cfg, true, &w);
    double diff = std::abs(a.diagnostics.total - b.diagnostics.total);
    for (std::size_t p = 0; p < a.gradients.size(); ++p) {
      for (std::size_t i = 0; i < a.gradients[p].size(); ++i) {
        diff = std::max(diff, std::abs(a.gradients[p][i] - b.gradients[p][i]));
      }
    }
    r.worst = std::max(r.worst, diff);
    if (!(diff < tolerance)) r.fail(fmt::format("case {}: masked teacher changed the objective by {}", c, diff));
  }
  return r;
}

CheckResult check_reduction(std::size_t cases, std::uint64_t seed, double tolerance) {
  Rng rng(seed);
  CheckResult r;
  for (std::size_t c = 0; c < cases; ++c) {
    ++r.cases;
    const std::size_t K = pick(rng, 2, 4);
    Micro m = make_micro(rng, 1, true);
    const std::vector<BlockNet> teachers(K, m.teachers.front());
    const std::vector<std::size_t> widths(K, m.teachers.front().feature_width());
    const Student student = make_student(m.student.net.layer_widths(), m.student.net.classes(),
                                         widths, rng.next_u64());
    DistillConfig cfg;
    cfg.teachers = K;
    cfg.kd_target_form = c % 2 == 0 ? KdTargetForm::Softened : KdTargetForm::LiteralLogits;
    cfg.beta = between(rng, 0.1, 2.0);
    cfg.detach_weights = c % 4 < 2;

    std::string why;
    double reference = 0.0;
    for (const Strategy s : {Strategy::Aver, Strategy::CaMkd, Strategy::Ebkd, Strategy::FitnetMkd}) {
      cfg.strategy = s;
      const LossDiagnostics d = total_loss(student, teachers, m.x, m.labels, cfg).diagnostics;
      for (const WeightMatrix* w : {&d.w_kd, &d.w_inter}) {
        for (const double v : w->tensor().values()) {
          if (std::abs(v - 1.0 / static_cast<double>(K)) > tolerance && why.empty()) {
            why = fmt::format("{} weight {} is not uniform", to_string(s), v);
          }
        }
      }
      if (s == Strategy::Aver) reference = d.total;
      const double gap = std::abs(d.total - reference);
      r.worst = std::max(r.worst, gap / std::max(1.0, std::abs(reference)));
      if (gap > tolerance * std::max(1.0, std::abs(reference)) && why.empty()) {
        why = fmt::format("{} total {} differs from AVER total {}", to_string(s), d.total, reference);
      }
    }
    if (!why.empty()) r.fail(fmt::format("case {} (K={}): {}", c, K, why));
  }
  return r;
}

CheckResult check_inter_discriminability(std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  CheckResult r;
  for (std::size_t c = 0; c < cases; ++c) {
    ++r.cases;
    const std::size_t K = pick(rng, 2, 4), C = pick(rng, 2, 10), f = pick(rng, 2, 8);
    const int label = static_cast<int>(rng.uniform_int(C));
    const std::vector<int> labels{label};
    const Tensor h = random_tensor(rng, 1, f);
    double norm = 0.0;
    for (const double v : h.values()) norm += v * v;
    norm = std::sqrt(norm);

    // Teacher 0's classifier gets an extra push of the student feature towards
    // the label column, making it the more discriminative one by construction.
    std::vector<Tensor> projected;
    for (std::size_t k = 0; k < K; ++k) {
      Linear cls{random_tensor(rng, f, C), random_tensor(rng, 1, C, -0.5, 0.5)};
      if (k == 0) {
        const double gain = between(rng, 0.5, 3.0);
        for (std::size_t i = 0; i < f; ++i) cls.weight(i, label) += gain * h[i] / norm;
      }
      projected.push_back(project_student_feature(h, cls));
    }
    const Tensor ce = teacher_conf_losses(projected, labels, 1.0);
    const WeightMatrix w = inter_weights(ce);
    std::string why;
    for (std::size_t a = 0; a < K && why.empty(); ++a) {
      for (std::size_t b = 0; b < K; ++b) {
        if (ce(0, a) < ce(0, b) && !(w(0, a) > w(0, b))) {
          why = fmt::format("classifier {} has lower cross-entropy ({} < {}) but weight {} <= {}", a,
                            ce(0, a), ce(0, b), w(0, a), w(0, b));
          break;
        }
      }
    }
    if (!why.empty()) r.fail(fmt::format("case {} (K={}): {}", c, K, why));
  }
  return r;
}

}  // namespace camkd::testing
