#include "camkd/commands.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "camkd/errors.hpp"

namespace camkd {

namespace {

namespace fs = std::filesystem;

fs::path begin_command(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  save_config(cfg, out / "resolved_config.json");
  return out;
}

std::vector<BlockNet> nets_of(const std::vector<TeacherResult>& teachers) {
  std::vector<BlockNet> nets;
  for (const TeacherResult& t : teachers) nets.push_back(t.net);
  return nets;
}

double run_accuracy(const ExperimentConfig& cfg, const Split& data,
                    std::span<const BlockNet> teachers, const DistillConfig& distill,
                    std::uint64_t seed) {
  const auto widths = cfg.student_layer_widths(data.train.input_width());
  return distill_student(data, teachers, widths, distill, cfg.train, seed, cfg.probe_size)
      .log.final_test_accuracy();
}

}  // namespace

Split prepare_data(const ExperimentConfig& cfg) {
  if (cfg.data_dir.empty()) return make_blobs(cfg.dataset);
  const fs::path dir(cfg.data_dir);
  Split s{load_csv(dir / "train.csv", cfg.dataset.classes), load_csv(dir / "test.csv", cfg.dataset.classes)};
  const std::size_t classes = std::max(s.train.classes, s.test.classes);
  s.train.classes = s.test.classes = classes;
  if (s.train.input_width() != s.test.input_width()) {
    throw ParseError("train.csv and test.csv have different input widths");
  }
  return s;
}

std::vector<TeacherResult> prepare_teachers(const ExperimentConfig& cfg, const Split& data) {
  std::vector<TeacherResult> out;
  const auto widths = cfg.teacher_layer_widths(data.train.input_width());
  for (std::size_t k = 0; k < cfg.teacher_count(); ++k) {
    if (cfg.teacher_dir.empty()) {
      out.push_back(train_teacher(data, widths, cfg.teacher_noise[k], cfg.teacher_seeds[k], cfg.train));
    } else {
      BlockNet net = load_checkpoint(fs::path(cfg.teacher_dir) / fmt::format("teacher_{}.json", k));
      if (net.input_width() != data.train.input_width() || net.classes() != data.train.classes) {
        throw ConfigError(fmt::format("teacher {} does not match the dataset shape", k));
      }
      const double acc = evaluate(net, data.test);
      out.push_back(TeacherResult{std::move(net), acc});
    }
  }
  return out;
}

Split cmd_gen_data(const ExperimentConfig& cfg) {
  const fs::path out = begin_command(cfg);
  Split data = prepare_data(cfg);
  save_csv(data.train, out / "train.csv");
  save_csv(data.test, out / "test.csv");
  return data;
}

std::vector<TeacherResult> cmd_train_teachers(const ExperimentConfig& cfg) {
  const fs::path out = begin_command(cfg);
  const Split data = prepare_data(cfg);
  std::vector<TeacherResult> teachers = prepare_teachers(cfg, data);
  std::ofstream table(out / "teachers.csv");
  table << "teacher_id,noise_fraction,seed,test_accuracy\n";
  std::vector<Tensor> logits;
  for (std::size_t k = 0; k < teachers.size(); ++k) {
    save_checkpoint(teachers[k].net, out / fmt::format("teacher_{}.json", k));
    table << fmt::format("{},{},{},{}\n", k, cfg.teacher_noise[k], cfg.teacher_seeds[k],
                         teachers[k].test_accuracy);
    logits.push_back(forward_full(teachers[k].net, data.test.inputs).logits);
  }
  table << fmt::format("ensemble,,,{}\n", ensemble_majority_vote(logits, data.test.labels));
  return teachers;
}

DistillResult cmd_distill(const ExperimentConfig& cfg) {
  const fs::path out = begin_command(cfg);
  const Split data = prepare_data(cfg);
  const std::vector<BlockNet> teachers = nets_of(prepare_teachers(cfg, data));
  DistillResult result =
      distill_student(data, teachers, cfg.student_layer_widths(data.train.input_width()),
                      cfg.distill, cfg.train, cfg.seed, cfg.probe_size);
  save_checkpoint(result.student.net, out / "student.json");
  save_adapters(result.student.adapters, out / "adapters.json");
  write_metrics_csv(result.log, out / "metrics.csv");
  write_weights_csv(result.log.weights, out / "weights.csv");
  return result;
}

std::vector<SummaryRow> cmd_compare(const ExperimentConfig& cfg) {
  const fs::path out = begin_command(cfg);
  for (Strategy s : {Strategy::CaMkd, Strategy::Ebkd}) {
    if (cfg.teacher_count() < 2) {
      throw ConfigError(fmt::format("compare includes {}, which needs >= 2 teachers", to_string(s)));
    }
  }
  const Split data = prepare_data(cfg);
  const std::vector<TeacherResult> teacher_results = prepare_teachers(cfg, data);
  const std::vector<BlockNet> teachers = nets_of(teacher_results);

  std::vector<SummaryRow> rows;
  std::vector<Tensor> logits;
  for (std::size_t k = 0; k < teachers.size(); ++k) {
    const double acc = teacher_results[k].test_accuracy;
    rows.push_back({fmt::format("TEACHER_{}", k), summarize(std::span<const double>(&acc, 1))});
    logits.push_back(forward_full(teachers[k], data.test.inputs).logits);
  }
  const double ensemble = ensemble_majority_vote(logits, data.test.labels);
  rows.push_back({"ENSEMBLE", summarize(std::span<const double>(&ensemble, 1))});

  std::ofstream runs(out / "compare_runs.csv");
  runs << "strategy,seed,test_accuracy\n";
  for (Strategy s : {Strategy::Aver, Strategy::FitnetMkd, Strategy::Ebkd, Strategy::CaMkd}) {
    DistillConfig d = cfg.distill;
    d.strategy = s;
    std::vector<double> accs;
    for (const std::uint64_t seed : cfg.seeds) {
      accs.push_back(run_accuracy(cfg, data, teachers, d, seed));
      runs << fmt::format("{},{},{}\n", to_string(s), seed, accs.back());
    }
    rows.push_back({std::string(to_string(s)), summarize(accs)});
  }
  write_summary_csv(rows, "method", out / "compare.csv");
  return rows;
}

std::vector<std::size_t> rank_teachers(std::span<const BlockNet> teachers, const Dataset& train) {
  std::vector<double> acc;
  for (const BlockNet& t : teachers) acc.push_back(evaluate(t, train));
  std::vector<std::size_t> order(teachers.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return acc[a] > acc[b]; });
  return order;
}

std::vector<SweepRow> cmd_sweep_teachers(const ExperimentConfig& cfg,
                                         std::span<const std::size_t> k_list) {
  ExperimentConfig resolved = cfg;
  resolved.k_list.assign(k_list.begin(), k_list.end());
  const fs::path out = begin_command(resolved);
  const Split data = prepare_data(cfg);
  const std::vector<BlockNet> all = nets_of(prepare_teachers(cfg, data));
  const std::vector<std::size_t> order = rank_teachers(all, data.train);

  std::vector<SweepRow> rows;
  for (const std::size_t k : k_list) {
    std::vector<BlockNet> chosen;
    for (std::size_t i = 0; i < k; ++i) chosen.push_back(all[order[i]]);
    DistillConfig d = cfg.distill;
    if (k == 1) d.strategy = Strategy::Aver;
    std::vector<double> accs;
    for (const std::uint64_t seed : cfg.seeds) accs.push_back(run_accuracy(cfg, data, chosen, d, seed));
    rows.push_back({k, std::string(to_string(d.strategy)), summarize(accs)});
  }

  std::ofstream csv(out / "sweep.csv");
  csv << "teachers,strategy,mean_accuracy,std_accuracy,runs\n";
  for (const SweepRow& r : rows) {
    csv << fmt::format("{},{},{},{},{}\n", r.teachers, r.strategy, r.summary.mean,
                       r.summary.stddev, r.summary.runs);
  }
  return rows;
}

std::vector<WeightTraceRow> cmd_export_weights(const fs::path& run_dir, const fs::path& out_dir) {
  ExperimentConfig cfg = load_config(run_dir / "resolved_config.json");
  cfg.validate();
  const Split data = prepare_data(cfg);
  const std::vector<BlockNet> teachers = nets_of(prepare_teachers(cfg, data));
  Student student{load_checkpoint(run_dir / "student.json"), load_adapters(run_dir / "adapters.json")};
  DistillConfig d = cfg.distill;
  d.teachers = teachers.size();
  const auto rows = weight_trace(student, teachers, data.test.head(cfg.probe_size), d);
  fs::create_directories(out_dir);
  write_weights_csv(rows, out_dir / "weights.csv");
  return rows;
}

DistillConfig ablation_variant(const DistillConfig& base, const std::string& name) {
  DistillConfig d = base;
  d.strategy = Strategy::CaMkd;
  d.inter_weight_source = InterWeightSource::Inter;
  if (name == "avg_weight") {
    d.strategy = Strategy::Aver;
  } else if (name == "wo_l_inter") {
    d.beta = 0.0;
  } else if (name == "wo_w_inter") {
    d.inter_weight_source = InterWeightSource::Kd;
  } else if (name != "full") {
    throw ConfigError("unknown ablation variant '" + name + "'");
  }
  return d;
}

std::vector<SummaryRow> cmd_ablate(const ExperimentConfig& cfg) {
  const fs::path out = begin_command(cfg);
  if (cfg.teacher_count() < 2) throw ConfigError("ablation needs >= 2 teachers");
  const Split data = prepare_data(cfg);
  const std::vector<BlockNet> teachers = nets_of(prepare_teachers(cfg, data));

  std::ofstream runs(out / "ablation_runs.csv");
  runs << "variant,seed,test_accuracy\n";
  std::vector<SummaryRow> rows;
  for (const std::string& name : ablation_variants()) {
    const DistillConfig d = ablation_variant(cfg.distill, name);
    std::vector<double> accs;
    for (const std::uint64_t seed : cfg.seeds) {
      accs.push_back(run_accuracy(cfg, data, teachers, d, seed));
      runs << fmt::format("{},{},{}\n", name, seed, accs.back());
    }
    rows.push_back({name, summarize(accs)});
  }
  write_summary_csv(rows, "variant", out / "ablation.csv");
  return rows;
}

}  // namespace camkd
