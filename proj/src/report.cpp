#include "camkd/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "camkd/errors.hpp"

namespace camkd {

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

template <typename T>
T parse_field(const std::string& text, const std::string& where) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParseError(where + "bad field '" + text + "'");
  }
  return v;
}

}  // namespace

std::string format_number(double v) { return fmt::format("{}", v); }

void write_metrics_csv(const RunLog& log, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << kMetricsHeader << '\n';
  for (const EpochRecord& r : log.epochs) {
    out << fmt::format("{},{},{},{},{},{},{},{}\n", r.epoch, r.split, r.accuracy, r.loss_total,
                       r.loss_ce, r.loss_kd, r.loss_inter, r.lr);
  }
}

void write_weights_csv(std::span<const WeightTraceRow> rows, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << kWeightsHeader << '\n';
  for (const WeightTraceRow& r : rows) {
    out << fmt::format("{},{},{},{},{}\n", r.sample_id, r.teacher_id, r.w_kd, r.w_inter,
                       r.teacher_conf_loss);
  }
}

std::vector<WeightTraceRow> read_weights_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kWeightsHeader) {
    throw ParseError(path.string() + ":1: expected header " + kWeightsHeader);
  }
  std::vector<WeightTraceRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 5) throw ParseError(where + "expected 5 fields");
    rows.push_back(WeightTraceRow{parse_field<std::size_t>(f[0], where),
                                  parse_field<std::size_t>(f[1], where),
                                  parse_field<double>(f[2], where), parse_field<double>(f[3], where),
                                  parse_field<double>(f[4], where)});
  }
  return rows;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.runs = values.size();
  if (values.empty()) return s;
  for (const double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (const double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

void write_summary_csv(std::span<const SummaryRow> rows, const std::string& label_column,
                       const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << label_column << ",mean_accuracy,std_accuracy,runs\n";
  for (const SummaryRow& r : rows) {
    out << fmt::format("{},{},{},{}\n", r.label, r.summary.mean, r.summary.stddev, r.summary.runs);
  }
}

}  // namespace camkd
