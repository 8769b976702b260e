#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "camkd/train.hpp"

namespace camkd {

inline constexpr const char* kMetricsHeader =
    "epoch,split,accuracy,loss_total,loss_ce,loss_kd,loss_inter,lr";
inline constexpr const char* kWeightsHeader = "sample_id,teacher_id,w_kd,w_inter,teacher_conf_loss";

void write_metrics_csv(const RunLog& log, const std::filesystem::path& path);
void write_weights_csv(std::span<const WeightTraceRow> rows, const std::filesystem::path& path);
std::vector<WeightTraceRow> read_weights_csv(const std::filesystem::path& path);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single run
  std::size_t runs = 0;
};

Summary summarize(std::span<const double> values);

/// Rows of `label,mean,std,runs` under the given header.
struct SummaryRow {
  std::string label;
  Summary summary;
};
void write_summary_csv(std::span<const SummaryRow> rows, const std::string& label_column,
                       const std::filesystem::path& path);

/// Shortest decimal form that parses back to the same double.
std::string format_number(double v);

}  // namespace camkd
