#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "camkd/data.hpp"
#include "camkd/distill.hpp"
#include "camkd/train.hpp"

namespace camkd {

/// Everything an experiment needs. Serialised as one flat JSON object; every key
/// is optional on input and always present in the resolved output.
struct ExperimentConfig {
  /// Directory holding train.csv and test.csv. Empty means: generate blobs.
  std::string data_dir;
  DatasetSpec dataset;

  std::vector<std::size_t> teacher_widths{64, 64};
  std::vector<double> teacher_noise{0.0, 0.1, 0.4};
  std::vector<std::uint64_t> teacher_seeds{101, 102, 103};
  /// Directory holding teacher_<k>.json checkpoints. Empty means: train them.
  std::string teacher_dir;

  std::vector<std::size_t> student_widths{32};

  /// Desk preset: DistillConfig defaults with beta = 0.02.
  DistillConfig distill = [] {
    DistillConfig d;
    d.beta = 0.02;
    return d;
  }();
  TrainSettings train;

  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::size_t> k_list{1, 2, 3};
  std::size_t probe_size = 256;
  std::string out_dir = "out";

  /// Throws ConfigError on any invalid or inconsistent field.
  void validate() const;

  std::size_t teacher_count() const { return teacher_noise.size(); }
  /// Input width first, then block widths.
  std::vector<std::size_t> teacher_layer_widths(std::size_t input_width) const;
  std::vector<std::size_t> student_layer_widths(std::size_t input_width) const;
};

/// Parses a flat JSON object. Unknown keys and wrongly typed values are
/// ConfigErrors; missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

}  // namespace camkd
