#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "camkd/tensor.hpp"

namespace camkd {

/// Inputs with integer class labels (one row per sample).
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t input_width() const { return inputs.cols(); }

  Dataset subset(std::span<const std::size_t> indices) const;
  /// The first `count` samples (or all of them).
  Dataset head(std::size_t count) const;

  bool operator==(const Dataset&) const = default;
};

struct DatasetSpec {
  std::size_t samples = 4000;
  std::size_t input_width = 20;
  std::size_t classes = 10;
  std::size_t clusters_per_class = 2;
  double blob_std = 1.0;
  /// Cluster centres are drawn from N(0, separation^2) per coordinate.
  double separation = 1.0;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  /// Throws ParameterError.
  void validate() const;
};

struct Split {
  Dataset train;
  Dataset test;
};

/// Gaussian blobs, `clusters_per_class` clusters per class. Sample i has label
/// i mod C, so class counts differ by at most one; each class is split into
/// train/test separately.
Split make_blobs(const DatasetSpec& spec);

/// Re-draws exactly round(fraction * N) labels, each uniformly among the other
/// classes, at seeded positions. Throws ParameterError unless 0 <= fraction <= 1.
Dataset corrupt_labels(const Dataset& data, double fraction, std::uint64_t seed);

/// CSV with header x0..x{d-1},label; values written with 17 significant digits.
void save_csv(const Dataset& data, const std::filesystem::path& path);
/// Throws ParseError naming the line on malformed input, and on an empty file.
/// `classes` of the result is max label + 1 unless `classes` is larger.
Dataset load_csv(const std::filesystem::path& path, std::size_t classes = 0);

}  // namespace camkd
