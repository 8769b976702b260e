#include "camkd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include <fmt/format.h>

#include "camkd/errors.hpp"
#include "camkd/rng.hpp"

namespace camkd {

namespace {

enum Stream : std::uint64_t { kCentres = 1, kSamples = 2, kSplit = 3 };

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.inputs = gather_rows(inputs, indices);
  out.classes = classes;
  out.labels.reserve(indices.size());
  for (const std::size_t i : indices) out.labels.push_back(labels[i]);
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  std::vector<std::size_t> idx(std::min(count, size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return subset(idx);
}

void DatasetSpec::validate() const {
  if (classes < 2) throw ParameterError("dataset: need at least two classes");
  if (samples < classes) throw ParameterError("dataset: N must be at least C");
  if (input_width == 0) throw ParameterError("dataset: input width must be positive");
  if (clusters_per_class == 0) throw ParameterError("dataset: clusters_per_class must be positive");
  if (!(blob_std > 0.0)) throw ParameterError("dataset: blob_std must be positive");
  if (!(separation > 0.0)) throw ParameterError("dataset: separation must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ParameterError("dataset: train_fraction must lie in (0, 1)");
  }
}

Split make_blobs(const DatasetSpec& spec) {
  spec.validate();
  const std::size_t d = spec.input_width;
  const std::size_t n_clusters = spec.classes * spec.clusters_per_class;

  Rng centre_rng(derive_seed(spec.seed, kCentres));
  Tensor centres(n_clusters, d);
  for (auto& v : centres.values()) v = spec.separation * centre_rng.normal();

  Rng sample_rng(derive_seed(spec.seed, kSamples));
  Dataset all;
  all.classes = spec.classes;
  all.inputs = Tensor(spec.samples, d);
  all.labels.resize(spec.samples);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const std::size_t label = i % spec.classes;
    const std::size_t cluster =
        label * spec.clusters_per_class + sample_rng.uniform_int(spec.clusters_per_class);
    all.labels[i] = static_cast<int>(label);
    auto row = all.inputs.row(i);
    for (std::size_t j = 0; j < d; ++j) row[j] = centres(cluster, j) + spec.blob_std * sample_rng.normal();
  }

  Rng split_rng(derive_seed(spec.seed, kSplit));
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = c; i < spec.samples; i += spec.classes) members.push_back(i);
    split_rng.shuffle(std::span<std::size_t>(members));
    const auto n_train = static_cast<std::size_t>(
        std::llround(spec.train_fraction * static_cast<double>(members.size())));
    train_idx.insert(train_idx.end(), members.begin(), members.begin() + static_cast<long>(n_train));
    test_idx.insert(test_idx.end(), members.begin() + static_cast<long>(n_train), members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  // Sorted ids interleave classes round-robin, so any prefix (e.g. the probe set)
  // is close to class-balanced.
  return Split{all.subset(train_idx), all.subset(test_idx)};
}

Dataset corrupt_labels(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ParameterError("corrupt_labels: fraction must lie in [0, 1]");
  }
  if (data.classes < 2 && fraction > 0.0) {
    throw ParameterError("corrupt_labels: need at least two classes");
  }
  Dataset out = data;
  const std::size_t n = data.size();
  const auto n_flip = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> positions(n);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first n_flip slots become a uniform sample of positions.
  for (std::size_t i = 0; i < n_flip; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(n - i));
    std::swap(positions[i], positions[j]);
    const std::size_t pos = positions[i];
    const auto shift = 1 + rng.uniform_int(data.classes - 1);
    out.labels[pos] = static_cast<int>((static_cast<std::size_t>(data.labels[pos]) + shift) % data.classes);
  }
  return out;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::string line;
  for (std::size_t j = 0; j < data.input_width(); ++j) line += fmt::format("x{},", j);
  line += "label\n";
  out << line;
  for (std::size_t i = 0; i < data.size(); ++i) {
    line.clear();
    for (const double v : data.inputs.row(i)) fmt::format_to(std::back_inserter(line), "{:.17g},", v);
    fmt::format_to(std::back_inserter(line), "{}\n", data.labels[i]);
    out << line;
  }
}

Dataset load_csv(const std::filesystem::path& path, std::size_t classes) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw ParseError(path.string() + ": empty dataset");
  }
  const auto header = split_fields(line);
  const std::size_t d = header.size() - 1;
  if (header.size() < 2 || header.back() != "label") {
    throw ParseError(path.string() + ":1: header must be x0..x{d-1},label");
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != "x" + std::to_string(j)) {
      throw ParseError(path.string() + ":1: unexpected column '" + std::string(header[j]) + "'");
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (fields.size() != d + 1) {
      throw ParseError(where + "expected " + std::to_string(d + 1) + " fields, got " +
                       std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      const auto f = fields[j];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc{} || ptr != f.data() + f.size() || !std::isfinite(v)) {
        throw ParseError(where + "bad number '" + std::string(f) + "'");
      }
      values.push_back(v);
    }
    int label = 0;
    const auto f = fields[d];
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), label);
    if (ec != std::errc{} || ptr != f.data() + f.size() || label < 0) {
      throw ParseError(where + "bad label '" + std::string(f) + "'");
    }
    labels.push_back(label);
  }
  if (labels.empty()) throw ParseError(path.string() + ": empty dataset");

  Dataset out;
  out.inputs = Tensor(labels.size(), d, std::move(values));
  out.classes = std::max<std::size_t>(classes, static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1);
  out.labels = std::move(labels);
  return out;
}

}  // namespace camkd
