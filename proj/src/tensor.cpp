#include "camkd/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "camkd/errors.hpp"

namespace camkd {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

}  // namespace

std::string to_string(Shape shape) {
  return "[" + std::to_string(shape.rows) + "x" + std::to_string(shape.cols) + "]";
}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Tensor: " + std::to_string(data_.size()) +
                         " values do not fill shape " + to_string({rows, cols}));
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Tensor::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

double Tensor::item() const {
  if (data_.size() != 1) throw UsageError("Tensor::item on shape " + to_string(shape()));
  return data_[0];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    auto out_row = out.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const auto b_row = b.row(p);
      for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = a;
  for (auto& v : out.values()) v *= factor;
  return out;
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_row_broadcast: bias " + to_string(bias.shape()) +
                         " does not match input " + to_string(x.shape()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor softmax_t(const Tensor& z, double tau) {
  if (!(tau > 0.0)) throw ParameterError("softmax_t: temperature must be positive");
  Tensor out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto in = z.row(i);
    auto o = out.row(i);
    if (in.empty()) continue;
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp((in[j] - peak) / tau);
      total += o[j];
    }
    for (auto& v : o) v /= total;
  }
  return out;
}

Tensor log_clamped(const Tensor& p) {
  Tensor out = p;
  for (auto& v : out.values()) v = std::log(std::max(v, kLogFloor));
  return out;
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes,
                  const char* op) {
  if (labels.size() != rows) {
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(rows) + " rows");
  }
  for (const int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw IndexError(std::string(op) + ": label " + std::to_string(label) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

Tensor cross_entropy(const Tensor& p, std::span<const int> labels) {
  check_labels(labels, p.rows(), p.cols(), "cross_entropy");
  Tensor out(p.rows(), 1);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    out[i] = -std::log(std::max(p(i, static_cast<std::size_t>(labels[i])), kLogFloor));
  }
  return out;
}

Tensor l2_sq(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l2_sq");
  Tensor out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ra = a.row(i);
    const auto rb = b.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < ra.size(); ++j) {
      const double d = ra[j] - rb[j];
      acc += d * d;
    }
    out[i] = acc;
  }
  return out;
}

Tensor row_entropy(const Tensor& p) {
  Tensor out(p.rows(), 1);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double h = 0.0;
    for (const double v : p.row(i)) h -= v * std::log(std::max(v, kLogFloor));
    out[i] = h;
  }
  return out;
}

Tensor row_sum(const Tensor& x) {
  Tensor out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double acc = 0.0;
    for (const double v : x.row(i)) acc += v;
    out[i] = acc;
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.empty()) throw DimensionError("mean: empty tensor");
  double acc = 0.0;
  for (const double v : x.values()) acc += v;
  return Tensor::scalar(acc / static_cast<double>(x.size()));
}

Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  check_labels(labels, labels.size(), classes, "one_hot");
  Tensor out(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  return out;
}

Tensor avg_pool(const Tensor& features, std::size_t spatial) {
  if (spatial == 0 || features.cols() % spatial != 0) {
    throw DimensionError("avg_pool: width " + std::to_string(features.cols()) +
                         " is not a multiple of " + std::to_string(spatial) + " positions");
  }
  if (spatial == 1) return features;
  const std::size_t channels = features.cols() / spatial;
  Tensor out(features.rows(), channels);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (std::size_t s = 0; s < spatial; ++s) {
      for (std::size_t c = 0; c < channels; ++c) out(i, c) += features(i, s * channels + c);
    }
    for (auto& v : out.row(i)) v /= static_cast<double>(spatial);
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& x) {
  std::vector<int> out(x.rows(), 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  Tensor out(indices.size(), x.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.rows()) {
      throw IndexError("gather_rows: row " + std::to_string(indices[i]) + " outside " +
                       to_string(x.shape()));
    }
    const auto src = x.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace camkd
