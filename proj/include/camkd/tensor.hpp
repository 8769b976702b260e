#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace camkd {

/// Lower clamp applied to every probability before taking a log.
inline constexpr double kLogFloor = 1e-12;

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(Shape shape);

/// Dense row-major matrix of doubles. Every value in the library is rank 2:
/// batches are rows, features/classes are columns, scalars are 1x1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double value) { return Tensor(1, 1, value); }
  static Tensor identity(std::size_t n);

  Shape shape() const { return {rows_, cols_}; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  /// Value of a 1x1 tensor.
  double item() const;

  void fill(double value);
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Value-level kernels. The autodiff layer reuses these for its forward pass;
// frozen networks call them directly so nothing is recorded.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x + bias, with bias of shape 1 x cols broadcast over rows.
Tensor add_row_broadcast(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);

/// Row-wise softmax of z / tau with max subtraction. Throws ParameterError if tau <= 0.
Tensor softmax_t(const Tensor& z, double tau);
/// Elementwise log(max(p, kLogFloor)).
Tensor log_clamped(const Tensor& p);
/// Per-sample -log(max(p[i, label_i], kLogFloor)); returns batch x 1.
Tensor cross_entropy(const Tensor& p, std::span<const int> labels);
/// Per-sample squared Euclidean distance between rows; returns batch x 1.
Tensor l2_sq(const Tensor& a, const Tensor& b);
/// Per-sample Shannon entropy -sum p log p (clamped); returns batch x 1.
Tensor row_entropy(const Tensor& p);

Tensor row_sum(const Tensor& x);
/// Mean over all elements, as a 1x1 tensor.
Tensor mean(const Tensor& x);
Tensor one_hot(std::span<const int> labels, std::size_t classes);

/// Average pooling over spatial positions. Rows hold `spatial` consecutive groups of
/// channels; the result is batch x channels. With spatial == 1 this is the identity,
/// which is the case for every network in this library.
Tensor avg_pool(const Tensor& features, std::size_t spatial = 1);

std::vector<int> argmax_rows(const Tensor& x);

/// Rows of `x` at `indices`, in that order.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes,
                  const char* op);

}  // namespace camkd
