// Dense row-major tensors of doubles, plus the value-level (non-differentiable)
// kernels that the autodiff graph reuses for its forward pass.

#ifndef PVN_TENSOR_HPP_
#define PVN_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pvn/error.hpp"

namespace pvn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

#ifdef PVN_CHECKED
inline constexpr bool kCheckedBuild = true;
#else
inline constexpr bool kCheckedBuild = false;
#endif

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                       std::to_string(data_.size()) + " values");
    }
    if constexpr (kCheckedBuild) check_finite("tensor construction");
  }

  static Tensor zeros(Shape shape) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor filled(Shape shape, double value) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rank() const noexcept { return shape_.size(); }

  /// Rows when viewed as a matrix; rank-1 tensors are a single row.
  std::size_t rows() const noexcept { return rank() >= 2 ? shape_[0] : 1; }
  std::size_t cols() const noexcept {
    if (rank() == 0) return 1;
    return rank() >= 2 ? data_.size() / shape_[0] : shape_[0];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  double item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  void check_finite(const char* where) const {
    if (!all_finite()) throw NumericalError(std::string("non-finite value in ") + where);
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Value-level kernels. Each has a differentiable twin of the same name taking
// `Var` in autodiff.hpp, so network code can be written once as a template.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b.data().data() + p * m;
      double* orow = out.data().data() + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

/// Adds the length-m vector `bias` to every row of the n x m matrix `a`.
inline Tensor add_row(const Tensor& a, const Tensor& bias) {
  const std::size_t m = a.cols();
  if (bias.size() != m) {
    throw ShapeError("add_row: " + shape_string(a.shape()) + " + " + shape_string(bias.shape()));
  }
  Tensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += bias[i % m];
  return out;
}

inline Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

inline Tensor tanh(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data()) v = std::tanh(v);
  return out;
}

/// Row-wise softmax of a / temperature.
inline Tensor softmax_rows(const Tensor& a, double temperature = 1.0) {
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const double* in = a.data().data() + i * m;
    double* o = out.data().data() + i * m;
    double mx = in[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, in[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      o[j] = std::exp((in[j] - mx) / temperature);
      total += o[j];
    }
    for (std::size_t j = 0; j < m; ++j) o[j] /= total;
  }
  return out;
}

/// Copies `shape`-many contiguous values out of a flat tensor starting at `offset`.
inline Tensor slice(const Tensor& flat, std::size_t offset, Shape shape) {
  const std::size_t n = shape_size(shape);
  if (offset + n > flat.size()) {
    throw ShapeError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + n) +
                     ") out of range for " + std::to_string(flat.size()) + " values");
  }
  return Tensor(std::move(shape), std::vector<double>(flat.data().begin() + offset,
                                                      flat.data().begin() + offset + n));
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  return Tensor(std::move(shape), a.values());
}

/// Stacks 1 x m (or rank-1 length-m) tensors into an n x m matrix.
inline Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t m = parts.front().cols();
  std::vector<double> data;
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != m) throw ShapeError("concat_rows: ragged inputs");
    data.insert(data.end(), p.data().begin(), p.data().end());
    rows += p.rows();
  }
  return Tensor({rows, m}, std::move(data));
}

}  // namespace pvn

#endif  // PVN_TENSOR_HPP_
