#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpvm/errors.hpp"

namespace dpvm {

inline std::string shape_str(std::size_t rows, std::size_t cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

/// Dense row-major matrix. A single vector is a 1xN Tensor2.
template <typename T>
class Tensor2 {
 public:
  using value_type = T;

  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_)
      throw ConfigError("Tensor2: " + std::to_string(values_.size()) +
                        " values do not fill shape " + shape_str(rows_, cols_));
  }

  static Tensor2 row_vector(std::span<const T> v) {
    return Tensor2(1, v.size(), std::vector<T>(v.begin(), v.end()));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  std::string shape() const { return shape_str(rows_, cols_); }

  T& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](T x) { return std::isfinite(x); });
  }

  template <typename U>
  Tensor2<U> cast() const {
    return Tensor2<U>(rows_, cols_, std::vector<U>(values_.begin(), values_.end()));
  }

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> values_;
};

/// Trainable tensor with its accumulated gradient.
template <typename T>
struct ParamTensor {
  std::string name;
  Tensor2<T> value;
  Tensor2<T> grad;

  ParamTensor() = default;
  ParamTensor(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}
  ParamTensor(std::string n, Tensor2<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(T(0)); }

  template <typename U>
  ParamTensor<U> cast() const {
    return ParamTensor<U>(name, value.template cast<U>());
  }
};

// out = a * b
template <typename T>
Tensor2<T> matmul(const Tensor2<T>& a, const Tensor2<T>& b) {
  if (a.cols() != b.rows())
    throw ConfigError("matmul: shape mismatch " + a.shape() + " * " + b.shape());
  Tensor2<T> out(a.rows(), b.cols());
  const std::size_t n = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T* o = out.row(i).data();
    const T* ar = a.row(i).data();
    for (std::size_t k = 0; k < n; ++k) {
      const T s = ar[k];
      if (s == T(0)) continue;
      const T* br = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += s * br[j];
    }
  }
  return out;
}

// out += a^T * b
template <typename T>
void matmul_at_b_acc(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols())
    throw ConfigError("matmul_at_b: shape mismatch " + a.shape() + "^T * " + b.shape() +
                      " -> " + out.shape());
  const std::size_t m = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const T* ar = a.row(r).data();
    const T* br = b.row(r).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T s = ar[i];
      if (s == T(0)) continue;
      T* o = out.row(i).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += s * br[j];
    }
  }
}

// out = a * b^T
template <typename T>
Tensor2<T> matmul_a_bt(const Tensor2<T>& a, const Tensor2<T>& b) {
  if (a.cols() != b.cols())
    throw ConfigError("matmul_a_bt: shape mismatch " + a.shape() + " * " + b.shape() + "^T");
  Tensor2<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const T* br = b.row(j).data();
      T s(0);
      for (std::size_t k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

template <typename T>
void add_inplace(Tensor2<T>& dst, const Tensor2<T>& src) {
  if (dst.rows() != src.rows() || dst.cols() != src.cols())
    throw ConfigError("add: shape mismatch " + dst.shape() + " + " + src.shape());
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// Row-wise [a ; b].
template <typename T>
Tensor2<T> hconcat(const Tensor2<T>& a, const Tensor2<T>& b) {
  if (a.rows() != b.rows())
    throw ConfigError("hconcat: row mismatch " + a.shape() + " | " + b.shape());
  Tensor2<T> out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto o = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), o.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), o.begin() + a.cols());
  }
  return out;
}

// Inverse of hconcat: columns [begin, begin+width).
template <typename T>
Tensor2<T> column_slice(const Tensor2<T>& x, std::size_t begin, std::size_t width) {
  if (begin + width > x.cols())
    throw ConfigError("column_slice: [" + std::to_string(begin) + "," +
                      std::to_string(begin + width) + ") out of " + x.shape());
  Tensor2<T> out(x.rows(), width);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto src = x.row(r).subspan(begin, width);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace dpvm
