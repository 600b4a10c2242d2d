#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "hscd/common.hpp"
#include "hscd/rng.hpp"

namespace hscd {

// Dense row-major double tensor. All model math runs in 64-bit; scene data is
// converted at the boundary. For matrix ops the first dimension counts rows
// and the remaining dimensions are flattened into columns.
class Array {
 public:
  Array() = default;
  explicit Array(std::vector<int64_t> shape);

  static Array zeros(std::vector<int64_t> shape) { return Array(std::move(shape)); }
  static Array full(std::vector<int64_t> shape, double v);
  static Array randn(std::vector<int64_t> shape, Rng& rng);
  static Array from(std::vector<int64_t> shape, std::vector<double> data);

  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }

  int64_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  int64_t cols() const { return shape_.empty() ? size() : size() / (shape_[0] == 0 ? 1 : shape_[0]); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const Array& o) const { return shape_ == o.shape_; }
  Array reshaped(std::vector<int64_t> new_shape) const;

  void fill(double v);
  bool all_finite() const;

  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

int64_t shape_size(const std::vector<int64_t>& shape);

// c = a @ b (logical 2-D, using rows()/cols()).
Array matmul(const Array& a, const Array& b);
// a^T @ b
Array matmul_tn(const Array& a, const Array& b);
// a @ b^T
Array matmul_nt(const Array& a, const Array& b);

// out += a^T @ b / out += a @ b^T / out += a @ b (accumulating forms used by
// backward passes).
void add_matmul(Array& out, const Array& a, const Array& b);
void add_matmul_tn(Array& out, const Array& a, const Array& b);
void add_matmul_nt(Array& out, const Array& a, const Array& b);

void axpy(Array& y, double alpha, const Array& x);  // y += alpha * x

double max_abs_diff(const Array& a, const Array& b);

}  // namespace hscd
