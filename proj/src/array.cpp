#include "hscd/array.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdlib>

namespace hscd {

namespace {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

CMap cmap(const Array& a) { return CMap(a.data(), a.rows(), a.cols()); }
MMap mmap(Array& a) { return MMap(a.data(), a.rows(), a.cols()); }
}  // namespace

int64_t shape_size(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

Array::Array(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_size(shape_)), 0.0);
}

Array Array::full(std::vector<int64_t> shape, double v) {
  Array a(std::move(shape));
  a.fill(v);
  return a;
}

Array Array::randn(std::vector<int64_t> shape, Rng& rng) {
  Array a(std::move(shape));
  for (auto& x : a.data_) x = rng.normal();
  return a;
}

Array Array::from(std::vector<int64_t> shape, std::vector<double> data) {
  require(shape_size(shape) == static_cast<int64_t>(data.size()),
          "Array::from: shape does not match data length");
  Array a;
  a.shape_ = std::move(shape);
  a.data_ = std::move(data);
  return a;
}

Array Array::reshaped(std::vector<int64_t> new_shape) const {
  require(shape_size(new_shape) == size(), "Array::reshaped: element count mismatch");
  Array a;
  a.shape_ = std::move(new_shape);
  a.data_ = data_;
  return a;
}

void Array::fill(double v) {
  for (auto& x : data_) x = v;
}

bool Array::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

Array matmul(const Array& a, const Array& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Array c({a.rows(), b.cols()});
  mmap(c).noalias() = cmap(a) * cmap(b);
  return c;
}

Array matmul_tn(const Array& a, const Array& b) {
  require(a.rows() == b.rows(), "matmul_tn: inner dimensions differ");
  Array c({a.cols(), b.cols()});
  mmap(c).noalias() = cmap(a).transpose() * cmap(b);
  return c;
}

Array matmul_nt(const Array& a, const Array& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Array c({a.rows(), b.rows()});
  mmap(c).noalias() = cmap(a) * cmap(b).transpose();
  return c;
}

void add_matmul(Array& out, const Array& a, const Array& b) {
  mmap(out).noalias() += cmap(a) * cmap(b);
}

void add_matmul_tn(Array& out, const Array& a, const Array& b) {
  mmap(out).noalias() += cmap(a).transpose() * cmap(b);
}

void add_matmul_nt(Array& out, const Array& a, const Array& b) {
  mmap(out).noalias() += cmap(a) * cmap(b).transpose();
}

void axpy(Array& y, double alpha, const Array& x) {
  require(y.size() == x.size(), "axpy: size mismatch");
  double* yp = y.data();
  const double* xp = x.data();
  const int64_t n = y.size();
  for (int64_t i = 0; i < n; ++i) yp[i] += alpha * xp[i];
}

double max_abs_diff(const Array& a, const Array& b) {
  require(a.size() == b.size(), "max_abs_diff: size mismatch");
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace hscd
