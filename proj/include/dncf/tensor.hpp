#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace dncf {

class SeededRng;

class DenseVector {
 public:
  DenseVector() = default;
  explicit DenseVector(std::size_t len, double fill = 0.0) : values_(len, fill) {}
  DenseVector(std::initializer_list<double> values) : values_(values) {}
  explicit DenseVector(std::vector<double> values) : values_(std::move(values)) {}
  explicit DenseVector(std::span<const double> values)
      : values_(values.begin(), values.end()) {}

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }
  const std::vector<double>& values() const { return values_; }

  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  void fill(double v);

  bool operator==(const DenseVector&) const = default;

 private:
  std::vector<double> values_;
};

// Row-major rows x cols matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }

  void fill(double v);
  bool all_finite() const;

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

enum class ElementwiseOp { kAdd, kSub, kMul };

DenseVector elementwise(ElementwiseOp op, const DenseVector& a, const DenseVector& b);
DenseVector add(const DenseVector& a, const DenseVector& b);
DenseVector sub(const DenseVector& a, const DenseVector& b);
DenseVector mul(const DenseVector& a, const DenseVector& b);

// w * x, with x of length w.cols().
DenseVector matvec(const DenseMatrix& w, const DenseVector& x);
// w^T * x, with x of length w.rows(). Layers store weights as (in x out), so
// this is the forward product of a dense layer.
DenseVector matvec_transposed(const DenseMatrix& w, const DenseVector& x);

// Batched products. Rows of x / g are instances; w is (in x out).
// Each output row depends only on its own input row, so results do not
// depend on how many rows are processed together.
DenseMatrix matmul(const DenseMatrix& x, const DenseMatrix& w);             // x * w
DenseMatrix matmul_transposed(const DenseMatrix& g, const DenseMatrix& w);  // g * w^T
// acc += x^T * g
void add_transposed_product(const DenseMatrix& x, const DenseMatrix& g, DenseMatrix& acc);

double dot(std::span<const double> a, std::span<const double> b);
double dot(const DenseVector& a, const DenseVector& b);
DenseVector concat(const DenseVector& a, const DenseVector& b);
DenseVector scale(const DenseVector& a, double s);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

bool all_finite(std::span<const double> values);

DenseMatrix gaussian_init(std::size_t rows, std::size_t cols, double mean, double stddev,
                          SeededRng& rng);

}  // namespace dncf
