#include "dncf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dncf/error.hpp"
#include "dncf/rng.hpp"

namespace dncf {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": length mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}

}  // namespace

void DenseVector::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw ShapeError("DenseMatrix: " + std::to_string(values_.size()) +
                     " values for shape " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void DenseMatrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool DenseMatrix::all_finite() const { return dncf::all_finite(values_); }

DenseVector elementwise(ElementwiseOp op, const DenseVector& a, const DenseVector& b) {
  require_same_length(a.size(), b.size(), "elementwise");
  DenseVector out(a.size());
  switch (op) {
    case ElementwiseOp::kAdd:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
      break;
    case ElementwiseOp::kSub:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
      break;
    case ElementwiseOp::kMul:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
      break;
  }
  return out;
}

DenseVector add(const DenseVector& a, const DenseVector& b) {
  return elementwise(ElementwiseOp::kAdd, a, b);
}
DenseVector sub(const DenseVector& a, const DenseVector& b) {
  return elementwise(ElementwiseOp::kSub, a, b);
}
DenseVector mul(const DenseVector& a, const DenseVector& b) {
  return elementwise(ElementwiseOp::kMul, a, b);
}

DenseVector matvec(const DenseMatrix& w, const DenseVector& x) {
  require_same_length(w.cols(), x.size(), "matvec");
  DenseVector out(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) out[r] = dot(w.row(r), x.span());
  return out;
}

DenseVector matvec_transposed(const DenseMatrix& w, const DenseVector& x) {
  require_same_length(w.rows(), x.size(), "matvec_transposed");
  const std::size_t n = w.cols();
  DenseVector out(n);
  double* ys = out.data();
  // Four input rows per pass over `out`; zero inputs are skipped.
  std::size_t rows[4];
  std::size_t pending = 0;
  auto flush = [&] {
    if (pending == 4) {
      const double a0 = x[rows[0]], a1 = x[rows[1]], a2 = x[rows[2]], a3 = x[rows[3]];
      const double* w0 = w.row(rows[0]).data();
      const double* w1 = w.row(rows[1]).data();
      const double* w2 = w.row(rows[2]).data();
      const double* w3 = w.row(rows[3]).data();
      for (std::size_t j = 0; j < n; ++j) ys[j] += a0 * w0[j] + a1 * w1[j] + a2 * w2[j] + a3 * w3[j];
    } else {
      for (std::size_t k = 0; k < pending; ++k) axpy(x[rows[k]], w.row(rows[k]), out.span());
    }
    pending = 0;
  };
  for (std::size_t r = 0; r < w.rows(); ++r) {
    if (x[r] == 0.0) continue;
    rows[pending++] = r;
    if (pending == 4) flush();
  }
  flush();
  return out;
}

namespace {

// Rows of a batch handled together so a weight row is reused from cache.
constexpr std::size_t kRowBlock = 8;

}  // namespace

DenseMatrix matmul(const DenseMatrix& x, const DenseMatrix& w) {
  require_same_length(x.cols(), w.rows(), "matmul");
  const std::size_t n = w.cols();
  DenseMatrix out(x.rows(), n);
  for (std::size_t b0 = 0; b0 < x.rows(); b0 += kRowBlock) {
    const std::size_t b1 = std::min(b0 + kRowBlock, x.rows());
    for (std::size_t r = 0; r < w.rows(); ++r) {
      const double* wr = w.row(r).data();
      for (std::size_t b = b0; b < b1; ++b) {
        const double a = x(b, r);
        if (a == 0.0) continue;
        double* ys = out.row(b).data();
        for (std::size_t j = 0; j < n; ++j) ys[j] += a * wr[j];
      }
    }
  }
  return out;
}

DenseMatrix matmul_transposed(const DenseMatrix& g, const DenseMatrix& w) {
  require_same_length(g.cols(), w.cols(), "matmul_transposed");
  DenseMatrix out(g.rows(), w.rows());
  for (std::size_t b0 = 0; b0 < g.rows(); b0 += kRowBlock) {
    const std::size_t b1 = std::min(b0 + kRowBlock, g.rows());
    for (std::size_t r = 0; r < w.rows(); ++r) {
      for (std::size_t b = b0; b < b1; ++b) out(b, r) = dot(g.row(b), w.row(r));
    }
  }
  return out;
}

void add_transposed_product(const DenseMatrix& x, const DenseMatrix& g, DenseMatrix& acc) {
  require_same_length(x.rows(), g.rows(), "add_transposed_product rows");
  require_same_length(x.cols(), acc.rows(), "add_transposed_product inputs");
  require_same_length(g.cols(), acc.cols(), "add_transposed_product outputs");
  const std::size_t n = acc.cols();
  std::size_t picked[kRowBlock];
  for (std::size_t b0 = 0; b0 < x.rows(); b0 += kRowBlock) {
    const std::size_t b1 = std::min(b0 + kRowBlock, x.rows());
    for (std::size_t r = 0; r < x.cols(); ++r) {
      std::size_t m = 0;
      for (std::size_t b = b0; b < b1; ++b) {
        if (x(b, r) != 0.0) picked[m++] = b;
      }
      double* ys = acc.row(r).data();
      std::size_t k = 0;
      for (; k + 4 <= m; k += 4) {
        const double a0 = x(picked[k], r), a1 = x(picked[k + 1], r);
        const double a2 = x(picked[k + 2], r), a3 = x(picked[k + 3], r);
        const double* g0 = g.row(picked[k]).data();
        const double* g1 = g.row(picked[k + 1]).data();
        const double* g2 = g.row(picked[k + 2]).data();
        const double* g3 = g.row(picked[k + 3]).data();
        for (std::size_t j = 0; j < n; ++j) ys[j] += a0 * g0[j] + a1 * g1[j] + a2 * g2[j] + a3 * g3[j];
      }
      for (; k < m; ++k) {
        const double a = x(picked[k], r);
        const double* gr = g.row(picked[k]).data();
        for (std::size_t j = 0; j < n; ++j) ys[j] += a * gr[j];
      }
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size(), "dot");
  // Four independent partial sums so the loop vectorizes.
  const std::size_t n = a.size();
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc[0] += a[i] * b[i];
    acc[1] += a[i + 1] * b[i + 1];
    acc[2] += a[i + 2] * b[i + 2];
    acc[3] += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) acc[0] += a[i] * b[i];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

double dot(const DenseVector& a, const DenseVector& b) { return dot(a.span(), b.span()); }

DenseVector concat(const DenseVector& a, const DenseVector& b) {
  DenseVector out(a.size() + b.size());
  std::copy(a.begin(), a.end(), out.begin());
  std::copy(b.begin(), b.end(), out.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

DenseVector scale(const DenseVector& a, double s) {
  DenseVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same_length(x.size(), y.size(), "axpy");
  const std::size_t n = x.size();
  const double* xs = x.data();
  double* ys = y.data();
  for (std::size_t i = 0; i < n; ++i) ys[i] += alpha * xs[i];
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix gaussian_init(std::size_t rows, std::size_t cols, double mean, double stddev,
                          SeededRng& rng) {
  if (!(stddev >= 0.0)) throw ConfigError("gaussian_init: stddev must be >= 0");
  DenseMatrix m(rows, cols);
  for (double& v : m.span()) v = stddev == 0.0 ? mean : rng.normal(mean, stddev);
  return m;
}

}  // namespace dncf
