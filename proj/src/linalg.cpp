#include "tcb/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "tcb/error.hpp"
#include "tcb/parallel.hpp"

namespace tcb {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != rows * cols) {
    throw Error(ErrorCode::shape_mismatch, "matrix data length does not equal rows*cols");
  }
}

void CompensatedSum::add(double x) noexcept {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::vector<double> blocked_matvec(const Matrix& w, std::span<const double> x, std::size_t block_rows) {
  if (x.size() != w.cols) {
    throw Error(ErrorCode::shape_mismatch, "matvec: W has " + std::to_string(w.cols) + " columns, vector has " +
                                               std::to_string(x.size()) + " entries");
  }
  if (block_rows == 0) throw Error(ErrorCode::invalid_argument, "block_rows must be positive");
  std::vector<double> y(w.rows, 0.0);
  const std::size_t n_blocks = (w.rows + block_rows - 1) / block_rows;
  parallel_for(n_blocks, [&](std::size_t b) {
    const std::size_t begin = b * block_rows;
    const std::size_t end = std::min(w.rows, begin + block_rows);
    for (std::size_t i = begin; i < end; ++i) y[i] = dot(w.row(i), x);
  });
  return y;
}

}  // namespace tcb
