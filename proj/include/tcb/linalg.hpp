#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tcb {

// Dense row-major matrix. Rows of W are output embeddings w_i.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> v);

  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

inline constexpr std::size_t kDefaultBlockRows = 4096;

// y = W x, evaluated in row blocks of `block_rows`.
std::vector<double> blocked_matvec(const Matrix& w, std::span<const double> x,
                                   std::size_t block_rows = kDefaultBlockRows);

}  // namespace tcb
