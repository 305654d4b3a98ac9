#pragma once

// Brute-force references for the closed-form norm. Small scale only.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tcb/linalg.hpp"
#include "tcb/stability_core.hpp"

namespace tcb::oracle {

inline constexpr std::size_t kScaleGuard = std::size_t{1} << 22;
inline constexpr double kDefaultFiniteDiffStep = 1e-5;

// J = (diag(o) - o o^T) W with M assembled densely. Requires V*d <= 2^22 and V*V <= 2^22.
Matrix explicit_jacobian(const Matrix& w, const ProbabilityVector& o);

// Central differences of softmax(W h) per hidden coordinate; step in [1e-7, 1e-3].
Matrix finite_diff_jacobian(const Matrix& w, std::span<const double> h, double step = kDefaultFiniteDiffStep);

double frobenius_norm_sq(const Matrix& m);

// S2 - 2 S3 + S2^2.
double m_norm_sq(const ProbabilityVector& o);
// ||diag(o) - o o^T||_F^2 summed entry by entry.
double dense_m_norm_sq(const ProbabilityVector& o);

struct CovarianceTrace {
  double trace = 0.0;              // sum_i o_i ||w_i - mu||^2
  double variance_identity = 0.0;  // sum_i o_i ||w_i||^2 - ||mu||^2
  bool identity_holds = false;     // agreement within 1e-12 (relative to sum_i o_i ||w_i||^2)
};

CovarianceTrace covariance_trace(const Matrix& w, const ProbabilityVector& o);

struct PropertyVerdict {
  std::string name;
  bool passed = false;
  std::size_t instances = 0;
  double worst = 0.0;  // worst observed error for the property's metric
  std::string detail;
};

using NormFunction = std::function<double(const Matrix&, const ProbabilityVector&)>;

struct VerifyConfig {
  std::uint64_t seed = 0;
  std::size_t instances = 1000;
  // Closed form under test; defaults to tcb::jacobian_norm_sq.
  NormFunction closed_form;
};

// Runs every oracle property on seeded random instances (V <= 64, d <= 16,
// entries in [-2, 2]). Deterministic in (seed, instances).
std::vector<PropertyVerdict> run_oracle_suite(const VerifyConfig& config);

}  // namespace tcb::oracle
