#pragma once

// Softmax-Jacobian stability metrics for the output layer z = W h.
//
// The squared Frobenius norm of J = (diag(o) - o o^T) W is evaluated through
// the embedding-dispersion form
//
//     ||J||_F^2 = sum_i o_i^2 ||w_i - mu||^2,   mu = W^T o,
//
// in fixed row blocks with compensated accumulation, so the V x d Jacobian is
// never formed and results do not depend on the worker count.

#include <cstddef>
#include <span>
#include <vector>

#include "tcb/linalg.hpp"

namespace tcb {

inline constexpr double kDefaultEpsilon = 1.0;
inline constexpr double kProbabilitySumTolerance = 1e-9;

class ProbabilityVector {
 public:
  ProbabilityVector() = default;
  // Throws Error(invalid_argument) unless entries lie in [0,1] and sum to 1 within 1e-9.
  explicit ProbabilityVector(std::vector<double> probs);

  std::span<const double> values() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

  friend bool operator==(const ProbabilityVector&, const ProbabilityVector&) = default;

 private:
  std::vector<double> probs_;
};

struct MomentSet {
  double s2 = 0.0;
  double s3 = 0.0;
  double s4 = 0.0;
};

struct LogitMargin {
  double gamma = 0.0;
  std::size_t top1 = 0;
  std::size_t top2 = 0;
};

struct StabilitySnapshot {
  double delta_tcb = 0.0;
  double epsilon = kDefaultEpsilon;
  double v_eff = 0.0;
  double gamma_z = 0.0;
  double jnorm_sq = 0.0;
  MomentSet moments;
  std::size_t top1_id = 0;
  double top1_prob = 0.0;
  std::size_t top2_id = 0;
  double top2_prob = 0.0;
  double mean_embedding_norm = 0.0;
  // Numerically one-hot output: delta_tcb is +infinity.
  bool saturated = false;
};

struct CoreOptions {
  std::size_t block_rows = kDefaultBlockRows;
};

ProbabilityVector softmax(std::span<const double> logits);

double effective_vocab_size(const ProbabilityVector& o);
MomentSet moments(const ProbabilityVector& o);

// Top-two by value, lowest index wins ties. Requires at least two entries.
LogitMargin logit_margin(std::span<const double> logits);

std::vector<double> mean_embedding(const Matrix& w, const ProbabilityVector& o, CoreOptions options = {});
double jacobian_norm_sq(const Matrix& w, const ProbabilityVector& o, CoreOptions options = {});

StabilitySnapshot delta_tcb(const Matrix& w, std::span<const double> h, double epsilon = kDefaultEpsilon,
                            CoreOptions options = {});

// o supplied directly (held fixed by the caller); gamma_z = log o_top1 - log o_top2.
StabilitySnapshot delta_tcb_from_probs(const Matrix& w, const ProbabilityVector& o,
                                       double epsilon = kDefaultEpsilon, CoreOptions options = {});

// Same as above with the margin and top ids taken from known logits.
StabilitySnapshot delta_tcb_from_logits(const Matrix& w, std::span<const double> logits,
                                        double epsilon = kDefaultEpsilon, CoreOptions options = {});

}  // namespace tcb
