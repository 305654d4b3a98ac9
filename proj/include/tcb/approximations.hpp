#pragma once

#include <cstddef>

#include "tcb/linalg.hpp"
#include "tcb/stability_core.hpp"

namespace tcb {

enum class ApproxMethod { refined_statistical, diffuse, peaked_competitor };
const char* to_string(ApproxMethod method);

struct ApproxEstimate {
  double value = 0.0;  // estimated delta_tcb
  double jnorm_sq_estimate = 0.0;
  ApproxMethod method = ApproxMethod::refined_statistical;
  bool saturated = false;
  std::size_t d = 0;
  double sigma_sq = 0.0;
  double epsilon = kDefaultEpsilon;
  std::size_t dominant_index = 0;  // peaked_competitor only
};

// ||M||_F^2 = S2 - 2 S3 + S2^2 from precomputed moments.
double refined_norm_factor(const MomentSet& m);

// epsilon / sqrt(d sigma^2 factor); +inf when factor is zero.
double delta_from_norm_factor(double factor, std::size_t d, double sigma_sq, double epsilon);

ApproxEstimate delta_tcb_statistical(const ProbabilityVector& o, std::size_t d, double sigma_sq,
                                     double epsilon = kDefaultEpsilon);

// epsilon * sqrt(v_eff / (d sigma^2))
ApproxEstimate delta_tcb_diffuse(double v_eff, std::size_t d, double sigma_sq, double epsilon = kDefaultEpsilon);

// sum_{j != k} o_j^2 ||w_j - w_k||^2 ; k must be an argmax of o.
double jnorm_sq_peaked(const Matrix& w, const ProbabilityVector& o, std::size_t k);
ApproxEstimate delta_tcb_peaked(const Matrix& w, const ProbabilityVector& o, std::size_t k,
                                double epsilon = kDefaultEpsilon);

enum class Regime { peaked, intermediate, diffuse };
const char* to_string(Regime regime);

inline constexpr double kDefaultVeffLow = 20.0;
inline constexpr double kDefaultVeffHigh = 100.0;

Regime classify_regime(double v_eff, double veff_low = kDefaultVeffLow, double veff_high = kDefaultVeffHigh);
Regime classify_regime(const StabilitySnapshot& snapshot, double veff_low = kDefaultVeffLow,
                       double veff_high = kDefaultVeffHigh);

// Empirical variance of all entries of W (the --sigma-from-W reading of sigma^2).
double empirical_element_variance(const Matrix& w);

}  // namespace tcb
