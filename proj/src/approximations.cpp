#include "tcb/approximations.hpp"

#include <cmath>
#include <limits>

#include "tcb/error.hpp"

namespace tcb {

namespace {

void check_params(std::size_t d, double sigma_sq, double epsilon) {
  if (d == 0) throw Error(ErrorCode::invalid_argument, "d must be positive");
  if (!(sigma_sq > 0.0)) throw Error(ErrorCode::invalid_argument, "sigma^2 must be > 0");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_argument, "epsilon must be > 0");
}

}  // namespace

const char* to_string(ApproxMethod method) {
  switch (method) {
    case ApproxMethod::refined_statistical: return "refined_statistical";
    case ApproxMethod::diffuse: return "diffuse";
    case ApproxMethod::peaked_competitor: return "peaked_competitor";
  }
  return "?";
}

const char* to_string(Regime regime) {
  switch (regime) {
    case Regime::peaked: return "peaked";
    case Regime::intermediate: return "intermediate";
    case Regime::diffuse: return "diffuse";
  }
  return "?";
}

double refined_norm_factor(const MomentSet& m) { return m.s2 - 2.0 * m.s3 + m.s2 * m.s2; }

double delta_from_norm_factor(double factor, std::size_t d, double sigma_sq, double epsilon) {
  const double jn = static_cast<double>(d) * sigma_sq * factor;
  return jn > 0.0 ? epsilon / std::sqrt(jn) : std::numeric_limits<double>::infinity();
}

ApproxEstimate delta_tcb_statistical(const ProbabilityVector& o, std::size_t d, double sigma_sq, double epsilon) {
  check_params(d, sigma_sq, epsilon);
  // Rounding can push the factor a hair below zero at a simplex vertex.
  const double factor = std::max(0.0, refined_norm_factor(moments(o)));
  ApproxEstimate e;
  e.method = ApproxMethod::refined_statistical;
  e.d = d;
  e.sigma_sq = sigma_sq;
  e.epsilon = epsilon;
  e.jnorm_sq_estimate = static_cast<double>(d) * sigma_sq * factor;
  e.saturated = !(e.jnorm_sq_estimate > 0.0);
  e.value = delta_from_norm_factor(factor, d, sigma_sq, epsilon);
  return e;
}

ApproxEstimate delta_tcb_diffuse(double v_eff, std::size_t d, double sigma_sq, double epsilon) {
  check_params(d, sigma_sq, epsilon);
  if (!(v_eff >= 1.0)) throw Error(ErrorCode::invalid_argument, "v_eff must be >= 1");
  ApproxEstimate e;
  e.method = ApproxMethod::diffuse;
  e.d = d;
  e.sigma_sq = sigma_sq;
  e.epsilon = epsilon;
  e.jnorm_sq_estimate = static_cast<double>(d) * sigma_sq / v_eff;
  e.value = epsilon * std::sqrt(v_eff / (static_cast<double>(d) * sigma_sq));
  return e;
}

double jnorm_sq_peaked(const Matrix& w, const ProbabilityVector& o, std::size_t k) {
  if (w.rows != o.size()) throw Error(ErrorCode::shape_mismatch, "W rows != len(o)");
  if (k >= o.size()) throw Error(ErrorCode::invalid_argument, "dominant index out of range");
  for (double p : o.values()) {
    if (p > o[k]) throw Error(ErrorCode::invalid_argument, "index " + std::to_string(k) + " is not the argmax of o");
  }
  CompensatedSum total;
  const auto wk = w.row(k);
  for (std::size_t j = 0; j < o.size(); ++j) {
    if (j == k || o[j] == 0.0) continue;
    total.add(o[j] * o[j] * squared_distance(w.row(j), wk));
  }
  return total.value();
}

ApproxEstimate delta_tcb_peaked(const Matrix& w, const ProbabilityVector& o, std::size_t k, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_argument, "epsilon must be > 0");
  ApproxEstimate e;
  e.method = ApproxMethod::peaked_competitor;
  e.epsilon = epsilon;
  e.d = w.cols;
  e.dominant_index = k;
  e.jnorm_sq_estimate = jnorm_sq_peaked(w, o, k);
  e.saturated = !(e.jnorm_sq_estimate > 0.0);
  e.value = e.saturated ? std::numeric_limits<double>::infinity() : epsilon / std::sqrt(e.jnorm_sq_estimate);
  return e;
}

Regime classify_regime(double v_eff, double veff_low, double veff_high) {
  if (!(veff_low < veff_high)) throw Error(ErrorCode::invalid_argument, "veff_low must be < veff_high");
  if (v_eff < veff_low) return Regime::peaked;
  if (v_eff > veff_high) return Regime::diffuse;
  return Regime::intermediate;
}

Regime classify_regime(const StabilitySnapshot& snapshot, double veff_low, double veff_high) {
  return classify_regime(snapshot.v_eff, veff_low, veff_high);
}

double empirical_element_variance(const Matrix& w) {
  if (w.values.size() < 2) throw Error(ErrorCode::invalid_argument, "need at least two entries");
  CompensatedSum sum;
  for (double x : w.values) sum.add(x);
  const double mean = sum.value() / static_cast<double>(w.values.size());
  CompensatedSum sq;
  for (double x : w.values) sq.add((x - mean) * (x - mean));
  return sq.value() / static_cast<double>(w.values.size());
}

}  // namespace tcb
