#pragma once

// Monte-Carlo checks of the statistical approximations under an i.i.d.
// Gaussian weight ensemble.

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "tcb/linalg.hpp"
#include "tcb/stability_core.hpp"
#include "tcb/stats_report.hpp"

namespace tcb {

struct FixedProbs {
  std::vector<double> probs;
};
struct UniformOverM {
  std::size_t m = 1;
};
struct Zipf {
  double exponent = 1.0;
};
struct PeakedProbs {
  double margin = 0.0;  // top1 logit minus each competitor logit
  std::size_t n_competitors = 1;
};

using ProbFamily = std::variant<FixedProbs, UniformOverM, Zipf, PeakedProbs>;

struct EnsembleSpec {
  std::size_t vocab_v = 2;
  std::size_t dim_d = 1;
  double sigma_sq = 1.0;
  std::uint64_t seed = 0;
  ProbFamily o_family = UniformOverM{2};
  std::size_t n_draws = 1;

  void validate() const;
};

// Deterministic distribution described by the family (length vocab_v).
ProbabilityVector family_probabilities(const EnsembleSpec& spec);

// V x d, entries sigma * N(0, 1); fully determined by (seed, draw_index).
Matrix draw_weight_matrix(const EnsembleSpec& spec, std::uint64_t draw_index);

struct EnsembleResult {
  double mean_exact_jnorm_sq = 0.0;
  double predicted_jnorm_sq = 0.0;  // d sigma^2 ||M||_F^2
  double rms_vs_mean_ratio = 1.0;   // sqrt(E||J||^2) / E||J||
  double relative_error = 0.0;      // |mean - predicted| / predicted (0 when both vanish)
  double standard_error = 0.0;      // of the mean over draws
  std::vector<double> per_draw;
};

// Holds o fixed while drawing W, so the only gap to the prediction is Monte-Carlo noise.
EnsembleResult validate_expectation_bridge(const EnsembleSpec& spec);

struct DiffuseScalingConfig {
  std::vector<std::size_t> ms{64, 256, 1024, 4096};
  std::size_t dim_d = 64;
  double sigma_sq = 1.0;
  std::size_t n_seeds = 20;
  // h = (h_scale / sigma) u with u uniform on the unit sphere, so logits have
  // the same law for every sigma.
  double h_scale = 0.1;
  double epsilon = kDefaultEpsilon;
  std::uint64_t seed = 0;
};

struct ScalingPoint {
  std::size_t m = 0;
  double mean_v_eff = 0.0;
  double mean_delta = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;  // saturated draws
};

struct DiffuseScalingResult {
  std::vector<ScalingPoint> points;
  LinearFit log_log_fit;  // log(mean delta) against log(mean v_eff)
  std::size_t excluded = 0;
};

// End-to-end: vocabulary of m tokens, o = softmax(W h) per draw.
DiffuseScalingResult measure_diffuse_scaling(const DiffuseScalingConfig& config);

enum class CorrelationRegime { diverse, peaked };
const char* to_string(CorrelationRegime regime);
CorrelationRegime parse_correlation_regime(const std::string& name);

struct CorrelationConfig {
  std::size_t n_samples = 300;
  CorrelationRegime regime = CorrelationRegime::diverse;
  std::uint64_t seed = 0;
  std::size_t vocab_v = 512;
  std::size_t dim_d = 64;
  double epsilon = kDefaultEpsilon;
};

struct CorrelationStudy {
  double corr_delta_veff = 0.0;
  double corr_delta_gamma = 0.0;
  double corr_gamma_veff = 0.0;
  std::size_t n_used = 0;
  std::size_t n_excluded = 0;  // saturated or outside the regime window
  std::vector<StabilitySnapshot> samples;

  ReportTable summary_table() const;
};

// diverse: ||h|| log-uniform over [1e-2, 10^0.3], V_eff spans decades.
// peaked:  ||h|| log-uniform over [10^0.6, 10^1.0], kept when 1.05 <= V_eff < 1.5.
CorrelationStudy synthetic_correlation_study(const CorrelationConfig& config);

// Correlations over arbitrary snapshots (e.g. from a manifest); saturated ones are skipped.
CorrelationStudy correlate_snapshots(std::vector<StabilitySnapshot> snapshots);

}  // namespace tcb
