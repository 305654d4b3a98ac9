#include "tcb/ensemble_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tcb/error.hpp"
#include "tcb/jacobian_oracle.hpp"
#include "tcb/parallel.hpp"
#include "tcb/random.hpp"

namespace tcb {

namespace {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double sigma, std::mt19937_64& rng) {
  return Matrix(rows, cols, gaussian_vector(rng, rows * cols, sigma));
}

double mean_of(const std::vector<double>& v) {
  CompensatedSum s;
  for (double x : v) s.add(x);
  return s.value() / static_cast<double>(v.size());
}

struct RegimeWindow {
  double log10_h_min;
  double log10_h_max;
  double veff_min;  // inclusive
  double veff_max;  // exclusive
};

constexpr RegimeWindow kDiverseWindow{-2.0, 0.3, 1.0, std::numeric_limits<double>::infinity()};
constexpr RegimeWindow kPeakedWindow{0.6, 1.0, 1.05, 1.5};
constexpr std::size_t kAttemptBatch = 256;
constexpr std::size_t kMaxAttemptsPerSample = 50;

}  // namespace

void EnsembleSpec::validate() const {
  if (vocab_v == 0 || dim_d == 0) throw Error(ErrorCode::invalid_argument, "vocab_v and dim_d must be positive");
  if (!(sigma_sq > 0.0)) throw Error(ErrorCode::invalid_argument, "sigma_sq must be > 0");
  if (n_draws == 0) throw Error(ErrorCode::invalid_argument, "n_draws must be >= 1");
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, FixedProbs>) {
          if (f.probs.size() != vocab_v) throw Error(ErrorCode::invalid_argument, "fixed o length != vocab_v");
        } else if constexpr (std::is_same_v<T, UniformOverM>) {
          if (f.m == 0 || f.m > vocab_v) throw Error(ErrorCode::invalid_argument, "uniform_over_m needs 1 <= m <= V");
        } else if constexpr (std::is_same_v<T, PeakedProbs>) {
          if (f.n_competitors + 1 > vocab_v) throw Error(ErrorCode::invalid_argument, "peaked needs n_competitors < V");
          if (!std::isfinite(f.margin)) throw Error(ErrorCode::invalid_argument, "peaked margin must be finite");
        } else {
          if (!std::isfinite(f.exponent)) throw Error(ErrorCode::invalid_argument, "zipf exponent must be finite");
        }
      },
      o_family);
}

ProbabilityVector family_probabilities(const EnsembleSpec& spec) {
  spec.validate();
  const std::size_t v = spec.vocab_v;
  return std::visit(
      [&](const auto& f) -> ProbabilityVector {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, FixedProbs>) {
          return ProbabilityVector(f.probs);
        } else if constexpr (std::is_same_v<T, UniformOverM>) {
          std::vector<double> p(v, 0.0);
          std::fill_n(p.begin(), f.m, 1.0 / static_cast<double>(f.m));
          return ProbabilityVector(std::move(p));
        } else if constexpr (std::is_same_v<T, Zipf>) {
          std::vector<double> p(v);
          double total = 0.0;
          for (std::size_t i = 0; i < v; ++i) total += p[i] = std::pow(static_cast<double>(i + 1), -f.exponent);
          for (auto& x : p) x /= total;
          return ProbabilityVector(std::move(p));
        } else {
          std::vector<double> logits(f.n_competitors + 1, 0.0);
          logits[0] = f.margin;
          const auto support = softmax(logits);
          std::vector<double> p(v, 0.0);
          std::copy(support.values().begin(), support.values().end(), p.begin());
          return ProbabilityVector(std::move(p));
        }
      },
      spec.o_family);
}

Matrix draw_weight_matrix(const EnsembleSpec& spec, std::uint64_t draw_index) {
  spec.validate();
  auto rng = make_stream(spec.seed, streams::weights, draw_index);
  return gaussian_matrix(spec.vocab_v, spec.dim_d, std::sqrt(spec.sigma_sq), rng);
}

EnsembleResult validate_expectation_bridge(const EnsembleSpec& spec) {
  const auto o = family_probabilities(spec);
  EnsembleResult r;
  r.per_draw.resize(spec.n_draws);
  parallel_for(spec.n_draws, [&](std::size_t i) { r.per_draw[i] = jacobian_norm_sq(draw_weight_matrix(spec, i), o); });

  r.mean_exact_jnorm_sq = mean_of(r.per_draw);
  r.predicted_jnorm_sq = static_cast<double>(spec.dim_d) * spec.sigma_sq * oracle::m_norm_sq(o);

  const double diff = std::abs(r.mean_exact_jnorm_sq - r.predicted_jnorm_sq);
  if (r.predicted_jnorm_sq > 0.0) {
    r.relative_error = diff / r.predicted_jnorm_sq;
  } else {
    r.relative_error = diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }

  if (spec.n_draws > 1) {
    CompensatedSum ss;
    for (double x : r.per_draw) ss.add((x - r.mean_exact_jnorm_sq) * (x - r.mean_exact_jnorm_sq));
    const double n = static_cast<double>(spec.n_draws);
    r.standard_error = std::sqrt(ss.value() / (n - 1.0) / n);
  }

  std::vector<double> norms(r.per_draw.size());
  std::transform(r.per_draw.begin(), r.per_draw.end(), norms.begin(), [](double x) { return std::sqrt(x); });
  const double mean_norm = mean_of(norms);
  r.rms_vs_mean_ratio = mean_norm > 0.0 ? std::sqrt(r.mean_exact_jnorm_sq) / mean_norm : 1.0;
  return r;
}

DiffuseScalingResult measure_diffuse_scaling(const DiffuseScalingConfig& config) {
  if (config.ms.empty() || config.n_seeds == 0 || config.dim_d == 0) {
    throw Error(ErrorCode::invalid_argument, "scaling study needs vocabulary sizes, seeds and d > 0");
  }
  if (!(config.sigma_sq > 0.0) || !(config.h_scale >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "sigma_sq must be > 0 and h_scale >= 0");
  }
  const double sigma = std::sqrt(config.sigma_sq);
  const std::size_t n_m = config.ms.size();
  const std::size_t total = n_m * config.n_seeds;

  std::vector<StabilitySnapshot> snaps(total);
  parallel_for(total, [&](std::size_t t) {
    const std::size_t m = config.ms[t / config.n_seeds];
    const std::size_t s = t % config.n_seeds;
    if (m == 0) throw Error(ErrorCode::invalid_argument, "vocabulary size must be positive");
    const std::uint64_t index = splitmix64(m) ^ s;
    auto wrng = make_stream(config.seed, streams::weights, index);
    auto hrng = make_stream(config.seed, streams::hidden, index);
    const Matrix w = gaussian_matrix(m, config.dim_d, sigma, wrng);
    auto h = random_unit_vector(hrng, config.dim_d);
    for (auto& x : h) x *= config.h_scale / sigma;
    if (m == 1) {
      StabilitySnapshot one;
      one.saturated = true;
      one.v_eff = 1.0;
      one.delta_tcb = std::numeric_limits<double>::infinity();
      snaps[t] = one;
      return;
    }
    snaps[t] = delta_tcb(w, h, config.epsilon);
  });

  DiffuseScalingResult result;
  std::vector<double> log_veff, log_delta;
  for (std::size_t k = 0; k < n_m; ++k) {
    ScalingPoint p;
    p.m = config.ms[k];
    CompensatedSum veff, delta;
    for (std::size_t s = 0; s < config.n_seeds; ++s) {
      const auto& snap = snaps[k * config.n_seeds + s];
      if (snap.saturated) {
        ++p.excluded;
        continue;
      }
      ++p.used;
      veff.add(snap.v_eff);
      delta.add(snap.delta_tcb);
    }
    if (p.used > 0) {
      p.mean_v_eff = veff.value() / static_cast<double>(p.used);
      p.mean_delta = delta.value() / static_cast<double>(p.used);
      log_veff.push_back(std::log(p.mean_v_eff));
      log_delta.push_back(std::log(p.mean_delta));
    }
    result.excluded += p.excluded;
    result.points.push_back(p);
  }
  if (log_veff.size() < 2) throw Error(ErrorCode::degenerate, "fewer than two vocabulary sizes with finite deltas");
  result.log_log_fit = linear_fit(log_veff, log_delta);
  return result;
}

const char* to_string(CorrelationRegime regime) {
  return regime == CorrelationRegime::diverse ? "diverse" : "peaked";
}

CorrelationRegime parse_correlation_regime(const std::string& name) {
  if (name == "diverse") return CorrelationRegime::diverse;
  if (name == "peaked") return CorrelationRegime::peaked;
  throw Error(ErrorCode::invalid_argument, "unknown regime '" + name + "'");
}

CorrelationStudy correlate_snapshots(std::vector<StabilitySnapshot> snapshots) {
  CorrelationStudy study;
  std::vector<double> delta, veff, gamma;
  for (auto& s : snapshots) {
    if (s.saturated || !std::isfinite(s.gamma_z)) {
      ++study.n_excluded;
      continue;
    }
    delta.push_back(s.delta_tcb);
    veff.push_back(s.v_eff);
    gamma.push_back(s.gamma_z);
    study.samples.push_back(s);
  }
  study.n_used = delta.size();
  if (study.n_used < 2) throw Error(ErrorCode::degenerate, "fewer than two non-saturated samples");
  study.corr_delta_veff = pearson(delta, veff);
  study.corr_delta_gamma = pearson(delta, gamma);
  study.corr_gamma_veff = pearson(gamma, veff);
  return study;
}

CorrelationStudy synthetic_correlation_study(const CorrelationConfig& config) {
  if (config.n_samples < 30) throw Error(ErrorCode::invalid_argument, "correlation study needs n_samples >= 30");
  const RegimeWindow window = config.regime == CorrelationRegime::diverse ? kDiverseWindow : kPeakedWindow;
  const std::size_t max_attempts = config.n_samples * kMaxAttemptsPerSample;

  std::vector<StabilitySnapshot> accepted;
  std::size_t rejected = 0;
  for (std::size_t base = 0; accepted.size() < config.n_samples; base += kAttemptBatch) {
    if (base >= max_attempts) {
      throw Error(ErrorCode::degenerate, "regime window accepted only " + std::to_string(accepted.size()) +
                                             " samples in " + std::to_string(max_attempts) + " attempts");
    }
    std::vector<StabilitySnapshot> batch(kAttemptBatch);
    parallel_for(kAttemptBatch, [&](std::size_t j) {
      auto rng = make_stream(config.seed, streams::correlation, base + j);
      const Matrix w = gaussian_matrix(config.vocab_v, config.dim_d, 1.0, rng);
      auto h = random_unit_vector(rng, config.dim_d);
      std::uniform_real_distribution<double> exponent(window.log10_h_min, window.log10_h_max);
      const double scale = std::pow(10.0, exponent(rng));
      for (auto& x : h) x *= scale;
      batch[j] = delta_tcb(w, h, config.epsilon);
    });
    for (const auto& s : batch) {
      if (accepted.size() == config.n_samples) break;
      if (s.saturated || s.v_eff < window.veff_min || !(s.v_eff < window.veff_max)) {
        ++rejected;
        continue;
      }
      accepted.push_back(s);
    }
  }
  auto study = correlate_snapshots(std::move(accepted));
  study.n_excluded += rejected;
  return study;
}

ReportTable CorrelationStudy::summary_table() const {
  ReportTable t({"pair", "pearson_r", "n_used", "n_excluded"}, "Pearson correlations between stability metrics");
  const auto used = static_cast<std::int64_t>(n_used);
  const auto excl = static_cast<std::int64_t>(n_excluded);
  t.add_row({std::string("delta_tcb~v_eff"), corr_delta_veff, used, excl});
  t.add_row({std::string("delta_tcb~gamma_z"), corr_delta_gamma, used, excl});
  t.add_row({std::string("gamma_z~v_eff"), corr_gamma_veff, used, excl});
  return t;
}

}  // namespace tcb
