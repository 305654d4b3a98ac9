#include "tcb/stability_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tcb/error.hpp"
#include "tcb/parallel.hpp"

namespace tcb {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

void check_shapes(const Matrix& w, const ProbabilityVector& o) {
  if (w.rows != o.size()) {
    throw Error(ErrorCode::shape_mismatch,
                "W has " + std::to_string(w.rows) + " rows but o has " + std::to_string(o.size()) + " entries");
  }
}

std::size_t block_count(std::size_t rows, std::size_t block_rows) {
  if (block_rows == 0) throw Error(ErrorCode::invalid_argument, "block_rows must be positive");
  return (rows + block_rows - 1) / block_rows;
}

// Top-two indices by value; lowest index wins ties.
LogitMargin top_two(std::span<const double> v) {
  if (v.size() < 2) throw Error(ErrorCode::invalid_argument, "need at least two entries for a margin");
  std::size_t first = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[first]) first = i;
  }
  std::size_t second = first == 0 ? 1 : 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i != first && v[i] > v[second]) second = i;
  }
  return {v[first] - v[second], first, second};
}

StabilitySnapshot finish_snapshot(const Matrix& w, const ProbabilityVector& o, double epsilon,
                                  CoreOptions options) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_argument, "epsilon must be > 0");
  check_shapes(w, o);

  StabilitySnapshot s;
  s.epsilon = epsilon;
  s.moments = moments(o);
  s.v_eff = 1.0 / s.moments.s2;
  const auto mu = mean_embedding(w, o, options);
  s.mean_embedding_norm = norm2(mu);
  s.jnorm_sq = jacobian_norm_sq(w, o, options);
  return s;
}

void apply_delta(StabilitySnapshot& s) {
  // One-hot at float64 precision: every competitor is below half an ulp of 1.
  s.saturated = s.jnorm_sq <= 0.0 || s.top1_prob >= 1.0;
  s.delta_tcb = s.saturated ? kInfinity : s.epsilon / std::sqrt(s.jnorm_sq);
}

}  // namespace

ProbabilityVector::ProbabilityVector(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw Error(ErrorCode::invalid_argument, "probability vector is empty");
  CompensatedSum total;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "probability outside [0,1]: " + std::to_string(p));
    }
    total.add(p);
  }
  if (std::abs(total.value() - 1.0) > kProbabilitySumTolerance) {
    throw Error(ErrorCode::invalid_argument, "probabilities sum to " + std::to_string(total.value()));
  }
}

ProbabilityVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw Error(ErrorCode::invalid_argument, "softmax of an empty vector");
  const double max = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(max)) throw Error(ErrorCode::non_finite, "non-finite logit");
  std::vector<double> out(logits.size());
  CompensatedSum total;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) throw Error(ErrorCode::non_finite, "non-finite logit");
    out[i] = std::exp(logits[i] - max);
    total.add(out[i]);
  }
  const double inv = 1.0 / total.value();
  for (auto& p : out) p *= inv;
  return ProbabilityVector(std::move(out));
}

double effective_vocab_size(const ProbabilityVector& o) { return 1.0 / moments(o).s2; }

MomentSet moments(const ProbabilityVector& o) {
  CompensatedSum s2, s3, s4;
  for (double p : o.values()) {
    const double p2 = p * p;
    s2.add(p2);
    s3.add(p2 * p);
    s4.add(p2 * p2);
  }
  return {s2.value(), s3.value(), s4.value()};
}

LogitMargin logit_margin(std::span<const double> logits) { return top_two(logits); }

std::vector<double> mean_embedding(const Matrix& w, const ProbabilityVector& o, CoreOptions options) {
  check_shapes(w, o);
  const std::size_t d = w.cols;
  const std::size_t n_blocks = block_count(w.rows, options.block_rows);

  std::vector<std::vector<CompensatedSum>> partial(n_blocks, std::vector<CompensatedSum>(d));
  parallel_for(n_blocks, [&](std::size_t b) {
    const std::size_t begin = b * options.block_rows;
    const std::size_t end = std::min(w.rows, begin + options.block_rows);
    auto& acc = partial[b];
    for (std::size_t i = begin; i < end; ++i) {
      const double p = o[i];
      if (p == 0.0) continue;
      const auto row = w.row(i);
      for (std::size_t k = 0; k < d; ++k) acc[k].add(p * row[k]);
    }
  });

  std::vector<double> mu(d);
  for (std::size_t k = 0; k < d; ++k) {
    CompensatedSum total;
    for (std::size_t b = 0; b < n_blocks; ++b) total.add(partial[b][k].value());
    mu[k] = total.value();
  }
  return mu;
}

double jacobian_norm_sq(const Matrix& w, const ProbabilityVector& o, CoreOptions options) {
  check_shapes(w, o);
  const std::size_t d = w.cols;
  const std::size_t n_blocks = block_count(w.rows, options.block_rows);

  // Rows are measured from the most probable embedding p, which avoids the
  // cancellation in w_top - mu near a one-hot o:
  //   w_i - mu = (w_i - p) - sum_j o_j (w_j - p) - (sum_j o_j - 1) p
  // The last term is exact bookkeeping for an o whose sum is off by rounding.
  const auto pivot_index = static_cast<std::size_t>(
      std::distance(o.values().begin(), std::max_element(o.values().begin(), o.values().end())));
  const auto pivot = w.row(pivot_index);

  std::vector<std::vector<CompensatedSum>> mean_partial(n_blocks, std::vector<CompensatedSum>(d));
  std::vector<CompensatedSum> mass_partial(n_blocks);
  parallel_for(n_blocks, [&](std::size_t b) {
    const std::size_t begin = b * options.block_rows;
    const std::size_t end = std::min(w.rows, begin + options.block_rows);
    auto& acc = mean_partial[b];
    for (std::size_t i = begin; i < end; ++i) {
      const double p = o[i];
      if (p == 0.0 || i == pivot_index) continue;
      mass_partial[b].add(p);
      const auto row = w.row(i);
      for (std::size_t k = 0; k < d; ++k) acc[k].add(p * (row[k] - pivot[k]));
    }
  });
  CompensatedSum excess_mass;
  excess_mass.add(o[pivot_index] - 1.0);
  for (const auto& part : mass_partial) excess_mass.add(part.value());

  std::vector<double> centered_mu(d);
  for (std::size_t k = 0; k < d; ++k) {
    CompensatedSum total;
    for (std::size_t b = 0; b < n_blocks; ++b) total.add(mean_partial[b][k].value());
    total.add(excess_mass.value() * pivot[k]);
    centered_mu[k] = total.value();
  }

  std::vector<CompensatedSum> partial(n_blocks);
  parallel_for(n_blocks, [&](std::size_t b) {
    const std::size_t begin = b * options.block_rows;
    const std::size_t end = std::min(w.rows, begin + options.block_rows);
    for (std::size_t i = begin; i < end; ++i) {
      const double p = o[i];
      if (p == 0.0) continue;
      const auto row = w.row(i);
      double dist = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = (row[k] - pivot[k]) - centered_mu[k];
        dist += diff * diff;
      }
      partial[b].add(p * p * dist);
    }
  });

  CompensatedSum total;
  for (const auto& part : partial) total.add(part.value());
  return total.value();
}

StabilitySnapshot delta_tcb_from_logits(const Matrix& w, std::span<const double> logits, double epsilon,
                                        CoreOptions options) {
  if (logits.size() != w.rows) {
    throw Error(ErrorCode::shape_mismatch, "logits length " + std::to_string(logits.size()) +
                                               " != V=" + std::to_string(w.rows));
  }
  const auto o = softmax(logits);
  auto s = finish_snapshot(w, o, epsilon, options);
  const auto margin = logit_margin(logits);
  s.gamma_z = margin.gamma;
  s.top1_id = margin.top1;
  s.top2_id = margin.top2;
  s.top1_prob = o[margin.top1];
  s.top2_prob = o[margin.top2];
  apply_delta(s);
  return s;
}

StabilitySnapshot delta_tcb(const Matrix& w, std::span<const double> h, double epsilon, CoreOptions options) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_argument, "epsilon must be > 0");
  const auto z = blocked_matvec(w, h, options.block_rows);
  return delta_tcb_from_logits(w, z, epsilon, options);
}

StabilitySnapshot delta_tcb_from_probs(const Matrix& w, const ProbabilityVector& o, double epsilon,
                                       CoreOptions options) {
  auto s = finish_snapshot(w, o, epsilon, options);
  if (o.size() >= 2) {
    const auto top = top_two(o.values());
    s.top1_id = top.top1;
    s.top2_id = top.top2;
    s.top1_prob = o[top.top1];
    s.top2_prob = o[top.top2];
    // Softmax is shift-invariant, so log-probability gaps equal logit gaps.
    s.gamma_z = s.top2_prob > 0.0 ? std::log(s.top1_prob) - std::log(s.top2_prob) : kInfinity;
  } else {
    s.top1_prob = o[0];
    s.gamma_z = kInfinity;
  }
  apply_delta(s);
  return s;
}

}  // namespace tcb
