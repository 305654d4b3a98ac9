#include "tcb/geometry_lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "tcb/error.hpp"
#include "tcb/parallel.hpp"
#include "tcb/random.hpp"

namespace tcb {

namespace {

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// w_j <- w_j + step (w_top1 - w_j) for each competitor j.
Matrix move_competitors(const Matrix& w, const ProbabilityVector& o, std::size_t k, double step) {
  if (w.rows != o.size()) throw Error(ErrorCode::shape_mismatch, "W rows != len(o)");
  const auto competitors = select_competitors(o, k);
  const std::size_t top1 = argmax_lowest(o.values());
  Matrix out = w;
  const auto anchor = w.row(top1);
  for (std::size_t j : competitors) {
    auto row = out.row(j);
    for (std::size_t c = 0; c < w.cols; ++c) row[c] += step * (anchor[c] - row[c]);
  }
  return out;
}

}  // namespace

std::vector<std::size_t> select_competitors(const ProbabilityVector& o, std::size_t k) {
  if (k >= o.size()) {
    throw Error(ErrorCode::invalid_argument, "K=" + std::to_string(k) + " must be < V=" + std::to_string(o.size()));
  }
  const std::size_t top1 = argmax_lowest(o.values());
  std::vector<std::size_t> order(o.size());
  std::iota(order.begin(), order.end(), 0);
  order.erase(order.begin() + static_cast<std::ptrdiff_t>(top1));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return o[a] > o[b]; });
  order.resize(k);
  return order;
}

Matrix cluster_competitors(const Matrix& w, const ProbabilityVector& o, std::size_t k, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must lie in [0, 1]");
  return move_competitors(w, o, k, alpha);
}

Matrix disperse_competitors(const Matrix& w, const ProbabilityVector& o, std::size_t k, double beta) {
  if (!(beta >= 0.0)) throw Error(ErrorCode::invalid_argument, "beta must be >= 0");
  return move_competitors(w, o, k, -beta);
}

std::uint64_t hash_probabilities(const ProbabilityVector& o) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double p : o.values()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &p, sizeof p);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

GeometryOutcome run_geometry_experiment(const Matrix& w, const ProbabilityVector& o, const GeometryExperiment& exp) {
  GeometryOutcome out;
  out.probs_hash = hash_probabilities(o);
  const auto orig = delta_tcb_from_probs(w, o, exp.epsilon);
  out.v_eff = orig.v_eff;
  out.delta_orig = orig.delta_tcb;
  out.delta_cluster = delta_tcb_from_probs(cluster_competitors(w, o, exp.k_competitors, exp.alpha), o, exp.epsilon).delta_tcb;
  out.delta_disperse =
      delta_tcb_from_probs(disperse_competitors(w, o, exp.k_competitors, exp.beta), o, exp.epsilon).delta_tcb;
  if (hash_probabilities(o) != out.probs_hash) throw Error(ErrorCode::invalid_argument, "o changed during experiment");
  out.applicable = !orig.saturated;
  out.hypothesis_held = out.applicable && out.delta_cluster > out.delta_orig && out.delta_orig > out.delta_disperse;
  return out;
}

GeometryOutcome run_geometry_experiment(const Matrix& w, std::span<const double> h, const GeometryExperiment& exp) {
  const auto o = softmax(blocked_matvec(w, h));
  return run_geometry_experiment(w, o, exp);
}

std::vector<GeometryInstance> make_synthetic_instances(const SyntheticGeometrySpec& spec) {
  if (spec.k_competitors + 1 > spec.vocab_v) throw Error(ErrorCode::invalid_argument, "need K < V");
  if (spec.dim_d == 0) throw Error(ErrorCode::invalid_argument, "dim_d must be positive");
  if (spec.family == SyntheticGeometryFamily::peaked &&
      !(spec.top1_prob > 0.0 && spec.top1_prob < 1.0 && spec.residual_mass >= 0.0 &&
        spec.top1_prob + spec.residual_mass < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "peaked family needs 0 < top1_prob, top1_prob + residual_mass < 1");
  }

  std::vector<GeometryInstance> out(spec.n_instances);
  parallel_for(spec.n_instances, [&](std::size_t n) {
    auto rng = make_stream(spec.seed, streams::geometry, n);
    Matrix w(spec.vocab_v, spec.dim_d);
    for (std::size_t i = 0; i < spec.vocab_v; ++i) {
      const auto u = random_unit_vector(rng, spec.dim_d);
      std::copy(u.begin(), u.end(), w.row(i).begin());
    }

    std::vector<double> p(spec.vocab_v, 0.0);
    if (spec.family == SyntheticGeometryFamily::peaked) {
      std::vector<std::size_t> order(spec.vocab_v);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      const std::size_t tail = spec.vocab_v - spec.k_competitors - 1;
      const double residual = tail > 0 ? spec.residual_mass : 0.0;
      const double shared = 1.0 - spec.top1_prob - residual;

      p[order[0]] = spec.top1_prob;
      std::uniform_real_distribution<double> weight(0.2, 1.0);
      std::vector<double> weights(spec.k_competitors);
      double total = 0.0;
      for (auto& x : weights) total += x = weight(rng);
      for (std::size_t j = 0; j < spec.k_competitors; ++j) p[order[1 + j]] = shared * weights[j] / total;
      for (std::size_t j = 0; j < tail; ++j) p[order[1 + spec.k_competitors + j]] = residual / static_cast<double>(tail);
    } else {
      std::uniform_real_distribution<double> log_temp(-1.0, 1.3);
      const double temp = std::pow(10.0, log_temp(rng));
      const auto o = softmax(gaussian_vector(rng, spec.vocab_v, temp));
      p.assign(o.values().begin(), o.values().end());
    }
    out[n] = GeometryInstance{std::move(w), ProbabilityVector(std::move(p))};
  });
  return out;
}

std::vector<GeometryOutcome> run_geometry_batch(const std::vector<GeometryInstance>& instances,
                                                const GeometryExperiment& exp) {
  std::vector<GeometryOutcome> out(instances.size());
  parallel_for(instances.size(), [&](std::size_t i) { out[i] = run_geometry_experiment(instances[i].w, instances[i].o, exp); });
  return out;
}

GeometryBatchReport batch_geometry(const std::vector<GeometryOutcome>& outcomes) {
  GeometryBatchReport report;
  report.buckets = {{"Low V_eff (<20)", 0, 0}, {"Medium V_eff (20-100)", 0, 0}, {"High V_eff (>100)", 0, 0}};
  report.overall.label = "Overall";
  for (const auto& o : outcomes) {
    if (!o.applicable) {
      ++report.not_applicable;
      continue;
    }
    const std::size_t b = o.v_eff < 20.0 ? 0 : (o.v_eff <= 100.0 ? 1 : 2);
    ++report.buckets[b].n;
    ++report.overall.n;
    if (o.hypothesis_held) {
      ++report.buckets[b].held;
      ++report.overall.held;
    }
  }
  return report;
}

ReportTable GeometryBatchReport::table() const {
  ReportTable t({"bucket", "n", "held", "hypothesis_held_pct"},
                "Share of instances with delta_cluster > delta_orig > delta_disperse");
  auto add = [&](const BucketSummary& b) {
    Cell pct = b.n == 0 ? Cell{NotAvailable{}} : Cell{100.0 * b.rate()};
    t.add_row({b.label, static_cast<std::int64_t>(b.n), static_cast<std::int64_t>(b.held), pct});
  };
  for (const auto& b : buckets) add(b);
  add(overall);
  return t;
}

}  // namespace tcb
