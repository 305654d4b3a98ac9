#pragma once

// Embedding-manipulation experiment: move the K strongest competitors toward
// (cluster) or away from (disperse) the top-1 embedding while o stays frozen.

#include <cstdint>
#include <span>
#include <vector>

#include "tcb/linalg.hpp"
#include "tcb/stability_core.hpp"
#include "tcb/stats_report.hpp"

namespace tcb {

struct GeometryExperiment {
  std::size_t k_competitors = 10;
  double alpha = 0.5;
  double beta = 0.5;
  double epsilon = kDefaultEpsilon;
};

struct GeometryOutcome {
  double delta_orig = 0.0;
  double delta_cluster = 0.0;
  double delta_disperse = 0.0;
  bool hypothesis_held = false;
  bool applicable = true;  // false when o is one-hot (all three deltas infinite)
  double v_eff = 0.0;
  std::uint64_t probs_hash = 0;
};

// K highest-probability tokens other than top1; ties by lowest index.
std::vector<std::size_t> select_competitors(const ProbabilityVector& o, std::size_t k);

Matrix cluster_competitors(const Matrix& w, const ProbabilityVector& o, std::size_t k, double alpha);
Matrix disperse_competitors(const Matrix& w, const ProbabilityVector& o, std::size_t k, double beta);

std::uint64_t hash_probabilities(const ProbabilityVector& o);

GeometryOutcome run_geometry_experiment(const Matrix& w, const ProbabilityVector& o,
                                        const GeometryExperiment& exp);
// o = softmax(W h), computed once and frozen.
GeometryOutcome run_geometry_experiment(const Matrix& w, std::span<const double> h,
                                        const GeometryExperiment& exp);

struct GeometryInstance {
  Matrix w;
  ProbabilityVector o;
};

enum class SyntheticGeometryFamily {
  peaked,            // o_top1 fixed, K competitors share the rest minus a residual tail
  softmax_gaussian,  // o = softmax(t g) with t log-uniform; spans all V_eff buckets
};

struct SyntheticGeometrySpec {
  std::size_t n_instances = 100;
  std::size_t vocab_v = 64;
  std::size_t dim_d = 32;
  std::size_t k_competitors = 10;
  double top1_prob = 0.9;
  double residual_mass = 1e-3;
  SyntheticGeometryFamily family = SyntheticGeometryFamily::peaked;
  std::uint64_t seed = 0;
};

// Rows of W are random unit vectors.
std::vector<GeometryInstance> make_synthetic_instances(const SyntheticGeometrySpec& spec);

std::vector<GeometryOutcome> run_geometry_batch(const std::vector<GeometryInstance>& instances,
                                                const GeometryExperiment& exp);

struct BucketSummary {
  std::string label;
  std::size_t n = 0;
  std::size_t held = 0;
  double rate() const { return n == 0 ? 0.0 : static_cast<double>(held) / static_cast<double>(n); }
};

struct GeometryBatchReport {
  std::vector<BucketSummary> buckets;  // "<20", "20-100", ">100"
  BucketSummary overall;
  std::size_t not_applicable = 0;

  ReportTable table() const;
};

// Bucket bounds: V_eff < 20, 20 <= V_eff <= 100, V_eff > 100.
GeometryBatchReport batch_geometry(const std::vector<GeometryOutcome>& outcomes);

}  // namespace tcb
