#include "tcb/perturb_probe.hpp"

#include <algorithm>
#include <cmath>

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

std::vector<double> shifted(std::span<const double> h, std::span<const double> u, double r) {
  std::vector<double> out(h.begin(), h.end());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += r * u[k];
  return out;
}

std::size_t argmax_at(const Matrix& w, std::span<const double> h, std::span<const double> u, double r) {
  return argmax_lowest(blocked_matvec(w, shifted(h, u, r)));
}

}  // namespace

std::vector<double> probe_direction(std::size_t d, std::uint64_t seed, std::uint64_t index) {
  auto rng = make_stream(seed, streams::directions, index);
  return random_unit_vector(rng, d);
}

ProbeResult probe_at_radius(const Matrix& w, std::span<const double> h, double radius, std::size_t n_directions,
                            std::uint64_t seed) {
  if (!(radius >= 0.0) || !std::isfinite(radius)) throw Error(ErrorCode::invalid_argument, "radius must be finite and >= 0");
  if (n_directions == 0) throw Error(ErrorCode::invalid_argument, "need at least one direction");
  if (h.size() != w.cols) throw Error(ErrorCode::shape_mismatch, "h length != d");

  const auto z0 = blocked_matvec(w, h);
  const auto o0 = softmax(z0);
  const std::size_t top0 = argmax_lowest(z0);

  std::vector<double> change(n_directions);
  std::vector<char> flipped(n_directions, 0);
  parallel_for(n_directions, [&](std::size_t i) {
    const auto u = probe_direction(w.cols, seed, i);
    const auto z = blocked_matvec(w, shifted(h, u, radius));
    const auto o = softmax(z);
    double sq = 0.0;
    for (std::size_t j = 0; j < o.size(); ++j) {
      const double diff = o[j] - o0[j];
      sq += diff * diff;
    }
    change[i] = std::sqrt(sq);
    flipped[i] = argmax_lowest(z) != top0;
  });

  ProbeResult r;
  r.radius = radius;
  r.n_directions = n_directions;
  r.seed = seed;
  CompensatedSum total;
  for (std::size_t i = 0; i < n_directions; ++i) {
    r.max_delta_o_norm = std::max(r.max_delta_o_norm, change[i]);
    total.add(change[i]);
    r.n_flips += flipped[i] ? 1 : 0;
  }
  r.mean_delta_o_norm = total.value() / static_cast<double>(n_directions);
  r.flip_observed = r.n_flips > 0;
  return r;
}

FlipSearch flip_radius(const Matrix& w, std::span<const double> h, std::span<const double> direction,
                       double max_radius, double tol) {
  if (direction.size() != w.cols || h.size() != w.cols) throw Error(ErrorCode::shape_mismatch, "h/direction length != d");
  if (!(tol > 0.0)) throw Error(ErrorCode::invalid_argument, "tol must be > 0");
  if (!(max_radius > 0.0)) throw Error(ErrorCode::invalid_argument, "max_radius must be > 0");
  const double len = norm2(direction);
  if (!(len > 0.0)) throw Error(ErrorCode::invalid_argument, "direction must be nonzero");
  std::vector<double> u(direction.begin(), direction.end());
  for (auto& x : u) x /= len;

  FlipSearch result;
  const auto z0 = blocked_matvec(w, h);
  result.boundary_start = logit_margin(z0).gamma == 0.0;
  const std::size_t top0 = argmax_lowest(z0);

  double lo = 0.0;
  std::optional<double> hi;
  for (std::size_t s = 1; s <= kFlipScanSteps; ++s) {
    const double r = max_radius * static_cast<double>(s) / static_cast<double>(kFlipScanSteps);
    if (argmax_at(w, h, u, r) != top0) {
      hi = r;
      break;
    }
    lo = r;
  }
  if (!hi) return result;

  double upper = *hi;
  while (upper - lo > tol) {
    const double mid = 0.5 * (lo + upper);
    if (argmax_at(w, h, u, mid) != top0) {
      upper = mid;
    } else {
      lo = mid;
    }
  }
  result.radius = 0.5 * (lo + upper);
  return result;
}

SafetyMarginReport safety_margin_report(const Matrix& w, std::span<const double> h, double epsilon,
                                        std::size_t n_directions, std::uint64_t seed) {
  SafetyMarginReport report;
  report.snapshot = delta_tcb(w, h, epsilon);
  if (report.snapshot.saturated) {
    report.skipped_saturated = true;
    return report;
  }
  const double radius = report.snapshot.delta_tcb;
  report.first_order_warning = radius * std::sqrt(report.snapshot.jnorm_sq) > kFirstOrderWarningThreshold;
  report.probe = probe_at_radius(w, h, radius, n_directions, seed);
  report.bound_respected = report.probe->max_delta_o_norm <= kBoundSlack * epsilon;
  return report;
}

}  // namespace tcb
