#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tcb/linalg.hpp"
#include "tcb/stability_core.hpp"

namespace tcb {

struct ProbeResult {
  double radius = 0.0;
  std::size_t n_directions = 0;
  double max_delta_o_norm = 0.0;
  double mean_delta_o_norm = 0.0;
  bool flip_observed = false;
  std::size_t n_flips = 0;
  std::uint64_t seed = 0;
};

// Direction `index` of the probe stream for `seed`: Gaussian, normalized.
std::vector<double> probe_direction(std::size_t d, std::uint64_t seed, std::uint64_t index);

// ||softmax(W(h + r u)) - softmax(W h)||_2 over n random unit directions u.
ProbeResult probe_at_radius(const Matrix& w, std::span<const double> h, double radius, std::size_t n_directions,
                            std::uint64_t seed);

inline constexpr std::size_t kFlipScanSteps = 64;

struct FlipSearch {
  std::optional<double> radius;  // none when no flip within max_radius
  bool boundary_start = false;   // h starts on a top-1 tie
};

// Coarse scan of 64 steps along the unit direction, then bisection to `tol`
// inside the first bracket where the argmax changes.
FlipSearch flip_radius(const Matrix& w, std::span<const double> h, std::span<const double> direction,
                       double max_radius, double tol);

inline constexpr double kFirstOrderWarningThreshold = 0.1;
inline constexpr double kBoundSlack = 1.1;

struct SafetyMarginReport {
  StabilitySnapshot snapshot;
  std::optional<ProbeResult> probe;  // skipped when saturated
  bool skipped_saturated = false;
  bool first_order_warning = false;  // radius * ||J||_F > 0.1
  bool bound_respected = false;      // max ||delta o|| <= 1.1 epsilon
};

SafetyMarginReport safety_margin_report(const Matrix& w, std::span<const double> h, double epsilon,
                                        std::size_t n_directions, std::uint64_t seed);

}  // namespace tcb
