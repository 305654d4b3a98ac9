#pragma once

// Per-step stability series over a generation trace.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcb/linalg.hpp"
#include "tcb/stability_core.hpp"
#include "tcb/stats_report.hpp"
#include "tcb/tensor_store.hpp"

namespace tcb {

struct TraceStep {
  std::size_t step = 0;
  std::size_t token_id = 0;
  StabilitySnapshot snapshot;
  bool greedy_consistent = true;
};

struct TraceRecord {
  std::vector<TraceStep> steps;
  bool greedy = true;
  bool token_ids_present = false;
  double perplexity = 0.0;  // exp(mean -log o_emitted)
  double mean_nll = 0.0;

  std::vector<double> delta_series() const;
  std::vector<double> second_prob_series() const;
  ReportTable table() const;
};

// One step's tensors. At least one of logits / probs / h must be set;
// preference is logits, then probs, then h (via W h).
struct StepInput {
  std::optional<std::vector<double>> h;
  std::optional<std::vector<double>> logits;
  std::optional<std::vector<double>> probs;
  std::optional<std::size_t> token_id;
};

TraceRecord analyze_trace(const Matrix& w, const std::vector<StepInput>& steps, double epsilon = kDefaultEpsilon);

// Reads h_step_NNNN / logits_step_NNNN / probs_step_NNNN entries (contiguous
// from 0) and optional metadata "token_ids".
TraceRecord analyze_trace(const TensorManifest& manifest, double epsilon = kDefaultEpsilon);

struct DipEvent {
  std::size_t step = 0;
  double delta_value = 0.0;
  double baseline = 0.0;
  double severity = 0.0;  // baseline / delta_value

  friend bool operator==(const DipEvent&, const DipEvent&) = default;
};

inline constexpr std::size_t kDefaultDipWindow = 7;
inline constexpr double kDefaultDipSeverity = 3.0;

// Median of the finite values in the length-`window` window centred on `i`,
// shifted to stay inside the series. NaN when no finite value remains.
double rolling_median(std::span<const double> series, std::size_t i, std::size_t window);

// Interior strict local minima whose rolling-median baseline is at least
// `severity_threshold` times the value. Infinite entries never dip.
std::vector<DipEvent> detect_dips(std::span<const double> series, std::size_t window = kDefaultDipWindow,
                                  double severity_threshold = kDefaultDipSeverity);
std::vector<DipEvent> detect_dips(const TraceRecord& trace, std::size_t window = kDefaultDipWindow,
                                  double severity_threshold = kDefaultDipSeverity);

struct CoincidenceReport {
  ReportTable table;
  std::optional<double> fraction;  // none without dips
};

CoincidenceReport dip_spike_coincidence(const TraceRecord& trace, const std::vector<DipEvent>& dips,
                                        std::size_t window = kDefaultDipWindow,
                                        double severity_threshold = kDefaultDipSeverity);

std::string trace_svg(const TraceRecord& trace, const std::vector<DipEvent>& dips);
void render_trace_svg(const TraceRecord& trace, const std::vector<DipEvent>& dips,
                      const std::filesystem::path& path);

}  // namespace tcb
