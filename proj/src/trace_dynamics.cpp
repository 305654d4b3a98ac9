#include "tcb/trace_dynamics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "tcb/error.hpp"
#include "tcb/parallel.hpp"

namespace tcb {

namespace {

constexpr double kRenormalizeSlack = 1e-3;

// float32 exports rarely sum to 1 within 1e-9; rescale when close.
ProbabilityVector normalized_probs(std::vector<double> p) {
  double total = 0.0;
  for (double x : p) total += x;
  if (std::abs(total - 1.0) <= kRenormalizeSlack && total > 0.0) {
    for (auto& x : p) x /= total;
  }
  return ProbabilityVector(std::move(p));
}

StabilitySnapshot step_snapshot(const Matrix& w, const StepInput& in, double epsilon) {
  if (in.logits) return delta_tcb_from_logits(w, *in.logits, epsilon);
  if (in.probs) {
    if (in.probs->size() != w.rows) throw Error(ErrorCode::shape_mismatch, "probs length != V");
    return delta_tcb_from_probs(w, normalized_probs(*in.probs), epsilon);
  }
  if (in.h) return delta_tcb(w, *in.h, epsilon);
  throw Error(ErrorCode::invalid_argument, "step has no logits, probs or hidden state");
}

std::optional<std::size_t> step_suffix(const std::string& name, const std::string& prefix) {
  if (name.rfind(prefix, 0) != 0) return std::nullopt;
  const char* first = name.data() + prefix.size();
  const char* last = name.data() + name.size();
  if (first == last) return std::nullopt;
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::vector<double> TraceRecord::delta_series() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.snapshot.delta_tcb);
  return out;
}

std::vector<double> TraceRecord::second_prob_series() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.snapshot.top2_prob);
  return out;
}

ReportTable TraceRecord::table() const {
  auto columns = snapshot_columns();
  columns.push_back("token_id");
  columns.push_back("greedy_consistent");
  ReportTable t(std::move(columns), "Per-step stability trace");
  for (const auto& s : steps) {
    auto row = snapshot_row(static_cast<std::int64_t>(s.step), s.snapshot);
    row.push_back(static_cast<std::int64_t>(s.token_id));
    row.push_back(static_cast<std::int64_t>(s.greedy_consistent ? 1 : 0));
    t.add_row(std::move(row));
  }
  return t;
}

TraceRecord analyze_trace(const Matrix& w, const std::vector<StepInput>& steps, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_argument, "epsilon must be > 0");
  if (steps.empty()) throw Error(ErrorCode::invalid_argument, "trace has no steps");
  TraceRecord trace;
  trace.steps.resize(steps.size());
  trace.token_ids_present = std::all_of(steps.begin(), steps.end(),
                                                          [](const StepInput& s) { return s.token_id.has_value(); });
  std::vector<double> nll(steps.size());
  parallel_for(steps.size(), [&](std::size_t i) {
    auto& out = trace.steps[i];
    out.step = i;
    out.snapshot = step_snapshot(w, steps[i], epsilon);
    out.token_id = steps[i].token_id.value_or(out.snapshot.top1_id);
    if (out.token_id >= w.rows) throw Error(ErrorCode::invalid_argument, "token id out of vocabulary");
    out.greedy_consistent = out.token_id == out.snapshot.top1_id;

    double p = 0.0;
    if (out.token_id == out.snapshot.top1_id) {
      p = out.snapshot.top1_prob;
    } else if (steps[i].logits) {
      p = softmax(*steps[i].logits)[out.token_id];
    } else if (steps[i].probs) {
      p = normalized_probs(*steps[i].probs)[out.token_id];
    } else {
      p = softmax(blocked_matvec(w, *steps[i].h))[out.token_id];
    }
    nll[i] = p > 0.0 ? -std::log(p) : std::numeric_limits<double>::infinity();
  });

  trace.greedy = std::all_of(trace.steps.begin(), trace.steps.end(), [](const TraceStep& s) { return s.greedy_consistent; });
  if (!steps.empty()) {
    CompensatedSum total;
    for (double x : nll) total.add(x);
    trace.mean_nll = total.value() / static_cast<double>(steps.size());
    trace.perplexity = std::exp(trace.mean_nll);
  }
  return trace;
}

TraceRecord analyze_trace(const TensorManifest& manifest, double epsilon) {
  const auto w_entries = manifest.with_role(TensorRole::W);
  if (w_entries.empty()) throw Error(ErrorCode::schema, "trace manifest has no W entry");
  const Matrix w = as_matrix(load_entry(manifest, w_entries.front()->name));

  std::map<std::size_t, StepInput> by_step;
  for (const auto& e : manifest.entries) {
    if (auto i = step_suffix(e.name, "h_step_"); i && e.role == TensorRole::h) {
      by_step[*i].h = as_vector(load_entry(manifest, e.name));
    } else if (auto j = step_suffix(e.name, "logits_step_"); j && e.role == TensorRole::logits) {
      by_step[*j].logits = as_vector(load_entry(manifest, e.name));
    } else if (auto k = step_suffix(e.name, "probs_step_"); k && e.role == TensorRole::probs) {
      by_step[*k].probs = as_vector(load_entry(manifest, e.name));
    }
  }
  if (by_step.empty()) throw Error(ErrorCode::schema, "trace manifest has no *_step_NNNN entries");

  std::vector<StepInput> steps;
  std::size_t expected = 0;
  for (auto& [index, input] : by_step) {
    if (index != expected) throw Error(ErrorCode::schema, "missing step " + std::to_string(expected));
    steps.push_back(std::move(input));
    ++expected;
  }

  if (manifest.metadata.contains("token_ids")) {
    const auto ids = manifest.metadata["token_ids"].get<std::vector<std::size_t>>();
    if (ids.size() != steps.size()) {
      throw Error(ErrorCode::shape_mismatch, "metadata token_ids has " + std::to_string(ids.size()) +
                                                 " entries for " + std::to_string(steps.size()) + " steps");
    }
    for (std::size_t i = 0; i < ids.size(); ++i) steps[i].token_id = ids[i];
  }
  return analyze_trace(w, steps, epsilon);
}

double rolling_median(std::span<const double> series, std::size_t i, std::size_t window) {
  const std::size_t n = series.size();
  std::size_t begin = 0;
  std::size_t end = n;
  if (n > window) {
    const std::size_t half = window / 2;
    begin = std::min(i >= half ? i - half : 0, n - window);
    end = begin + window;
  }
  std::vector<double> values;
  for (std::size_t k = begin; k < end; ++k) {
    if (std::isfinite(series[k])) values.push_back(series[k]);
  }
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size();
  return m % 2 == 1 ? values[m / 2] : 0.5 * (values[m / 2 - 1] + values[m / 2]);
}

std::vector<DipEvent> detect_dips(std::span<const double> series, std::size_t window, double severity_threshold) {
  if (window < 3 || window % 2 == 0) throw Error(ErrorCode::invalid_argument, "window must be odd and >= 3");
  if (!(severity_threshold > 1.0)) throw Error(ErrorCode::invalid_argument, "severity threshold must be > 1");
  if (series.size() < window) throw Error(ErrorCode::invalid_argument, "series shorter than the window");

  std::vector<DipEvent> dips;
  for (std::size_t i = 1; i + 1 < series.size(); ++i) {
    const double v = series[i];
    if (!std::isfinite(v)) continue;
    if (!(v < series[i - 1] && v < series[i + 1])) continue;
    const double baseline = rolling_median(series, i, window);
    if (!(baseline > 0.0)) continue;
    const double severity = baseline / v;
    if (severity >= severity_threshold) dips.push_back({i, v, baseline, severity});
  }
  return dips;
}

std::vector<DipEvent> detect_dips(const TraceRecord& trace, std::size_t window, double severity_threshold) {
  return detect_dips(trace.delta_series(), window, severity_threshold);
}

CoincidenceReport dip_spike_coincidence(const TraceRecord& trace, const std::vector<DipEvent>& dips, std::size_t window,
                                        double severity_threshold) {
  CoincidenceReport report;
  report.table = ReportTable({"step", "delta_tcb", "delta_baseline", "severity", "p_second", "p_second_baseline",
                              "p_second_ratio", "coincident"},
                             "Dips in delta_tcb against spikes in P(2nd best)");
  const auto p2 = trace.second_prob_series();
  std::size_t hits = 0;
  for (const auto& dip : dips) {
    if (dip.step >= p2.size()) throw Error(ErrorCode::invalid_argument, "dip step outside the trace");
    const double baseline = rolling_median(p2, dip.step, window);
    const double ratio = baseline > 0.0 ? p2[dip.step] / baseline : std::numeric_limits<double>::infinity();
    const bool coincident = p2[dip.step] > 0.0 && ratio >= severity_threshold;
    hits += coincident ? 1 : 0;
    report.table.add_row({static_cast<std::int64_t>(dip.step), dip.delta_value, dip.baseline, dip.severity, p2[dip.step],
                          baseline, ratio, static_cast<std::int64_t>(coincident ? 1 : 0)});
  }
  if (!dips.empty()) report.fraction = static_cast<double>(hits) / static_cast<double>(dips.size());
  return report;
}

std::string trace_svg(const TraceRecord& trace, const std::vector<DipEvent>& dips) {
  if (trace.steps.empty()) throw Error(ErrorCode::degenerate, "empty trace");
  const auto delta = trace.delta_series();
  const auto p2 = trace.second_prob_series();
  double delta_max = 0.0;
  for (double v : delta) {
    if (std::isfinite(v)) delta_max = std::max(delta_max, v);
  }
  if (!(delta_max > 0.0)) throw Error(ErrorCode::degenerate, "no finite delta_tcb values to plot");
  delta_max *= 1.1;

  constexpr double width = 800, height = 400, left = 70, right = 70, top = 30, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const std::size_t n = trace.steps.size();
  auto x_at = [&](std::size_t i) { return left + (n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1)) * plot_w; };
  auto y_delta = [&](double v) { return top + plot_h * (1.0 - std::min(v, delta_max) / delta_max); };
  auto y_prob = [&](double p) { return top + plot_h * (1.0 - p); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"#444\"/>\n";

  for (int t = 0; t <= 4; ++t) {
    const double frac = t / 4.0;
    const double y = top + plot_h * (1.0 - frac);
    svg << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(y + 4) << "\" text-anchor=\"end\" fill=\"#1f77b4\">"
        << format_number(delta_max * frac) << "</text>\n";
    svg << "<text x=\"" << fmt(width - right + 6) << "\" y=\"" << fmt(y + 4) << "\" fill=\"#d62728\">"
        << format_number(frac) << "</text>\n";
  }
  svg << "<text x=\"" << fmt(left + plot_w / 2) << "\" y=\"" << fmt(height - 12)
      << "\" text-anchor=\"middle\">generation step</text>\n";
  svg << "<text x=\"16\" y=\"" << fmt(top + plot_h / 2) << "\" transform=\"rotate(-90 16 " << fmt(top + plot_h / 2)
      << ")\" text-anchor=\"middle\" fill=\"#1f77b4\">delta_TCB</text>\n";
  svg << "<text x=\"" << fmt(width - 16) << "\" y=\"" << fmt(top + plot_h / 2) << "\" transform=\"rotate(90 "
      << fmt(width - 16) << " " << fmt(top + plot_h / 2) << ")\" text-anchor=\"middle\" fill=\"#d62728\">P(2nd best)</text>\n";

  svg << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::isfinite(delta[i]) ? delta[i] : delta_max;
    svg << (i ? " " : "") << fmt(x_at(i)) << ',' << fmt(y_delta(v));
  }
  svg << "\"/>\n";
  svg << "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"4 2\" points=\"";
  for (std::size_t i = 0; i < n; ++i) svg << (i ? " " : "") << fmt(x_at(i)) << ',' << fmt(y_prob(p2[i]));
  svg << "\"/>\n";

  // Saturated steps are clipped to the top of the delta axis.
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isfinite(delta[i])) continue;
    svg << "<path d=\"M" << fmt(x_at(i) - 5) << ',' << fmt(top + 8) << " L" << fmt(x_at(i) + 5) << ',' << fmt(top + 8)
        << " L" << fmt(x_at(i)) << ',' << fmt(top) << " Z\" fill=\"#1f77b4\"><title>step " << i
        << " saturated</title></path>\n";
  }
  for (const auto& dip : dips) {
    svg << "<circle cx=\"" << fmt(x_at(dip.step)) << "\" cy=\"" << fmt(y_delta(dip.delta_value))
        << "\" r=\"5\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"><title>dip at step " << dip.step
        << " severity " << format_number(dip.severity) << "</title></circle>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void render_trace_svg(const TraceRecord& trace, const std::vector<DipEvent>& dips, const std::filesystem::path& path) {
  const auto svg = trace_svg(trace, dips);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << svg;
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

}  // namespace tcb
