#include "tcb/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tcb/approximations.hpp"
#include "tcb/ensemble_lab.hpp"
#include "tcb/error.hpp"
#include "tcb/geometry_lab.hpp"
#include "tcb/parallel.hpp"
#include "tcb/perturb_probe.hpp"
#include "tcb/stats_report.hpp"
#include "tcb/tensor_store.hpp"
#include "tcb/trace_dynamics.hpp"

namespace tcb::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite doubles become strings so the document stays valid JSON.
ordered_json num(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

ordered_json snapshot_json(const StabilitySnapshot& s) {
  return {{"top1_id", s.top1_id},     {"top1_prob", num(s.top1_prob)}, {"top2_id", s.top2_id},
          {"top2_prob", num(s.top2_prob)}, {"gamma_z", num(s.gamma_z)},     {"v_eff", num(s.v_eff)},
          {"s2", num(s.moments.s2)},  {"s3", num(s.moments.s3)},       {"s4", num(s.moments.s4)},
          {"jnorm_sq", num(s.jnorm_sq)}, {"delta_tcb", num(s.delta_tcb)}, {"saturated", s.saturated}};
}

void write_text(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::io, "cannot write " + path);
  file << text;
  if (!file) throw Error(ErrorCode::io, "write failed for " + path);
}

void write_table(const ReportTable& table, const std::string& path, const std::string& format,
                 const ordered_json& config, std::ostream& out) {
  const TableFormat f = !format.empty() ? parse_table_format(format)
                        : (path.empty() || path == "-") ? TableFormat::csv
                                                        : table_format_for(path);
  write_text(render_table(table, f, config.dump()), path, out);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::missing_file, path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, path + ": " + e.what());
  }
}

void require_positive_epsilon(double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw UsageError("--epsilon must be a finite value > 0");
}

Matrix load_w(const TensorManifest& m) {
  const auto ws = m.with_role(TensorRole::W);
  if (ws.empty()) throw Error(ErrorCode::schema, "manifest has no W entry");
  return as_matrix(load_entry(m, ws.front()->name));
}

// ---------------------------------------------------------------- snapshot

struct SnapshotArgs {
  std::string manifest;
  double epsilon = kDefaultEpsilon;
  std::string out;
  std::string format;
  bool with_approx = false;
  std::optional<double> sigma;
  bool sigma_from_w = false;
  double veff_low = kDefaultVeffLow;
  double veff_high = kDefaultVeffHigh;
};

int cmd_snapshot(const SnapshotArgs& a, std::ostream& out, std::ostream& err) {
  require_positive_epsilon(a.epsilon);
  if (a.with_approx && !a.sigma && !a.sigma_from_w) {
    throw UsageError("--with-approx requires --sigma or --sigma-from-W");
  }
  if (a.sigma && !(*a.sigma > 0.0)) throw UsageError("--sigma must be > 0");
  if (!(a.veff_low < a.veff_high)) throw UsageError("--veff-low must be < --veff-high");

  const auto manifest = load_manifest(a.manifest);
  const Matrix w = load_w(manifest);
  const auto hs = manifest.with_role(TensorRole::h);
  if (hs.empty()) throw Error(ErrorCode::schema, "manifest has no h entries");

  double sigma_sq = 0.0;
  if (a.sigma) sigma_sq = *a.sigma * *a.sigma;
  if (a.sigma_from_w) sigma_sq = empirical_element_variance(w);

  auto columns = snapshot_columns();
  columns.insert(columns.begin() + 1, "name");
  columns.push_back("regime");
  if (a.with_approx) {
    columns.push_back("delta_statistical");
    columns.push_back("delta_diffuse");
    columns.push_back("delta_peaked");
  }
  ReportTable table(columns, "Stability snapshots");

  std::size_t saturated = 0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const auto h = as_vector(load_entry(manifest, hs[i]->name));
    const auto s = delta_tcb(w, h, a.epsilon);
    saturated += s.saturated ? 1 : 0;
    auto row = snapshot_row(static_cast<std::int64_t>(i), s);
    row.insert(row.begin() + 1, hs[i]->name);
    row.push_back(std::string(to_string(classify_regime(s, a.veff_low, a.veff_high))));
    if (a.with_approx) {
      const auto o = softmax(blocked_matvec(w, h));
      row.push_back(delta_tcb_statistical(o, w.cols, sigma_sq, a.epsilon).value);
      row.push_back(delta_tcb_diffuse(s.v_eff, w.cols, sigma_sq, a.epsilon).value);
      row.push_back(delta_tcb_peaked(w, o, s.top1_id, a.epsilon).value);
    }
    table.add_row(std::move(row));
  }

  ordered_json config{{"command", "snapshot"}, {"manifest", a.manifest}, {"epsilon", a.epsilon}, {"seed", 0}};
  if (a.with_approx) config["sigma_sq"] = sigma_sq;
  write_table(table, a.out, a.format, config, out);

  if (saturated == hs.size()) {
    err << "all " << saturated << " snapshots are saturated (one-hot outputs)\n";
    return exit_code::degenerate;
  }
  return exit_code::ok;
}

// ---------------------------------------------------------------- ensemble

ProbFamily parse_family(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "fixed") return FixedProbs{j.at("probs").get<std::vector<double>>()};
  if (kind == "uniform_over_m") return UniformOverM{j.at("m").get<std::size_t>()};
  if (kind == "zipf") return Zipf{j.at("exponent").get<double>()};
  if (kind == "peaked") return PeakedProbs{j.at("margin").get<double>(), j.at("n_competitors").get<std::size_t>()};
  throw Error(ErrorCode::schema, "unknown o_family kind '" + kind + "'");
}

ordered_json run_bridge(const nlohmann::json& spec_json) {
  EnsembleSpec spec;
  spec.vocab_v = spec_json.at("vocab_v").get<std::size_t>();
  spec.dim_d = spec_json.at("dim_d").get<std::size_t>();
  spec.sigma_sq = spec_json.value("sigma_sq", 1.0);
  spec.seed = spec_json.value("seed", std::uint64_t{0});
  spec.n_draws = spec_json.value("n_draws", std::size_t{1000});
  spec.o_family = parse_family(spec_json.at("o_family"));
  const auto r = validate_expectation_bridge(spec);
  ordered_json result{{"mean_exact_jnorm_sq", num(r.mean_exact_jnorm_sq)},
                      {"predicted_jnorm_sq", num(r.predicted_jnorm_sq)},
                      {"relative_error", num(r.relative_error)},
                      {"standard_error", num(r.standard_error)},
                      {"rms_vs_mean_ratio", num(r.rms_vs_mean_ratio)},
                      {"per_draw", r.per_draw}};
  return result;
}

ordered_json run_scaling(const nlohmann::json& j) {
  DiffuseScalingConfig c;
  c.ms = j.value("ms", c.ms);
  c.dim_d = j.value("dim_d", c.dim_d);
  c.sigma_sq = j.value("sigma_sq", c.sigma_sq);
  c.n_seeds = j.value("n_seeds", c.n_seeds);
  c.h_scale = j.value("h_scale", c.h_scale);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.seed = j.value("seed", c.seed);
  const auto r = measure_diffuse_scaling(c);
  ordered_json points = ordered_json::array();
  for (const auto& p : r.points) {
    points.push_back({{"m", p.m}, {"mean_v_eff", num(p.mean_v_eff)}, {"mean_delta", num(p.mean_delta)},
                      {"used", p.used}, {"excluded", p.excluded}});
  }
  return {{"points", points},
          {"slope", num(r.log_log_fit.slope)},
          {"intercept", num(r.log_log_fit.intercept)},
          {"r_squared", num(r.log_log_fit.r_squared)},
          {"excluded", r.excluded}};
}

ordered_json run_correlation(const nlohmann::json& j) {
  CorrelationConfig c;
  c.regime = parse_correlation_regime(j.value("regime", std::string("diverse")));
  c.n_samples = j.value("n_samples", c.n_samples);
  c.vocab_v = j.value("vocab_v", c.vocab_v);
  c.dim_d = j.value("dim_d", c.dim_d);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.seed = j.value("seed", c.seed);
  const auto r = synthetic_correlation_study(c);
  return {{"corr_delta_veff", num(r.corr_delta_veff)},
          {"corr_delta_gamma", num(r.corr_delta_gamma)},
          {"corr_gamma_veff", num(r.corr_gamma_veff)},
          {"n_used", r.n_used},
          {"n_excluded", r.n_excluded}};
}

int cmd_ensemble(const std::string& spec_path, const std::string& out_path, std::ostream& out) {
  const auto spec = read_json(spec_path);
  if (!spec.is_object()) throw Error(ErrorCode::schema, "ensemble spec must be a JSON object");
  const auto experiment = spec.value("experiment", std::string("bridge"));
  ordered_json doc;
  doc["config"] = ordered_json::parse(spec.dump());
  try {
    if (experiment == "bridge") {
      doc["result"] = run_bridge(spec);
    } else if (experiment == "diffuse_scaling") {
      doc["result"] = run_scaling(spec);
    } else if (experiment == "correlation") {
      doc["result"] = run_correlation(spec);
    } else {
      throw Error(ErrorCode::schema, "unknown experiment '" + experiment + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, spec_path + ": " + e.what());
  }
  write_text(doc.dump(2) + "\n", out_path, out);
  return exit_code::ok;
}

// ---------------------------------------------------------------- geometry

struct GeometryArgs {
  std::string manifest;
  std::string synthetic;
  std::size_t k = 10;
  double alpha = 0.5;
  double beta = 0.5;
  double epsilon = kDefaultEpsilon;
  std::string out;
  std::string format;
  std::string instances_out;
};

int cmd_geometry(const GeometryArgs& a, std::ostream& out, std::ostream& err) {
  require_positive_epsilon(a.epsilon);
  if (a.manifest.empty() == a.synthetic.empty()) throw UsageError("exactly one of --manifest or --synthetic is required");
  if (!(a.alpha > 0.0 && a.alpha <= 1.0)) throw UsageError("--alpha must lie in (0, 1]");
  if (!(a.beta > 0.0)) throw UsageError("--beta must be > 0");

  GeometryExperiment exp{a.k, a.alpha, a.beta, a.epsilon};
  ordered_json config{{"command", "geometry"}, {"k", a.k}, {"alpha", a.alpha}, {"beta", a.beta}, {"epsilon", a.epsilon}};
  std::vector<GeometryOutcome> outcomes;

  if (!a.manifest.empty()) {
    config["manifest"] = a.manifest;
    config["seed"] = 0;
    const auto manifest = load_manifest(a.manifest);
    const Matrix w = load_w(manifest);
    for (const auto* e : manifest.with_role(TensorRole::h)) {
      outcomes.push_back(run_geometry_experiment(w, as_vector(load_entry(manifest, e->name)), exp));
    }
  } else {
    const auto j = read_json(a.synthetic);
    SyntheticGeometrySpec spec;
    try {
      spec.n_instances = j.value("n_instances", spec.n_instances);
      spec.vocab_v = j.value("vocab_v", spec.vocab_v);
      spec.dim_d = j.value("dim_d", spec.dim_d);
      spec.top1_prob = j.value("top1_prob", spec.top1_prob);
      spec.residual_mass = j.value("residual_mass", spec.residual_mass);
      spec.seed = j.value("seed", spec.seed);
      const auto family = j.value("family", std::string("peaked"));
      if (family == "peaked") {
        spec.family = SyntheticGeometryFamily::peaked;
      } else if (family == "softmax_gaussian") {
        spec.family = SyntheticGeometryFamily::softmax_gaussian;
      } else {
        throw Error(ErrorCode::schema, "unknown synthetic family '" + family + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::schema, a.synthetic + ": " + e.what());
    }
    spec.k_competitors = a.k;
    config["synthetic"] = ordered_json::parse(j.dump());
    config["seed"] = spec.seed;
    outcomes = run_geometry_batch(make_synthetic_instances(spec), exp);
  }

  const auto report = batch_geometry(outcomes);
  write_table(report.table(), a.out, a.format, config, out);

  if (!a.instances_out.empty()) {
    ReportTable per({"instance", "v_eff", "delta_orig", "delta_cluster", "delta_disperse", "hypothesis_held", "applicable"},
                    "Per-instance geometry outcomes");
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      const auto& o = outcomes[i];
      per.add_row({static_cast<std::int64_t>(i), o.v_eff, o.delta_orig, o.delta_cluster, o.delta_disperse,
                   static_cast<std::int64_t>(o.hypothesis_held), static_cast<std::int64_t>(o.applicable)});
    }
    write_table(per, a.instances_out, "", config, out);
  }
  if (report.overall.n == 0) {
    err << "no applicable instances (all outputs one-hot)\n";
    return exit_code::degenerate;
  }
  return exit_code::ok;
}

// ---------------------------------------------------------------- probe

struct ProbeArgs {
  std::string manifest;
  double epsilon = 0.01;
  std::size_t directions = 1000;
  std::uint64_t seed = 0;
  std::string out;
  double flip_max_radius = 0.0;
  double flip_tol = 1e-6;
};

int cmd_probe(const ProbeArgs& a, std::ostream& out, std::ostream& err) {
  require_positive_epsilon(a.epsilon);
  if (a.directions == 0) throw UsageError("--directions must be >= 1");
  if (a.flip_max_radius < 0.0) throw UsageError("--flip-max-radius must be >= 0");
  const auto manifest = load_manifest(a.manifest);
  const Matrix w = load_w(manifest);
  const auto hs = manifest.with_role(TensorRole::h);
  if (hs.empty()) throw Error(ErrorCode::schema, "manifest has no h entries");

  ordered_json doc;
  doc["config"] = {{"command", "probe"},   {"manifest", a.manifest}, {"epsilon", a.epsilon},
                   {"directions", a.directions}, {"seed", a.seed}, {"flip_max_radius", a.flip_max_radius}};
  doc["results"] = ordered_json::array();
  std::size_t saturated = 0;
  for (const auto* e : hs) {
    const auto h = as_vector(load_entry(manifest, e->name));
    const auto r = safety_margin_report(w, h, a.epsilon, a.directions, a.seed);
    ordered_json item{{"name", e->name}, {"snapshot", snapshot_json(r.snapshot)}};
    if (r.skipped_saturated) {
      ++saturated;
      item["probe"] = nullptr;
      item["skipped_saturated"] = true;
    } else {
      item["probe"] = {{"radius", num(r.probe->radius)},
                       {"n_directions", r.probe->n_directions},
                       {"max_delta_o_norm", num(r.probe->max_delta_o_norm)},
                       {"mean_delta_o_norm", num(r.probe->mean_delta_o_norm)},
                       {"flip_observed", r.probe->flip_observed},
                       {"n_flips", r.probe->n_flips},
                       {"seed", r.probe->seed}};
      item["skipped_saturated"] = false;
      item["bound_respected"] = r.bound_respected;
      item["first_order_warning"] = r.first_order_warning;
    }
    if (a.flip_max_radius > 0.0) {
      // Toward the runner-up embedding: the direction in which the top-1 logit gap closes fastest.
      const auto& s = r.snapshot;
      std::vector<double> dir(w.cols);
      for (std::size_t k = 0; k < w.cols; ++k) dir[k] = w(s.top2_id, k) - w(s.top1_id, k);
      if (norm2(dir) > 0.0) {
        const auto flip = flip_radius(w, h, dir, a.flip_max_radius, a.flip_tol);
        item["flip_radius_toward_top2"] = flip.radius ? num(*flip.radius) : ordered_json(nullptr);
        item["flip_boundary_start"] = flip.boundary_start;
      } else {
        item["flip_radius_toward_top2"] = nullptr;
      }
    }
    doc["results"].push_back(std::move(item));
  }
  write_text(doc.dump(2) + "\n", a.out, out);
  if (saturated == hs.size()) {
    err << "every hidden state is saturated; nothing was probed\n";
    return exit_code::degenerate;
  }
  return exit_code::ok;
}

// ---------------------------------------------------------------- trace

struct TraceArgs {
  std::string manifest;
  double epsilon = kDefaultEpsilon;
  std::size_t window = kDefaultDipWindow;
  double severity = kDefaultDipSeverity;
  std::string out;
  std::string svg;
  std::string dips_out;
};

int cmd_trace(const TraceArgs& a, std::ostream& out) {
  require_positive_epsilon(a.epsilon);
  if (a.window < 3 || a.window % 2 == 0) throw UsageError("--window must be odd and >= 3");
  if (!(a.severity > 1.0)) throw UsageError("--severity must be > 1");

  const auto manifest = load_manifest(a.manifest);
  const auto trace = analyze_trace(manifest, a.epsilon);
  std::vector<DipEvent> dips;
  if (trace.steps.size() >= a.window) dips = detect_dips(trace, a.window, a.severity);
  const auto coincidence = dip_spike_coincidence(trace, dips, a.window, a.severity);

  ordered_json config{{"command", "trace"}, {"manifest", a.manifest}, {"epsilon", a.epsilon},
                      {"window", a.window},  {"severity", a.severity},  {"seed", 0},
                      {"greedy", trace.greedy}, {"perplexity", num(trace.perplexity)}};
  if (!a.out.empty()) write_table(trace.table(), a.out, "", config, out);
  if (!a.dips_out.empty()) write_table(coincidence.table, a.dips_out, "", config, out);
  if (!a.svg.empty()) render_trace_svg(trace, dips, a.svg);

  out << "steps: " << trace.steps.size() << "\n"
      << "greedy_consistent: " << (trace.greedy ? "yes" : "no") << "\n"
      << "perplexity: " << format_number(trace.perplexity) << "\n"
      << "dips: " << dips.size();
  for (const auto& d : dips) out << " [step " << d.step << " severity " << format_number(d.severity) << "]";
  out << "\ncoincidence_fraction: " << (coincidence.fraction ? format_number(*coincidence.fraction) : "n/a") << "\n";
  return exit_code::ok;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::string manifest;
  std::string regime = "diverse";
  std::size_t samples = 300;
  std::uint64_t seed = 0;
  double epsilon = kDefaultEpsilon;
  std::string out;
  std::string format;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  require_positive_epsilon(a.epsilon);
  CorrelationStudy study;
  ordered_json config{{"command", "report"}, {"epsilon", a.epsilon}, {"seed", a.seed}};
  if (!a.manifest.empty()) {
    config["manifest"] = a.manifest;
    const auto manifest = load_manifest(a.manifest);
    const Matrix w = load_w(manifest);
    std::vector<StabilitySnapshot> snaps;
    for (const auto* e : manifest.with_role(TensorRole::h)) {
      snaps.push_back(delta_tcb(w, as_vector(load_entry(manifest, e->name)), a.epsilon));
    }
    study = correlate_snapshots(std::move(snaps));
  } else {
    if (a.samples < 30) throw UsageError("--samples must be >= 30");
    CorrelationConfig c;
    c.regime = parse_correlation_regime(a.regime);
    c.n_samples = a.samples;
    c.seed = a.seed;
    c.epsilon = a.epsilon;
    config["regime"] = a.regime;
    config["samples"] = a.samples;
    config["vocab_v"] = c.vocab_v;
    config["dim_d"] = c.dim_d;
    study = synthetic_correlation_study(c);
  }
  write_table(study.summary_table(), a.out, a.format, config, out);
  return exit_code::ok;
}

int exit_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::degenerate: return exit_code::degenerate;
    default: return exit_code::input_error;
  }
}

}  // namespace

int run_verify(const oracle::VerifyConfig& config, std::ostream& out) {
  const auto verdicts = oracle::run_oracle_suite(config);
  bool all = true;
  for (const auto& v : verdicts) {
    out << (v.passed ? "[PASS] " : "[FAIL] ") << v.name << " (" << v.instances << " instances, " << v.detail << ")\n";
    all = all && v.passed;
  }
  out << (all ? "all properties passed\n" : "verification failed\n");
  return all ? exit_code::ok : exit_code::verification_failed;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Token Constraint Bound stability toolkit", "tcb-lab"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker cap (default: TCB_LAB_THREADS or hardware)");

  SnapshotArgs snap;
  auto* snapshot = app.add_subcommand("snapshot", "Stability metrics for every h in a manifest");
  snapshot->add_option("--manifest", snap.manifest)->required();
  snapshot->add_option("--epsilon", snap.epsilon);
  snapshot->add_option("--out", snap.out);
  snapshot->add_option("--format", snap.format)->check(CLI::IsMember({"csv", "json", "markdown"}));
  snapshot->add_flag("--with-approx", snap.with_approx);
  snapshot->add_option("--sigma", snap.sigma, "Entry standard deviation of W for the statistical estimates");
  snapshot->add_flag("--sigma-from-W", snap.sigma_from_w);
  snapshot->add_option("--veff-low", snap.veff_low);
  snapshot->add_option("--veff-high", snap.veff_high);

  oracle::VerifyConfig verify_config;
  auto* verify = app.add_subcommand("verify", "Check the closed form against brute-force oracles");
  verify->add_option("--seed", verify_config.seed);
  verify->add_option("--instances", verify_config.instances)->check(CLI::PositiveNumber);

  std::string ensemble_spec, ensemble_out;
  auto* ensemble = app.add_subcommand("ensemble", "Random weight-ensemble experiments");
  ensemble->add_option("--spec", ensemble_spec)->required();
  ensemble->add_option("--out", ensemble_out);

  GeometryArgs geo;
  auto* geometry = app.add_subcommand("geometry", "Cluster/disperse competitor embeddings with o frozen");
  geometry->add_option("--manifest", geo.manifest);
  geometry->add_option("--synthetic", geo.synthetic);
  geometry->add_option("--k", geo.k);
  geometry->add_option("--alpha", geo.alpha);
  geometry->add_option("--beta", geo.beta);
  geometry->add_option("--epsilon", geo.epsilon);
  geometry->add_option("--out", geo.out);
  geometry->add_option("--format", geo.format)->check(CLI::IsMember({"csv", "json", "markdown"}));
  geometry->add_option("--instances-out", geo.instances_out);

  ProbeArgs pr;
  auto* probe = app.add_subcommand("probe", "Measure output change at radius delta_TCB");
  probe->add_option("--manifest", pr.manifest)->required();
  probe->add_option("--epsilon", pr.epsilon);
  probe->add_option("--directions", pr.directions);
  probe->add_option("--seed", pr.seed);
  probe->add_option("--out", pr.out);
  probe->add_option("--flip-max-radius", pr.flip_max_radius, "Also search the flip radius toward the runner-up");
  probe->add_option("--flip-tol", pr.flip_tol);

  TraceArgs tr;
  auto* trace = app.add_subcommand("trace", "Per-step stability series and dip detection");
  trace->add_option("--manifest", tr.manifest)->required();
  trace->add_option("--epsilon", tr.epsilon);
  trace->add_option("--window", tr.window);
  trace->add_option("--severity", tr.severity);
  trace->add_option("--out", tr.out);
  trace->add_option("--svg", tr.svg);
  trace->add_option("--dips-out", tr.dips_out);

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "Correlation table over synthetic samples or a manifest");
  report->add_option("--manifest", rep.manifest);
  report->add_option("--regime", rep.regime)->check(CLI::IsMember({"diverse", "peaked"}));
  report->add_option("--samples", rep.samples);
  report->add_option("--seed", rep.seed);
  report->add_option("--epsilon", rep.epsilon);
  report->add_option("--out", rep.out);
  report->add_option("--format", rep.format)->check(CLI::IsMember({"csv", "json", "markdown"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_code::ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_code::ok;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return exit_code::usage;
  }

  set_thread_count(threads);
  try {
    if (*snapshot) return cmd_snapshot(snap, out, err);
    if (*verify) return run_verify(verify_config, out);
    if (*ensemble) return cmd_ensemble(ensemble_spec, ensemble_out, out);
    if (*geometry) return cmd_geometry(geo, out, err);
    if (*probe) return cmd_probe(pr, out, err);
    if (*trace) return cmd_trace(tr, out);
    if (*report) return cmd_report(rep, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return exit_code::usage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::input_error;
  }
  return exit_code::usage;
}

}  // namespace tcb::cli
