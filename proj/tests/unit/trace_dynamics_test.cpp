#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "../support/fixtures.hpp"
#include "tcb/error.hpp"
#include "tcb/trace_dynamics.hpp"

using namespace tcb;
using doctest::Approx;
using tcb::testing::ManifestBuilder;
using tcb::testing::TempDir;

namespace {

using V = std::vector<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix three_token() { return Matrix(3, 2, {1, 0, 0, 1, -1, -1}); }

StepInput logits_step(V z, std::optional<std::size_t> token = std::nullopt) {
  StepInput s;
  s.logits = std::move(z);
  s.token_id = token;
  return s;
}

// Literal reading of the dip rule, for cross-checking.
std::vector<std::size_t> brute_force_dips(const V& s, std::size_t window, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    if (!std::isfinite(s[i]) || !(s[i] < s[i - 1] && s[i] < s[i + 1])) continue;
    const double base = rolling_median(s, i, window);
    if (std::isfinite(base) && base >= threshold * s[i]) out.push_back(i);
  }
  return out;
}

}  // namespace

TEST_SUITE("trace_dynamics") {

TEST_CASE("hand-constructed dip") {
  const V series{10, 2, 12, 11, 10, 12, 11};
  const auto dips = detect_dips(series, 7, 3.0);
  REQUIRE(dips.size() == 1);
  CHECK(dips[0] == DipEvent{1, 2.0, 11.0, 5.5});
}

TEST_CASE("dips are invariant to uniform scaling") {
  const V series{10, 2, 12, 11, 10, 12, 11};
  for (double c : {1e-6, 0.37, 42.0, 1e9}) {
    V scaled = series;
    for (auto& x : scaled) x *= c;
    const auto dips = detect_dips(scaled, 7, 3.0);
    REQUIRE(dips.size() == 1);
    CHECK(dips[0].step == 1);
    CHECK(dips[0].severity == Approx(5.5).epsilon(1e-12));
  }
}

TEST_CASE("monotone and constant series have no dips") {
  CHECK(detect_dips(V{1, 2, 3, 4, 5, 6, 7, 8}, 7, 3.0).empty());
  CHECK(detect_dips(V{8, 7, 6, 5, 4, 3, 2, 1}, 7, 3.0).empty());
  CHECK(detect_dips(V(10, 4.0), 3, 1.5).empty());
}

TEST_CASE("infinite steps never dip and are left out of the baseline") {
  const V series{kInf, 10, 1, 10, kInf, 10, 10};
  const auto dips = detect_dips(series, 7, 3.0);
  REQUIRE(dips.size() == 1);
  CHECK(dips[0].step == 2);
  CHECK(dips[0].baseline == 10.0);
  CHECK(detect_dips(V{kInf, kInf, kInf}, 3, 2.0).empty());
}

TEST_CASE("dip argument checks") {
  CHECK_THROWS_AS(detect_dips(V{1, 2, 3, 4}, 4, 3.0), Error);
  CHECK_THROWS_AS(detect_dips(V{1, 2, 3, 4}, 1, 3.0), Error);
  CHECK_THROWS_AS(detect_dips(V{1, 2, 3, 4}, 3, 1.0), Error);
  CHECK_THROWS_AS(detect_dips(V{1, 2}, 3, 3.0), Error);
}

TEST_CASE("dip detection matches a brute-force scan") {
  std::mt19937_64 rng(17);
  std::lognormal_distribution<double> value(0.0, 1.5);
  for (int t = 0; t < 300; ++t) {
    V s(5 + rng() % 40);
    for (auto& x : s) x = (rng() % 15 == 0) ? kInf : value(rng);
    const std::size_t window = 3 + 2 * (rng() % 4);
    if (s.size() < window) continue;
    const double threshold = 1.5 + static_cast<double>(rng() % 4);
    std::vector<std::size_t> got;
    for (const auto& d : detect_dips(s, window, threshold)) got.push_back(d.step);
    CHECK(got == brute_force_dips(s, window, threshold));
  }
}

TEST_CASE("rolling median window stays inside the series") {
  const V s{1, 2, 3, 4, 100};
  CHECK(rolling_median(s, 0, 3) == 2.0);
  CHECK(rolling_median(s, 4, 3) == 4.0);
  CHECK(rolling_median(s, 2, 5) == 3.0);
  CHECK(rolling_median(V{1, 2, 3, 4}, 1, 3) == 2.0);
}

TEST_CASE("constant trace gives identical snapshots") {
  const auto w = three_token();
  const auto rec = analyze_trace(w, {logits_step({1, 0.5, 0}), logits_step({1, 0.5, 0}), logits_step({1, 0.5, 0})});
  REQUIRE(rec.steps.size() == 3);
  CHECK(rec.steps[0].snapshot.delta_tcb == rec.steps[2].snapshot.delta_tcb);
  CHECK(rec.steps[1].snapshot.jnorm_sq == rec.steps[0].snapshot.jnorm_sq);
  CHECK(rec.steps[0].snapshot.delta_tcb == delta_tcb_from_logits(w, V{1, 0.5, 0}).delta_tcb);
}

TEST_CASE("a near-tie step is the series minimum") {
  const auto w = Matrix(3, 2, {1, 0, -1, 0, 0, 1});
  const auto rec = analyze_trace(w, {logits_step({6, 0, 0}), logits_step({3, 2.99, 0}), logits_step({6, 1, 0})});
  const auto d = rec.delta_series();
  CHECK(d[1] < d[0]);
  CHECK(d[1] < d[2]);
  CHECK(rec.second_prob_series()[1] > 0.4);
}

TEST_CASE("greedy flag and perplexity") {
  const auto w = three_token();
  const auto rec = analyze_trace(w, {logits_step({2, 0, 0}, 0), logits_step({0, 2, 0}, 2)});
  CHECK(rec.token_ids_present);
  CHECK_FALSE(rec.greedy);
  CHECK(rec.steps[0].greedy_consistent);
  CHECK_FALSE(rec.steps[1].greedy_consistent);
  const auto o = softmax(V{2, 0, 0});
  const double nll = -(std::log(o[0]) + std::log(o[1])) / 2;
  CHECK(rec.mean_nll == Approx(nll));
  CHECK(rec.perplexity == Approx(std::exp(nll)));
}

TEST_CASE("step resolution prefers logits, then probs, then h") {
  const auto w = three_token();
  StepInput only_h;
  only_h.h = V{0.3, 0.1};
  StepInput only_p;
  only_p.probs = V{0.7, 0.2, 0.1};
  const auto rec = analyze_trace(w, {only_h, only_p});
  CHECK(rec.steps[0].snapshot.delta_tcb == delta_tcb(w, V{0.3, 0.1}).delta_tcb);
  CHECK(std::abs(rec.steps[1].snapshot.jnorm_sq - 0.1678) < 1e-12);
  CHECK_THROWS_AS(analyze_trace(w, {StepInput{}}), Error);
  CHECK_THROWS_AS(analyze_trace(w, {}), Error);
}

TEST_CASE("coincidence with second-probability spikes") {
  const auto w = Matrix(3, 2, {1, 0, -1, 0, 0, 1});
  std::vector<StepInput> steps;
  for (int i = 0; i < 9; ++i) steps.push_back(logits_step(i == 4 ? V{3, 2.999, 0} : V{7, 0, 0}));
  const auto rec = analyze_trace(w, steps);
  const auto dips = detect_dips(rec, 7, 3.0);
  REQUIRE(dips.size() == 1);
  CHECK(dips[0].step == 4);
  const auto co = dip_spike_coincidence(rec, dips);
  REQUIRE(co.fraction);
  CHECK(*co.fraction == 1.0);

  const auto flat = analyze_trace(w, std::vector<StepInput>(8, logits_step({7, 0, 0})));
  const auto none = dip_spike_coincidence(flat, detect_dips(flat));
  CHECK_FALSE(none.fraction);
  CHECK(none.table.rows().empty());
}

TEST_CASE("trace from a manifest") {
  TempDir tmp;
  ManifestBuilder b(tmp.path());
  b.weights(three_token());
  b.vector("h_step_0000", TensorRole::h, {0.1, 0.2});
  b.vector("logits_step_0001", TensorRole::logits, {1, 0.5, 0});
  b.vector("probs_step_0002", TensorRole::probs, {0.7, 0.2, 0.1}, DType::float32);
  b.metadata("token_ids", nlohmann::json::array({1, 0, 0}));
  const auto rec = analyze_trace(load_manifest(b.save()));
  REQUIRE(rec.steps.size() == 3);
  CHECK(rec.token_ids_present);
  CHECK(rec.steps[1].snapshot.gamma_z == 0.5);
  CHECK(std::abs(rec.steps[2].snapshot.jnorm_sq - 0.1678) < 1e-6);
}

TEST_CASE("manifest with a gap in the steps") {
  TempDir tmp;
  ManifestBuilder b(tmp.path());
  b.weights(three_token());
  b.vector("h_step_0000", TensorRole::h, {0.1, 0.2});
  b.vector("h_step_0002", TensorRole::h, {0.1, 0.2});
  CHECK_THROWS_AS(analyze_trace(load_manifest(b.save())), Error);
}

TEST_CASE("svg output is deterministic and marks saturation") {
  const Matrix w(2, 2, {1, 0, -1, 0});
  std::vector<StepInput> steps;
  for (int i = 0; i < 10; ++i) {
    StepInput s;
    s.h = V{i == 6 ? 50.0 : 0.1 * i, 0};
    steps.push_back(s);
  }
  const auto rec = analyze_trace(w, steps);
  CHECK(rec.steps[6].snapshot.saturated);
  const auto a = trace_svg(rec, detect_dips(rec, 3, 1.5));
  CHECK(a == trace_svg(rec, detect_dips(rec, 3, 1.5)));
  CHECK(a.rfind("<svg", 0) == 0);
  CHECK(a.find("saturated") != std::string::npos);

  TempDir tmp;
  render_trace_svg(rec, {}, tmp / "t.svg");
  CHECK(tcb::testing::read_file(tmp / "t.svg") == trace_svg(rec, {}));
}

TEST_CASE("svg of an all-saturated trace is an error") {
  const Matrix w(2, 2, {1, 0, -1, 0});
  StepInput s;
  s.h = V{50, 0};
  CHECK_THROWS_AS(trace_svg(analyze_trace(w, {s, s}), {}), Error);
}

}  // TEST_SUITE
