#include <cmath>
#include <random>

#include "doctest.h"
#include "tcb/error.hpp"
#include "tcb/jacobian_oracle.hpp"

using namespace tcb;
using namespace tcb::oracle;
using doctest::Approx;

namespace {
Matrix two_token() { return Matrix(2, 2, {1, 0, -1, 0}); }
Matrix three_token() { return Matrix(3, 2, {1, 0, 0, 1, -1, -1}); }
}  // namespace

TEST_SUITE("jacobian_oracle") {

TEST_CASE("explicit Jacobian of the symmetric two-token case") {
  const auto j = explicit_jacobian(two_token(), ProbabilityVector({0.5, 0.5}));
  CHECK(j.rows == 2);
  CHECK(j.cols == 2);
  CHECK(j(0, 0) == 0.5);
  CHECK(j(0, 1) == 0.0);
  CHECK(j(1, 0) == -0.5);
  CHECK(j(1, 1) == 0.0);
}

TEST_CASE("explicit Jacobian vanishes at a vertex") {
  const auto j = explicit_jacobian(three_token(), ProbabilityVector({0, 0, 1}));
  for (double x : j.values) CHECK(x == 0.0);
}

TEST_CASE("explicit Jacobian rows are o_i (w_i - mu)") {
  const auto j = explicit_jacobian(three_token(), ProbabilityVector({0.7, 0.2, 0.1}));
  const double expected[3][2] = {{0.7 * 0.4, 0.7 * -0.1}, {0.2 * -0.6, 0.2 * 0.9}, {0.1 * -1.6, 0.1 * -1.1}};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 2; ++k) CHECK(std::abs(j(i, k) - expected[i][k]) < 1e-15);
  CHECK(std::abs(frobenius_norm_sq(j) - 0.1678) < 1e-15);
}

TEST_CASE("finite differences at h = 0 reproduce the antisymmetric rows") {
  const std::vector<double> h{0, 0};
  const auto fd = finite_diff_jacobian(two_token(), h);
  CHECK(fd(0, 0) == Approx(0.5).epsilon(1e-8));
  CHECK(fd(1, 0) == Approx(-0.5).epsilon(1e-8));
  CHECK(std::abs(fd(0, 1)) < 1e-12);
  CHECK(std::abs(fd(1, 1)) < 1e-12);
}

TEST_CASE("finite differences along a null direction give zero columns") {
  const Matrix w(3, 3, {1, 0, 0, 0, 2, 0, -1, 1, 0});
  const std::vector<double> h{0.3, -0.2, 5.0};
  const auto fd = finite_diff_jacobian(w, h);
  for (std::size_t i = 0; i < 3; ++i) CHECK(fd(i, 2) == 0.0);
}

TEST_CASE("finite difference step is bounded") {
  const std::vector<double> h{0, 0};
  CHECK_THROWS_AS(finite_diff_jacobian(two_token(), h, 1e-9), Error);
  CHECK_THROWS_AS(finite_diff_jacobian(two_token(), h, 1e-2), Error);
}

TEST_CASE("finite differences match the explicit Jacobian on random instances") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int t = 0; t < 100; ++t) {
    Matrix w(8, 4);
    for (auto& x : w.values) x = u(rng);
    std::vector<double> h(4);
    for (auto& x : h) x = u(rng);
    const auto ex = explicit_jacobian(w, softmax(blocked_matvec(w, h)));
    const auto fd = finite_diff_jacobian(w, h, 1e-5);
    for (std::size_t i = 0; i < ex.values.size(); ++i) CHECK(std::abs(ex.values[i] - fd.values[i]) < 1e-6);
  }
}

TEST_CASE("M norm") {
  CHECK(m_norm_sq(ProbabilityVector({0.5, 0.5})) == 0.25);
  CHECK(dense_m_norm_sq(ProbabilityVector({0.5, 0.5})) == 0.25);
  CHECK(std::abs(m_norm_sq(ProbabilityVector({0.7, 0.2, 0.1})) - 0.1276) < 1e-14);
  CHECK(std::abs(dense_m_norm_sq(ProbabilityVector({0.7, 0.2, 0.1})) - 0.1276) < 1e-14);
  CHECK(m_norm_sq(ProbabilityVector({0, 1})) == 0.0);
  CHECK(dense_m_norm_sq(ProbabilityVector({0, 1})) == 0.0);
}

TEST_CASE("covariance trace differs from the Jacobian norm") {
  const auto c = covariance_trace(two_token(), ProbabilityVector({0.5, 0.5}));
  CHECK(c.trace == 1.0);
  CHECK(c.identity_holds);
  CHECK(jacobian_norm_sq(two_token(), ProbabilityVector({0.5, 0.5})) == Approx(0.5));

  CHECK(covariance_trace(two_token(), ProbabilityVector({1, 0})).trace == 0.0);

  Matrix eye(4, 4);
  for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
  CHECK(covariance_trace(eye, ProbabilityVector({0.25, 0.25, 0.25, 0.25})).trace == Approx(0.75).epsilon(1e-15));
}

TEST_CASE("scale guard") {
  const Matrix w(5000, 1000);
  std::vector<double> p(5000, 1.0 / 5000);
  try {
    explicit_jacobian(w, ProbabilityVector(p));
    FAIL("expected scale guard");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::scale_guard);
  }
}

TEST_CASE("oracle suite passes for the real closed form") {
  const auto verdicts = run_oracle_suite({.seed = 3, .instances = 300, .closed_form = {}});
  CHECK(verdicts.size() == 6);
  for (const auto& v : verdicts) {
    INFO(v.name << ": " << v.detail);
    CHECK(v.passed);
  }
}

TEST_CASE("oracle suite catches a faulty closed form") {
  VerifyConfig cfg{.seed = 0, .instances = 50, .closed_form = {}};
  cfg.closed_form = [](const Matrix& w, const ProbabilityVector& o) { return 1.001 * jacobian_norm_sq(w, o); };
  const auto verdicts = run_oracle_suite(cfg);
  REQUIRE_FALSE(verdicts.empty());
  CHECK(verdicts.front().name == "norm identity");
  CHECK_FALSE(verdicts.front().passed);
}

TEST_CASE("oracle suite is deterministic") {
  const auto a = run_oracle_suite({.seed = 9, .instances = 100, .closed_form = {}});
  const auto b = run_oracle_suite({.seed = 9, .instances = 100, .closed_form = {}});
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].worst == b[i].worst);
    CHECK(a[i].detail == b[i].detail);
  }
}

}  // TEST_SUITE
