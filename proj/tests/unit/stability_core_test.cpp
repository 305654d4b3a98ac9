#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "tcb/error.hpp"
#include "tcb/jacobian_oracle.hpp"
#include "tcb/stability_core.hpp"

using namespace tcb;
using doctest::Approx;

namespace {

Matrix two_token() { return Matrix(2, 2, {1, 0, -1, 0}); }
Matrix three_token() { return Matrix(3, 2, {1, 0, 0, 1, -1, -1}); }

Matrix identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t v, std::size_t d) {
  std::uniform_real_distribution<double> u(-2, 2);
  Matrix m(v, d);
  for (auto& x : m.values) x = u(rng);
  return m;
}

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double lo = -2, double hi = 2) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_SUITE("stability_core") {

TEST_CASE("softmax examples") {
  const std::vector<double> z0{0, 0};
  CHECK(softmax(z0)[0] == 0.5);

  const std::vector<double> big{1000, 0};
  const auto o = softmax(big);
  CHECK(std::isfinite(o[0]));
  CHECK(o[0] == Approx(1.0));
  CHECK(o[1] == Approx(0.0));

  const std::vector<double> z{3, 1, 0};
  const auto p = softmax(z);
  CHECK(std::abs(p[0] - 0.84379) < 1e-5);
  CHECK(std::abs(p[1] - 0.11420) < 1e-5);
  CHECK(std::abs(p[2] - 0.04201) < 1e-5);
}

TEST_CASE("softmax rejects empty and non-finite logits") {
  CHECK_THROWS_AS(softmax(std::vector<double>{}), Error);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::numeric_limits<double>::quiet_NaN()}), Error);
}

TEST_CASE("probability vectors are validated") {
  CHECK_THROWS_AS(ProbabilityVector({0.5, 0.6}), Error);
  CHECK_THROWS_AS(ProbabilityVector({1.2, -0.2}), Error);
  CHECK_NOTHROW(ProbabilityVector({0.5, 0.5 + 1e-12}));
}

TEST_CASE("effective vocabulary size") {
  CHECK(effective_vocab_size(ProbabilityVector({0, 1, 0})) == 1.0);
  CHECK(effective_vocab_size(ProbabilityVector({0.25, 0.25, 0.25, 0.25})) == 4.0);
  CHECK(std::abs(effective_vocab_size(ProbabilityVector({0.5, 0.3, 0.2})) - 1.0 / 0.38) < 1e-12);
}

TEST_CASE("moments") {
  const auto a = moments(ProbabilityVector({0.5, 0.5}));
  CHECK(a.s2 == 0.5);
  CHECK(a.s3 == 0.25);
  CHECK(a.s4 == 0.125);
  const auto b = moments(ProbabilityVector({0.7, 0.2, 0.1}));
  CHECK(std::abs(b.s2 - 0.54) < 1e-12);
  CHECK(std::abs(b.s3 - 0.352) < 1e-12);
  CHECK(std::abs(b.s4 - 0.2418) < 1e-12);
  const auto c = moments(ProbabilityVector({0, 0, 1}));
  CHECK(c.s2 == 1.0);
  CHECK(c.s3 == 1.0);
  CHECK(c.s4 == 1.0);
}

TEST_CASE("logit margin with lowest-index tie-break") {
  auto m = logit_margin(std::vector<double>{3, 1, 0});
  CHECK(m.gamma == 2.0);
  CHECK(m.top1 == 0);
  CHECK(m.top2 == 1);
  m = logit_margin(std::vector<double>{1, 1});
  CHECK(m.gamma == 0.0);
  CHECK(m.top1 == 0);
  CHECK(m.top2 == 1);
  m = logit_margin(std::vector<double>{0, 5, 5, 2});
  CHECK(m.gamma == 0.0);
  CHECK(m.top1 == 1);
  CHECK(m.top2 == 2);
  CHECK_THROWS_AS(logit_margin(std::vector<double>{1}), Error);
}

TEST_CASE("mean embedding") {
  const auto w = three_token();
  const auto r0 = mean_embedding(w, ProbabilityVector({1, 0, 0}));
  CHECK(r0 == std::vector<double>{1, 0});
  const auto sym = mean_embedding(two_token(), ProbabilityVector({0.5, 0.5}));
  CHECK(sym[0] == 0.0);
  CHECK(sym[1] == 0.0);
  const auto mu = mean_embedding(w, ProbabilityVector({0.7, 0.2, 0.1}));
  CHECK(std::abs(mu[0] - 0.6) < 1e-15);
  CHECK(std::abs(mu[1] - 0.1) < 1e-15);
  CHECK_THROWS_AS(mean_embedding(w, ProbabilityVector({0.5, 0.5})), Error);
}

TEST_CASE("jacobian norm examples") {
  CHECK(jacobian_norm_sq(two_token(), ProbabilityVector({0.5, 0.5})) == Approx(0.5).epsilon(1e-14));
  CHECK(std::abs(jacobian_norm_sq(three_token(), ProbabilityVector({0.7, 0.2, 0.1})) - 0.1678) < 1e-12);
  CHECK(jacobian_norm_sq(three_token(), ProbabilityVector({0, 1, 0})) == 0.0);
}

TEST_CASE("delta_tcb from a hidden state") {
  const std::vector<double> h0{0, 0};
  const auto s = delta_tcb(two_token(), h0, 1.0);
  CHECK(s.top1_prob == 0.5);
  CHECK(s.delta_tcb == Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK_FALSE(s.saturated);
  CHECK(s.v_eff == 2.0);
  CHECK(s.gamma_z == 0.0);
  CHECK(s.top1_id == 0);
  CHECK(s.top2_id == 1);

  const std::vector<double> h1{50, 0};
  const auto sat = delta_tcb(two_token(), h1, 1.0);
  CHECK(sat.saturated);
  CHECK(std::isinf(sat.delta_tcb));
  CHECK(sat.delta_tcb > 0);
  CHECK(sat.gamma_z == 100.0);

  CHECK_THROWS_AS(delta_tcb(two_token(), h0, 0.0), Error);
  CHECK_THROWS_AS(delta_tcb(two_token(), std::vector<double>{1.0}, 1.0), Error);
}

TEST_CASE("delta_tcb from probabilities") {
  const auto s = delta_tcb_from_probs(three_token(), ProbabilityVector({0.7, 0.2, 0.1}), 1.0);
  CHECK(std::abs(s.delta_tcb - 2.4412) < 1e-3);
  CHECK(s.gamma_z == Approx(std::log(3.5)));

  CHECK(delta_tcb_from_probs(two_token(), ProbabilityVector({0.5, 0.5})).delta_tcb ==
        Approx(1.414213).epsilon(1e-6));

  const auto one_hot = delta_tcb_from_probs(two_token(), ProbabilityVector({0, 1}));
  CHECK(one_hot.saturated);
  CHECK(std::isinf(one_hot.delta_tcb));
  CHECK(std::isinf(one_hot.gamma_z));

  const auto u = delta_tcb_from_probs(identity(4), ProbabilityVector({0.25, 0.25, 0.25, 0.25}));
  CHECK(u.jnorm_sq == Approx(0.1875).epsilon(1e-14));
  CHECK(u.delta_tcb == Approx(1.0 / std::sqrt(0.1875)).epsilon(1e-14));
}

TEST_CASE("epsilon scales delta linearly") {
  const auto a = delta_tcb_from_probs(three_token(), ProbabilityVector({0.7, 0.2, 0.1}), 1.0);
  const auto b = delta_tcb_from_probs(three_token(), ProbabilityVector({0.7, 0.2, 0.1}), 0.01);
  CHECK(b.delta_tcb == Approx(a.delta_tcb * 0.01).epsilon(1e-14));
  CHECK(b.epsilon == 0.01);
}

TEST_CASE("closed form matches the explicit oracle") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const std::size_t v = 2 + rng() % 40, d = 1 + rng() % 12;
    const auto w = random_matrix(rng, v, d);
    const auto o = softmax(blocked_matvec(w, random_vec(rng, d)));
    const double exact = oracle::frobenius_norm_sq(oracle::explicit_jacobian(w, o));
    CHECK(rel(jacobian_norm_sq(w, o), exact) < 1e-10);
  }
}

TEST_CASE("peaked collapse is monotone") {
  std::mt19937_64 rng(3);
  const auto w = random_matrix(rng, 16, 8);
  double prev_delta = 0.0, j09 = 0.0, j0999 = 0.0;
  for (double top : {0.9, 0.99, 0.999}) {
    std::vector<double> p(16, (1.0 - top) / 15.0);
    p[0] = top;
    const auto s = delta_tcb_from_probs(w, ProbabilityVector(p));
    CHECK(s.delta_tcb > prev_delta);
    prev_delta = s.delta_tcb;
    if (top == 0.9) j09 = s.jnorm_sq;
    if (top == 0.999) j0999 = s.jnorm_sq;
  }
  CHECK(j0999 < 1e-2 * j09);
}

TEST_CASE("invariances") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t v = 2 + rng() % 30, d = 1 + rng() % 10;
    const auto w = random_matrix(rng, v, d);
    const auto h = random_vec(rng, d, -1, 1);
    const auto base = delta_tcb(w, h);

    // scaling W by c with o held fixed scales delta by 1/c
    const auto o = softmax(blocked_matvec(w, h));
    const double c = 0.25 + static_cast<double>(rng() % 100) / 10.0;
    Matrix wc = w;
    for (auto& x : wc.values) x *= c;
    CHECK(rel(delta_tcb_from_probs(wc, o).delta_tcb, delta_tcb_from_probs(w, o).delta_tcb / c) < 1e-12);

    // softmax shift invariance
    auto z = blocked_matvec(w, h);
    auto shifted = z;
    for (auto& x : shifted) x += 3.75;
    const auto p1 = softmax(z), p2 = softmax(shifted);
    for (std::size_t i = 0; i < v; ++i) CHECK(std::abs(p1[i] - p2[i]) <= 1e-12 * std::max(p1[i], 1e-300) + 1e-300);

    // translating every embedding leaves the norm unchanged
    const auto shift = random_vec(rng, d, -5, 5);
    Matrix wt = w;
    for (std::size_t i = 0; i < v; ++i)
      for (std::size_t j = 0; j < d; ++j) wt(i, j) += shift[j];
    CHECK(rel(jacobian_norm_sq(wt, o), jacobian_norm_sq(w, o)) < 1e-12);
    CHECK(base.jnorm_sq >= 0.0);
  }
}

TEST_CASE("blocked accumulation agrees with a single pass") {
  std::mt19937_64 rng(9);
  for (std::size_t v : {std::size_t{1000}, std::size_t{5000}, std::size_t{1} << 17}) {
    const std::size_t d = 8;
    const auto w = random_matrix(rng, v, d);
    const auto h = random_vec(rng, d, -0.5, 0.5);
    const auto o = softmax(blocked_matvec(w, h));
    const double blocked = jacobian_norm_sq(w, o);
    const double single = jacobian_norm_sq(w, o, CoreOptions{v});
    const double small = jacobian_norm_sq(w, o, CoreOptions{7});
    CHECK(rel(blocked, single) < 1e-12);
    CHECK(rel(small, single) < 1e-12);

    // long-double reference of the dispersion form
    std::vector<long double> mu(d, 0.0L);
    for (std::size_t i = 0; i < v; ++i)
      for (std::size_t j = 0; j < d; ++j) mu[j] += static_cast<long double>(o[i]) * w(i, j);
    long double ref = 0.0L;
    for (std::size_t i = 0; i < v; ++i) {
      long double dist = 0.0L;
      for (std::size_t j = 0; j < d; ++j) {
        const long double diff = w(i, j) - mu[j];
        dist += diff * diff;
      }
      ref += static_cast<long double>(o[i]) * o[i] * dist;
    }
    CHECK(rel(blocked, static_cast<double>(ref)) < 1e-12);
  }
}

TEST_CASE("snapshot fields are consistent") {
  const std::vector<double> z{3, 1, 0};
  const auto s = delta_tcb_from_logits(three_token(), z);
  CHECK(s.gamma_z == 2.0);
  CHECK(s.top1_id == 0);
  CHECK(s.top2_id == 1);
  CHECK(s.top1_prob > s.top2_prob);
  CHECK(s.v_eff == Approx(1.0 / s.moments.s2));
  CHECK(s.delta_tcb == Approx(1.0 / std::sqrt(s.jnorm_sq)));
  const auto mu = mean_embedding(three_token(), softmax(z));
  CHECK(s.mean_embedding_norm == Approx(std::hypot(mu[0], mu[1])));
}

}  // TEST_SUITE
