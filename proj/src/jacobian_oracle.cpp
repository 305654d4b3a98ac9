#include "tcb/jacobian_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "tcb/error.hpp"
#include "tcb/parallel.hpp"
#include "tcb/random.hpp"

namespace tcb::oracle {

namespace {

void guard(std::size_t v, std::size_t d) {
  if (v * d > kScaleGuard || v * v > kScaleGuard) {
    throw Error(ErrorCode::scale_guard, "oracle limited to V*d <= 2^22 and V*V <= 2^22 (V=" + std::to_string(v) +
                                            ", d=" + std::to_string(d) + ")");
  }
}

Matrix dense_m(const ProbabilityVector& o) {
  const std::size_t v = o.size();
  Matrix m(v, v);
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = 0; j < v; ++j) m(i, j) = i == j ? o[i] * (1.0 - o[i]) : -o[i] * o[j];
  }
  return m;
}

std::vector<double> naive_mean(const Matrix& w, const ProbabilityVector& o) {
  std::vector<double> mu(w.cols, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    for (std::size_t k = 0; k < w.cols; ++k) mu[k] += o[i] * w(i, k);
  }
  return mu;
}

}  // namespace

Matrix explicit_jacobian(const Matrix& w, const ProbabilityVector& o) {
  if (w.rows != o.size()) throw Error(ErrorCode::shape_mismatch, "W rows != len(o)");
  guard(w.rows, w.cols);
  const Matrix m = dense_m(o);
  Matrix j(w.rows, w.cols);
  for (std::size_t i = 0; i < w.rows; ++i) {
    for (std::size_t l = 0; l < w.rows; ++l) {
      const double mil = m(i, l);
      if (mil == 0.0) continue;
      for (std::size_t k = 0; k < w.cols; ++k) j(i, k) += mil * w(l, k);
    }
  }
  return j;
}

Matrix finite_diff_jacobian(const Matrix& w, std::span<const double> h, double step) {
  if (!(step >= 1e-7 && step <= 1e-3)) throw Error(ErrorCode::invalid_argument, "step must lie in [1e-7, 1e-3]");
  if (h.size() != w.cols) throw Error(ErrorCode::shape_mismatch, "h length != d");
  guard(w.rows, w.cols);
  Matrix j(w.rows, w.cols);
  std::vector<double> hp(h.begin(), h.end());
  for (std::size_t k = 0; k < w.cols; ++k) {
    hp[k] = h[k] + step;
    const auto plus = softmax(blocked_matvec(w, hp));
    hp[k] = h[k] - step;
    const auto minus = softmax(blocked_matvec(w, hp));
    hp[k] = h[k];
    for (std::size_t i = 0; i < w.rows; ++i) j(i, k) = (plus[i] - minus[i]) / (2.0 * step);
  }
  return j;
}

double frobenius_norm_sq(const Matrix& m) {
  CompensatedSum s;
  for (double x : m.values) s.add(x * x);
  return s.value();
}

double m_norm_sq(const ProbabilityVector& o) {
  const auto mo = moments(o);
  return mo.s2 - 2.0 * mo.s3 + mo.s2 * mo.s2;
}

double dense_m_norm_sq(const ProbabilityVector& o) {
  if (o.size() * o.size() > kScaleGuard) throw Error(ErrorCode::scale_guard, "dense M too large");
  return frobenius_norm_sq(dense_m(o));
}

CovarianceTrace covariance_trace(const Matrix& w, const ProbabilityVector& o) {
  if (w.rows != o.size()) throw Error(ErrorCode::shape_mismatch, "W rows != len(o)");
  const auto mu = naive_mean(w, o);
  CompensatedSum trace, second_moment;
  for (std::size_t i = 0; i < w.rows; ++i) {
    trace.add(o[i] * squared_distance(w.row(i), mu));
    second_moment.add(o[i] * dot(w.row(i), w.row(i)));
  }
  CovarianceTrace out;
  out.trace = trace.value();
  out.variance_identity = second_moment.value() - dot(mu, mu);
  const double scale = std::max(1.0, second_moment.value());
  out.identity_holds = std::abs(out.trace - out.variance_identity) <= 1e-12 * scale;
  return out;
}

namespace {

struct Instance {
  Matrix w;
  std::vector<double> h;
  ProbabilityVector o;
};

// V in [2, 64], d in [1, 16], entries uniform in [-2, 2]. Half of the
// instances draw o from softmax(W h), the rest from a random simplex point
// with a random number of zeroed entries.
Instance make_instance(std::uint64_t seed, std::size_t index, std::size_t max_v = 64, std::size_t max_d = 16) {
  auto rng = make_stream(seed, streams::verify, index);
  std::uniform_int_distribution<std::size_t> vdist(2, max_v), ddist(1, max_d);
  std::uniform_real_distribution<double> entry(-2.0, 2.0);
  const std::size_t v = vdist(rng);
  const std::size_t d = ddist(rng);
  Matrix w(v, d);
  for (auto& x : w.values) x = entry(rng);
  std::vector<double> h(d);
  for (auto& x : h) x = entry(rng);

  if (index % 2 == 0) {
    auto o = softmax(blocked_matvec(w, h));
    return {std::move(w), std::move(h), std::move(o)};
  }
  std::exponential_distribution<double> expo(1.0);
  std::bernoulli_distribution keep(0.7);
  std::vector<double> p(v);
  double total = 0.0;
  for (auto& x : p) {
    x = keep(rng) ? expo(rng) : 0.0;
    total += x;
  }
  if (total == 0.0) {
    p[0] = 1.0;
    total = 1.0;
  }
  for (auto& x : p) x /= total;
  return {std::move(w), std::move(h), ProbabilityVector(std::move(p))};
}

double rel_err(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

std::size_t support_size(const ProbabilityVector& o) {
  return static_cast<std::size_t>(std::count_if(o.values().begin(), o.values().end(), [](double p) { return p > 0; }));
}

template <typename Metric>
PropertyVerdict check(std::string name, std::size_t n, double tol, Metric metric) {
  std::vector<double> worst(n, 0.0);
  parallel_for(n, [&](std::size_t i) { worst[i] = metric(i); });
  PropertyVerdict v;
  v.name = std::move(name);
  v.instances = n;
  std::size_t worst_index = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::isnan(worst[i]) ? std::numeric_limits<double>::infinity() : worst[i];
    if (e > v.worst) {
      v.worst = e;
      worst_index = i;
    }
  }
  v.passed = v.worst <= tol;
  std::ostringstream detail;
  detail << "worst=" << v.worst << " tol=" << tol;
  if (!v.passed) detail << " at instance " << worst_index;
  v.detail = detail.str();
  return v;
}

}  // namespace

std::vector<PropertyVerdict> run_oracle_suite(const VerifyConfig& config) {
  const NormFunction closed_form =
      config.closed_form ? config.closed_form
                         : NormFunction([](const Matrix& w, const ProbabilityVector& o) { return jacobian_norm_sq(w, o); });
  const std::size_t n = config.instances;
  const std::uint64_t seed = config.seed;
  std::vector<PropertyVerdict> out;

  out.push_back(check("norm identity", n, 1e-10, [&](std::size_t i) {
    const auto inst = make_instance(seed, i);
    return rel_err(closed_form(inst.w, inst.o), frobenius_norm_sq(explicit_jacobian(inst.w, inst.o)));
  }));

  // Row i of J equals o_i (w_i - mu).
  out.push_back(check("row structure", n, 1e-12, [&](std::size_t i) {
    const auto inst = make_instance(seed, i);
    const auto j = explicit_jacobian(inst.w, inst.o);
    const auto mu = naive_mean(inst.w, inst.o);
    double worst = 0.0;
    for (std::size_t r = 0; r < inst.w.rows; ++r) {
      for (std::size_t k = 0; k < inst.w.cols; ++k) {
        worst = std::max(worst, std::abs(j(r, k) - inst.o[r] * (inst.w(r, k) - mu[k])));
      }
    }
    return worst;
  }));

  // Central differences at V=8, d=4, step 1e-5; max-abs error.
  const std::size_t n_fd = std::min<std::size_t>(n, 100);
  out.push_back(check("finite differences", n_fd, 1e-6, [&](std::size_t i) {
    auto rng = make_stream(seed, streams::verify, 1'000'000 + i);
    std::uniform_real_distribution<double> entry(-2.0, 2.0);
    Matrix w(8, 4);
    for (auto& x : w.values) x = entry(rng);
    std::vector<double> h(4);
    for (auto& x : h) x = entry(rng);
    const auto exact = explicit_jacobian(w, softmax(blocked_matvec(w, h)));
    const auto fd = finite_diff_jacobian(w, h, kDefaultFiniteDiffStep);
    double worst = 0.0;
    for (std::size_t k = 0; k < exact.values.size(); ++k) {
      worst = std::max(worst, std::abs(exact.values[k] - fd.values[k]));
    }
    return worst;
  }));

  out.push_back(check("M identity", n, 1e-12, [&](std::size_t i) {
    const auto inst = make_instance(seed, i);
    return std::abs(m_norm_sq(inst.o) - dense_m_norm_sq(inst.o));
  }));

  // jnorm < covariance trace whenever two or more tokens carry mass.
  out.push_back(check("covariance-trace distinction", n, 0.0, [&](std::size_t i) {
    const auto inst = make_instance(seed, i);
    const auto cov = covariance_trace(inst.w, inst.o);
    const double jn = closed_form(inst.w, inst.o);
    if (!cov.identity_holds) return 1.0;
    if (support_size(inst.o) >= 2) return jn < cov.trace ? 0.0 : 1.0;
    return jn == 0.0 && cov.trace == 0.0 ? 0.0 : 1.0;
  }));

  // 1^T (J dh) = 0 for any dh.
  out.push_back(check("probability conservation", n, 1e-12, [&](std::size_t i) {
    const auto inst = make_instance(seed, i);
    const auto j = explicit_jacobian(inst.w, inst.o);
    auto rng = make_stream(seed, streams::verify, 2'000'000 + i);
    const auto dh = gaussian_vector(rng, inst.w.cols);
    const auto dout = blocked_matvec(j, dh);
    double total = 0.0;
    for (double x : dout) total += x;
    return std::abs(total);
  }));

  return out;
}

}  // namespace tcb::oracle
