#include <cmath>
#include <numbers>

#include "ahe/gauduchon.hpp"
#include "ahe/sparse_assembly.hpp"
#include "ahe/synthetic.hpp"
#include "doctest.h"

using namespace ahe;

namespace {
constexpr double pi = std::numbers::pi;

double max_diff(const ScalarField& a, const ScalarField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}
}  // namespace

TEST_CASE("Q and Q* on constant metrics") {
  AffineTorus t(2, 32);
  RealMat g0(2, 2);
  g0 << 2.0, 0.3, 0.3, 1.0;
  const MetricField g = constant_metric(t, g0);
  CHECK(sup_norm(apply_Q(t, g, make_scalar(t, 4.0))) <= 1e-10);
  CHECK(sup_norm(apply_Qstar(t, g, make_scalar(t, 4.0))) <= 1e-10);
  const auto s = sample(t, [](auto x) { return std::sin(2 * pi * x[0]); });
  CHECK(max_diff(apply_Q(t, g, s), apply_Qstar(t, g, s)) <= 1e-10);

  const MetricField id = constant_metric(t, RealMat::Identity(2, 2));
  const auto expect = sample(t, [](auto x) { return -(pi * pi / 2) * std::sin(2 * pi * x[0]); });
  CHECK(max_diff(apply_Qstar(t, id, s), expect) <= (1.0 / 8) * std::pow(2 * pi, 4) / (12.0 * 32 * 32));
  CHECK(gauduchon_residual(t, g) <= 1e-10);
}

TEST_CASE("adjointness and constants in ker Q*") {
  for (int n = 2; n <= 3; ++n) {
    AffineTorus t(n, n == 2 ? 32 : 8);
    Rng rng(100 + n);
    const MetricField g = random_metric(t, rng, 0.5);
    CHECK(sup_norm(apply_Qstar(t, g, make_scalar(t, 1.0))) <= 1e-10);
    for (int trial = 0; trial < 5; ++trial) {
      const ScalarField phi = random_periodic_scalar(t, rng, 1.0), psi = random_periodic_scalar(t, rng, 1.0);
      const cd lhs = inner_product_g(t, g, apply_Q(t, g, phi), psi);
      const cd rhs = inner_product_g(t, g, phi, apply_Qstar(t, g, psi));
      CHECK(std::abs(lhs - rhs) <= 10.0 / (t.resolution() * t.resolution()));
      CHECK(std::abs(lhs - rhs) <= 1e-9);
    }
  }
}

TEST_CASE("coloured assembly reproduces the operator") {
  AffineTorus t(2, 12);
  Rng rng(5);
  const MetricField g = random_metric(t, rng, 0.4);
  auto apply = [&](const Eigen::VectorXd& v) {
    ScalarField phi(t.size());
    for (std::size_t x = 0; x < t.size(); ++x) phi[x] = v[x];
    const ScalarField q = apply_Q(t, g, phi);
    Eigen::VectorXd out(t.size());
    for (std::size_t x = 0; x < t.size(); ++x) out[x] = q[x].real();
    return out;
  };
  const auto Q = assemble_local(t, 1, 1, apply);
  const auto Qd = assemble_local(t, 1, 12, apply);
  Eigen::VectorXd v = Eigen::VectorXd::Random(t.size());
  CHECK((Q * v - apply(v)).norm() <= 1e-10 * apply(v).norm());
  CHECK((Qd * v - apply(v)).norm() <= 1e-10 * apply(v).norm());
}

TEST_CASE("Gauduchon factor: trivial cases") {
  AffineTorus t(2, 16);
  const auto r = find_gauduchon_factor(t, constant_metric(t, RealMat::Identity(2, 2)));
  for (const auto& v : r.factor) CHECK(std::abs(v - 1.0) <= 1e-10);
  AffineTorus t1(1, 16);
  Rng rng(1);
  const auto r1 = find_gauduchon_factor(t1, random_metric(t1, rng, 0.5));
  CHECK(r1.trivially_gauduchon);
  for (const auto& v : r1.factor) CHECK(v == cd(1.0));
}

TEST_CASE("Gauduchon factor for the sine conformal metric") {
  AffineTorus t(2, 32);
  const MetricField g = sine_conformal_metric(t, 0.5);
  const auto r = find_gauduchon_factor(t, g);
  CHECK(r.residual <= 1e-8);
  double mn = 1e9;
  for (const auto& v : r.factor) mn = std::min(mn, v.real());
  CHECK(mn > 0.0);
  CHECK(r.kernel_dimension == 1);
  CHECK(r.smallest_singular_values.size() >= 2);
  CHECK(r.smallest_singular_values[1] > 1e3 * r.smallest_singular_values[0]);
  CHECK(gauduchon_residual(t, r.metric) <= 1e-8);
  const auto again = find_gauduchon_factor(t, r.metric);
  for (const auto& v : again.factor) CHECK(std::abs(v - 1.0) <= 1e-6);

  // Quadrature consequence of adjointness on a Gauduchon metric.
  Rng rng(3);
  const ScalarField psi = random_periodic_scalar(t, rng, 1.0);
  const ScalarField lap = trace_g(r.metric, del_delbar(t, scalar_form(t, psi)));
  CHECK(std::abs(inner_product_g(t, r.metric, lap, make_scalar(t, 1.0))) <= 1e-9);
}

TEST_CASE("Gauduchon factor on a random metric in dimension three") {
  AffineTorus t(3, 8);
  Rng rng(17);
  const MetricField g = random_metric(t, rng, 0.4);
  const auto r = find_gauduchon_factor(t, g);
  CHECK(r.residual <= 1e-8);
  CHECK(r.kernel_dimension == 1);
  CHECK(gauduchon_residual(t, r.metric) <= 1e-8);
}

TEST_CASE("spectral backend Gauduchon factor") {
  AffineTorus t(2, 16, DerivativeBackend::Spectral);
  const auto r = find_gauduchon_factor(t, sine_conformal_metric(t, 0.5));
  CHECK(r.residual <= 1e-8);
  CHECK(r.kernel_dimension == 1);
}
