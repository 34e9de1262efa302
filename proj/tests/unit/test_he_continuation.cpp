#include <cmath>
#include <numbers>

#include "ahe/continuation.hpp"
#include "ahe/error.hpp"
#include "ahe/gauduchon.hpp"
#include "ahe/linalg.hpp"
#include "ahe/stability.hpp"
#include "ahe/synthetic.hpp"
#include "doctest.h"

using namespace ahe;

namespace {

constexpr double pi = std::numbers::pi;

Mat mat2(cd a, cd b, cd c, cd d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

MetricField flat_metric(const AffineTorus& t) { return constant_metric(t, RealMat::Identity(t.dim(), t.dim())); }

double max_diff(const EndField& a, const EndField& b) {
  double m = 0.0;
  for (std::size_t x = 0; x < a.size(); ++x) m = std::max(m, (a[x] - b[x]).norm());
  return m;
}

double max_norm(const EndField& a) {
  double m = 0.0;
  for (const auto& v : a) m = std::max(m, v.norm());
  return m;
}

HEProblem problem(const FlatBundle& b, const AffineTorus& t, const MetricField& g, const HermitianField& h0) {
  return make_problem(b, t, g, h0);
}

}  // namespace

TEST_CASE("residual examples") {
  const AffineTorus t(1, 32);
  const FlatBundle triv = FlatBundle::build({identity(2)});
  const HEProblem p = problem(triv, t, flat_metric(t), HermitianField(t.size(), identity(2)));
  const EndField I(t.size(), identity(2));
  CHECK(max_norm(residual_L_eps(p, I, 0.7)) == 0.0);
  const double c = 0.3;
  const EndField ec(t.size(), std::exp(c) * identity(2));
  const EndField L = residual_L_eps(p, ec, 0.7);
  CHECK(max_diff(L, EndField(t.size(), 0.7 * c * identity(2))) <= 1e-14);

  // Scalar oracle: h0 = 1, f = exp(-v): K = -1/4 D^2 log f = 1/4 D^2 v, so L = 1/4 v'' - eps v.
  const FlatBundle line = FlatBundle::build({identity(1)});
  const HEProblem q = problem(line, t, flat_metric(t), HermitianField(t.size(), identity(1)));
  const int N = 32;
  EndField f(t.size());
  std::vector<double> v(N);
  for (int i = 0; i < N; ++i) {
    v[i] = 0.4 * std::sin(2 * pi * i / N) + 0.1 * std::cos(4 * pi * i / N);
    f[i] = Mat::Constant(1, 1, std::exp(-v[i]));
  }
  const double eps = 0.25;
  const EndField Lf = residual_L_eps(q, f, eps);
  double err = 0.0;
  for (int i = 0; i < N; ++i) {
    const double d2 = (v[(i + 1) % N] - 2 * v[i] + v[(i + N - 1) % N]) * N * N;
    err = std::max(err, std::abs(Lf[i](0, 0) - (0.25 * d2 - eps * v[i])));
  }
  CHECK(err <= 1e-10);
}

TEST_CASE("f L is h0-Hermitian") {
  const AffineTorus t(2, 16);
  Rng rng(3);
  const FlatBundle b = FlatBundle::build({random_matrix(2, rng, 0.3, false), identity(2)});
  const HermitianField h0 = random_twisted_metric(b, t, rng, 0.3);
  const HEProblem p = problem(b, t, random_metric(t, rng, 0.2), h0);
  const EndField f = random_positive(b, t, h0, rng, 0.4);
  CHECK(selfadjointness_defect(p, f, residual_L_eps(p, f, 0.3)) <= 1e-10);
}

TEST_CASE("einstein constant vanishes on tori") {
  Rng rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    const AffineTorus t(2, 16);
    Mat r1 = random_matrix(2, rng, 0.5, false);
    const FlatBundle b = FlatBundle::build({r1, r1 * r1});
    const HermitianField h = random_twisted_metric(b, t, rng, 0.3);
    CHECK(std::abs(einstein_constant(b, t, h, flat_metric(t), false)) <= 10.0 / 256.0);
    CHECK(einstein_constant(b, t, h, flat_metric(t)) == 0.0);
  }
  const AffineTorus t(1, 16);
  const FlatBundle line = FlatBundle::build({identity(1)});
  CHECK(einstein_constant(line, t, HermitianField(t.size(), identity(1)), flat_metric(t), false) == 0.0);
}

TEST_CASE("background normalization") {
  SUBCASE("already flat") {
    const AffineTorus t(1, 32);
    const FlatBundle b = FlatBundle::build({identity(2)});
    const HermitianField h(t.size(), identity(2));
    const auto nb = normalize_background(b, t, h, flat_metric(t), 0.0);
    CHECK(sup_norm(nb.rho) <= 1e-12);
    CHECK(max_diff(nb.f1, EndField(t.size(), identity(2))) <= 1e-12);
  }
  SUBCASE("scalar Poisson closed form") {
    const int N = 32;
    const AffineTorus t(1, N);
    const FlatBundle b = FlatBundle::build({identity(1)});
    HermitianField h(t.size());
    for (int i = 0; i < N; ++i) h[i] = Mat::Constant(1, 1, std::exp(-std::sin(2 * pi * i / N)));
    const auto nb = normalize_background(b, t, h, flat_metric(t), 0.0);
    // e^rho h0' must be flat: rho = sin(2 pi x), mean zero.
    double err = 0.0;
    for (int i = 0; i < N; ++i) err = std::max(err, std::abs(nb.rho[i] - std::sin(2 * pi * i / N)));
    CHECK(err <= 1e-10);
    CHECK(nb.trace_defect <= 1e-6);
  }
  SUBCASE("rank 2 random background") {
    const AffineTorus t(2, 16);
    Rng rng(9);
    const FlatBundle b = FlatBundle::build({mat2(2, 0, 0, 3), mat2(1.5, 0, 0, 0.7)});
    const MetricField g = find_gauduchon_factor(t, sine_conformal_metric(t, 0.3)).metric;
    const HermitianField h = random_twisted_metric(b, t, rng, 0.3);
    const double gamma = einstein_constant(b, t, h, g);
    const auto nb = normalize_background(b, t, h, g, gamma);
    CHECK(nb.trace_defect <= 10.0 / 256.0);
    CHECK(det_defect(nb.f1) <= 1e-6);
    HEProblem p = problem(b, t, g, nb.h0);
    p.gamma = gamma;
    p.log_det_h0 = nb.log_det_h0;
    CHECK(residual_norm(p, nb.f1, residual_L_eps(p, nb.f1, 1.0)) <= 1e-7);
    for (std::size_t x = 0; x < t.size(); ++x) CHECK(selfadjoint_eigenvalues(nb.h0[x], nb.f1[x])[0] > 0.0);
  }
}

TEST_CASE("linearization") {
  SUBCASE("zero direction") {
    const AffineTorus t(1, 16);
    const FlatBundle b = FlatBundle::build({identity(2)});
    const HEProblem p = problem(b, t, flat_metric(t), HermitianField(t.size(), identity(2)));
    const EndField f(t.size(), identity(2)), z(t.size(), Mat::Zero(2, 2));
    CHECK(max_norm(linearize_apply(p, f, z, 0.5)) == 0.0);
    CHECK(max_norm(linearize_fd(p, f, z, 0.5)) == 0.0);
  }
  SUBCASE("identity of the trivial bundle") {
    const AffineTorus t(2, 16);
    Rng rng(1);
    const FlatBundle b = FlatBundle::build({identity(2), identity(2)});
    const HermitianField h0(t.size(), identity(2));
    const HEProblem p = problem(b, t, random_metric(t, rng, 0.2), h0);
    const EndField f(t.size(), identity(2));
    const EndField phi = random_selfadjoint(b, t, h0, rng, 0.5);
    const double eps = 0.3;
    const EndField an = linearize_apply(p, f, phi, eps);
    EndField expect = principal_term(p, phi);
    for (std::size_t x = 0; x < t.size(); ++x) expect[x] += eps * phi[x];
    CHECK(max_diff(an, expect) <= 1e-10 * max_norm(expect));
    CHECK(max_diff(an, linearize_fd(p, f, phi, eps)) <= 1e-5 * max_norm(an));
  }
  SUBCASE("random states") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
      const AffineTorus t(trial % 2 ? 2 : 1, 16);
      const Mat r1 = random_matrix(2, rng, 0.4, false);
      std::vector<Mat> m{r1};
      if (t.dim() == 2) m.push_back(r1 * r1);
      const FlatBundle b = FlatBundle::build(m);
      const HermitianField h0 = random_twisted_metric(b, t, rng, 0.3);
      const HEProblem p = problem(b, t, random_metric(t, rng, 0.2), h0);
      const EndField f = random_positive(b, t, h0, rng, 0.4);
      const EndField phi = random_selfadjoint(b, t, h0, rng, 0.4);
      const double eps = 0.1 * (trial + 1);
      const EndField an = linearize_apply(p, f, phi, eps);
      CHECK(max_diff(an, linearize_fd(p, f, phi, eps)) <= 1e-5 * max_norm(an));
    }
  }
  SUBCASE("finite-difference error is second order") {
    const AffineTorus t(1, 16);
    Rng rng(23);
    const FlatBundle b = FlatBundle::build({random_matrix(2, rng, 0.4, false)});
    const HermitianField h0 = random_twisted_metric(b, t, rng, 0.3);
    const HEProblem p = problem(b, t, flat_metric(t), h0);
    const EndField f = random_positive(b, t, h0, rng, 0.4);
    const EndField phi = random_selfadjoint(b, t, h0, rng, 0.4);
    const EndField an = linearize_apply(p, f, phi, 0.5);
    const double e1 = max_diff(an, linearize_fd(p, f, phi, 0.5, 4e-2));
    const double e2 = max_diff(an, linearize_fd(p, f, phi, 0.5, 2e-2));
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));
  }
}

TEST_CASE("newton solve") {
  SUBCASE("start at the solution") {
    const AffineTorus t(1, 16);
    const FlatBundle b = FlatBundle::build({identity(2)});
    const HEProblem p = problem(b, t, flat_metric(t), HermitianField(t.size(), identity(2)));
    const auto st = newton_solve(p, 0.5, EndField(t.size(), identity(2)), {});
    CHECK(st.newton_iterations == 0);
  }
  SUBCASE("rank 1 after normalization") {
    const int N = 32;
    const AffineTorus t(1, N);
    const FlatBundle b = FlatBundle::build({identity(1)});
    HermitianField h(t.size());
    for (int i = 0; i < N; ++i) h[i] = Mat::Constant(1, 1, std::exp(-std::sin(2 * pi * i / N)));
    const auto nb = normalize_background(b, t, h, flat_metric(t), 0.0);
    const HEProblem p = problem(b, t, flat_metric(t), nb.h0);
    const auto st = newton_solve(p, 1.0, nb.f1, {});
    CHECK(st.det_defect <= 1e-8);
    CHECK(st.residual <= 1e-8);
  }
  SUBCASE("rank 2 from a perturbed start") {
    const AffineTorus t(1, 32);
    Rng rng(4);
    const FlatBundle b = FlatBundle::build({mat2(1, 1, 0, 1)});
    const auto nb = normalize_background(b, t, random_twisted_metric(b, t, rng, 0.3), flat_metric(t), 0.0);
    HEProblem p = problem(b, t, flat_metric(t), nb.h0);
    p.log_det_h0 = nb.log_det_h0;
    // Perturb log f1 by a traceless h0-self-adjoint field.
    const EndField Y = random_selfadjoint(b, t, nb.h0, rng, 0.05);
    EndField f(t.size());
    for (std::size_t x = 0; x < t.size(); ++x) {
      const Mat lf = selfadjoint_function(nb.h0[x], nb.f1[x], [](double v) { return std::log(v); });
      const Mat y = Y[x] - (Y[x].trace() / 2.0) * identity(2);
      f[x] = selfadjoint_function(nb.h0[x], lf + y, [](double v) { return std::exp(v); });
    }
    const auto st = newton_solve(p, 0.5, f, {});
    CHECK(st.residual <= 1e-7);
    CHECK(st.det_defect <= 1e-6);
    CHECK(st.newton_iterations > 0);
  }
}

TEST_CASE("continuation converges for polystable bundles") {
  SUBCASE("trivial line with perturbed metric") {
    const int N = 64;
    const AffineTorus t(1, N);
    Rng rng(2);
    const FlatBundle b = FlatBundle::build({identity(1)});
    const HermitianField h = random_periodic_hpd(t, 1, rng, 0.4, true);
    const HEResult r = run_continuation(b, t, flat_metric(t), h);
    CHECK(r.status == HEStatus::Converged);
    CHECK(r.K_defect <= 1e-6);
    double lo = 1e300, hi = 0.0;
    for (const auto& v : r.final_metric) {
      lo = std::min(lo, v(0, 0).real());
      hi = std::max(hi, v(0, 0).real());
    }
    CHECK(hi / lo - 1.0 <= 1e-6);
  }
  SUBCASE("diag(2,3)") {
    const AffineTorus t(1, 64);
    Rng rng(8);
    const FlatBundle b = FlatBundle::build({mat2(2, 0, 0, 3)});
    const HermitianField P = random_periodic_hpd(t, 2, rng, 0.3, false);
    const HEResult r = run_continuation(b, t, flat_metric(t), background_metric(b, t, &P));
    CHECK(r.status == HEStatus::Converged);
    CHECK(r.K_defect <= 1e-6);
    double off = 0.0;
    for (const auto& H : r.final_metric)
      off = std::max(off, std::abs(H(0, 1)) / std::sqrt(H(0, 0).real() * H(1, 1).real()));
    CHECK(off <= 1e-6);
    for (const auto& e : r.state.history) CHECK(e.det_defect <= 1e-6);
    CHECK(r.trace_defect <= 10.0 / (64.0 * 64.0));
  }
}

TEST_CASE("continuation blows up for the unipotent bundle") {
  const AffineTorus t(1, 32);
  Rng rng(6);
  const FlatBundle b = FlatBundle::build({mat2(1, 1, 0, 1)});
  const HermitianField P = random_periodic_hpd(t, 2, rng, 0.3, false);
  const HEResult r = run_continuation(b, t, flat_metric(t), background_metric(b, t, &P));
  CHECK(r.status == HEStatus::Blowup);
  CHECK(r.m_slope > 0.05);
  const auto& h = r.state.history;
  REQUIRE(h.size() > 4);
  CHECK(h.back().m > h.front().m + 2.0);
  CHECK(std::isfinite(r.max_eps_m));
  CHECK(r.max_eps_m <= h.front().m + 1.0);
  const HEProblem p = problem(b, t, flat_metric(t), r.state.h0);
  CHECK(spectral_split(p, r.state.f).gap >= 1e3);
}

TEST_CASE("an approximate solution at finite m is not convergence") {
  // With the plain background, eps = 0 is met to tolerance while f is still running off.
  const AffineTorus t(1, 32);
  const FlatBundle b = FlatBundle::build({mat2(1, 1, 0, 1)});
  const HEResult r = run_continuation(b, t, flat_metric(t), background_metric(b, t));
  CHECK(r.status == HEStatus::Blowup);
  CHECK(r.m_slope > 0.5);
  CHECK(r.state.epsilon < 1e-6);
  CHECK(r.state.m > 9.0);
  for (const auto& e : r.state.history) CHECK(e.det_defect <= 1e-6);
}

TEST_CASE("real Hermitian-Einstein metric") {
  const AffineTorus t(1, 32);
  const double a = std::sqrt(2.0) * pi;
  const FlatBundle b = FlatBundle::build({mat2(std::cos(a), -std::sin(a), std::sin(a), std::cos(a))}, FieldKind::Real);
  const auto sp = conjugate_splitting(b);
  REQUIRE(sp.has_value());
  const RealHEResult r = real_he_metric(b, t, flat_metric(t), sp);
  CHECK(r.used_splitting);
  CHECK(r.status == HEStatus::Converged);
  CHECK(r.reality_defect <= 1e-10);
  CHECK(r.K_defect <= 1e-6);

  // Without a splitting the bundle goes to the complex solver.
  const FlatBundle d = FlatBundle::build({mat2(2, 0, 0, 3)}, FieldKind::Real);
  const RealHEResult rd = real_he_metric(d, t, flat_metric(t), std::nullopt);
  CHECK_FALSE(rd.used_splitting);
  CHECK(rd.status == HEStatus::Converged);
  CHECK(rd.reality_defect <= 1e-10);
}
