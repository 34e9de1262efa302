#include <cmath>
#include <numbers>

#include "ahe/bundle.hpp"
#include "ahe/error.hpp"
#include "ahe/linalg.hpp"
#include "ahe/synthetic.hpp"
#include "doctest.h"
#include <unsupported/Eigen/MatrixFunctions>

using namespace ahe;

namespace {

constexpr double pi = std::numbers::pi;

Mat mat2(cd a, cd b, cd c, cd d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

Mat mat1(cd a) { return Mat::Constant(1, 1, a); }

FlatBundle trivial(int n, int r) { return FlatBundle::build(std::vector<Mat>(n, identity(r))); }

FlatBundle unipotent() { return FlatBundle::build({mat2(1, 1, 0, 1)}); }

HermitianField scalar_metric(const AffineTorus& t, const ScalarField& u) {
  HermitianField H(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) H[x] = mat1(std::exp(-u[x].real()));
  return H;
}

double max_diff(const EndField& a, const EndField& b) {
  double m = 0.0;
  for (std::size_t x = 0; x < a.size(); ++x) m = std::max(m, (a[x] - b[x]).norm());
  return m;
}

}  // namespace

TEST_CASE("bundle construction") {
  const FlatBundle t1 = FlatBundle::build({mat1(1)});
  CHECK(t1.rank() == 1);
  CHECK(t1.dim() == 1);
  const FlatBundle u = unipotent();
  CHECK(u.rank() == 2);
  CHECK((u.logarithm(0) - mat2(0, 1, 0, 0)).norm() <= 1e-12);
  try {
    FlatBundle::build({mat2(0, 1, 1, 0), mat2(1, 1, 0, 1)});
    FAIL("expected NonCommuting");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonCommuting);
    CHECK(std::string(e.what()).find("rho_1 and rho_2") != std::string::npos);
  }
  try {
    FlatBundle::build({mat2(1, 2, 2, 4)});
    FAIL("expected Singular");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Singular);
  }
  CHECK(FlatBundle::build({mat1(2)}).log_det_slope(0) == doctest::Approx(-2.0 * std::log(2.0)));
}

TEST_CASE("equivariant shifts") {
  AffineTorus t(1, 16);
  // Trivial monodromy: plain periodic shift.
  Rng rng(1);
  const FlatBundle triv = trivial(1, 2);
  const HermitianField P = random_periodic_hpd(t, 2, rng, 0.5, false);
  const HermitianField s = shift_equivariant(triv, t, P, 0, 1);
  for (std::size_t x = 0; x < t.size(); ++x) CHECK((s[x] - P[(x + 1) % 16]).norm() == 0.0);

  // Constant endomorphism commuting with the monodromy.
  const FlatBundle diag = FlatBundle::build({mat2(2, 0, 0, 3)});
  EndField F(t.size(), mat2(5, 0, 0, -1));
  const EndField sf = shift_equivariant(diag, t, F, 0, -1);
  CHECK(max_diff(sf, F) <= 1e-15);

  // H = 4^{-x} with rho = [2].
  const FlatBundle two = FlatBundle::build({mat1(2)});
  HermitianField H(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) H[x] = mat1(std::pow(4.0, -t.position(x, 0)));
  const HermitianField sh = shift_equivariant(two, t, H, 0, 1);
  for (std::size_t x = 0; x < t.size(); ++x)
    CHECK(std::abs(sh[x](0, 0) - std::pow(4.0, -(t.position(x, 0) + 1.0 / 16))) <= 1e-15);

  // N forward shifts apply the twist once per point; N back undo it.
  const FlatBundle u = unipotent();
  const HermitianField Hu = random_twisted_metric(u, t, rng, 0.3);
  HermitianField w = Hu;
  for (int i = 0; i < 16; ++i) w = shift_equivariant(u, t, w, 0, 1);
  for (std::size_t x = 0; x < t.size(); ++x) CHECK((w[x] - u.twist_metric(Hu[x], 0, 1)).norm() <= 1e-13);
  for (int i = 0; i < 16; ++i) w = shift_equivariant(u, t, w, 0, -1);
  for (std::size_t x = 0; x < t.size(); ++x) CHECK((w[x] - Hu[x]).norm() <= 1e-13);
}

TEST_CASE("background metric satisfies the twist") {
  AffineTorus t(2, 8);
  Rng rng(4);
  const FlatBundle b = FlatBundle::build({mat2(1, 1, 0, 1), mat2(2, 3, 0, 2)});
  const HermitianField H = random_twisted_metric(b, t, rng, 0.4);
  require_hpd(H);
  // Extending the field by one more grid step must agree with the twisted wrap.
  const std::vector<Mat> Uinv = inverse_transport(b, t);
  for (int k = 0; k < 2; ++k) {
    Mat rho = b.monodromy(k);
    CHECK((Eigen::MatrixXcd(b.logarithm(k)).exp() - Eigen::MatrixXcd(rho)).norm() <= 1e-12);
    (void)Uinv;
  }
  CHECK((commutator(b.logarithm(0), b.logarithm(1))).norm() <= 1e-12);
}

TEST_CASE("connection examples") {
  AffineTorus t(1, 32);
  CHECK(sup_norm(hermitian_connection(trivial(1, 2), t, HermitianField(t.size(), identity(2)))) == 0.0);

  const auto u = sample(t, [](auto x) { return 0.3 * std::sin(2 * pi * x[0]); });
  const FlatBundle line = trivial(1, 1);
  const EndForm th = hermitian_connection(line, t, scalar_metric(t, u));
  const auto du = partial_derivative(t, u, 0);
  for (std::size_t x = 0; x < t.size(); ++x) CHECK(std::abs(th.coeff(0, 0)[x](0, 0) + 0.5 * du[x]) <= 1e-14);

  // h = a^{-2x} on the bundle rho = [a]: linear log-metric with slope -2 log a.
  const double a = 3.0;
  const FlatBundle lin = FlatBundle::build({mat1(a)});
  HermitianField H(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) H[x] = mat1(std::pow(a, -2.0 * t.position(x, 0)));
  const EndForm th2 = hermitian_connection(lin, t, H);
  for (std::size_t x = 0; x < t.size(); ++x) CHECK(std::abs(th2.coeff(0, 0)[x](0, 0) + std::log(a)) <= 1e-12);
  CHECK(sup_norm(extended_curvature(lin, t, H)) <= 1e-9);
  const LogMetricDecomposition lm = log_metric_decomposition(lin, t, H);
  CHECK(lm.linear_part[0] == doctest::Approx(-2.0 * std::log(a)));
  CHECK(sup_norm(lm.periodic_part) <= 1e-12);
}

TEST_CASE("curvature and mean curvature examples") {
  AffineTorus t(1, 64);
  const MetricField g = constant_metric(t, RealMat::Identity(1, 1));
  CHECK(sup_norm(extended_curvature(trivial(1, 2), t, HermitianField(t.size(), identity(2)))) == 0.0);
  CHECK(sup_norm(mean_curvature(trivial(1, 2), t, g, HermitianField(t.size(), identity(2)))) == 0.0);

  const auto u = sample(t, [](auto x) { return std::sin(2 * pi * x[0]); });
  const FlatBundle line = trivial(1, 1);
  const HermitianField H = scalar_metric(t, u);
  const EndForm om = extended_curvature(line, t, H);
  const Form ddu = del_delbar(t, scalar_form(t, u));
  for (std::size_t x = 0; x < t.size(); ++x) CHECK(std::abs(om.coeff(0, 0)[x](0, 0) - ddu.coeff(0, 0)[x]) <= 1e-10);
  const Form c1 = first_chern_form(line, t, H);
  for (std::size_t x = 0; x < t.size(); ++x) CHECK(std::abs(c1.coeff(0, 0)[x] - ddu.coeff(0, 0)[x]) <= 1e-10);

  const EndField K = mean_curvature(line, t, g, H);
  const double bound = 0.25 * std::pow(2 * pi, 4) / (12.0 * 64 * 64);
  for (std::size_t x = 0; x < t.size(); ++x)
    CHECK(std::abs(K[x](0, 0) + pi * pi * std::sin(2 * pi * t.position(x, 0))) <= bound);

  // Direct sums are exactly blockwise.
  std::vector<double> err;
  for (int N : {16, 32, 64}) {
    AffineTorus t2(2, N);
    Rng rng(9);
    const MetricField g2 = random_metric(t2, rng, 0.3);
    const FlatBundle b1 = FlatBundle::build({mat1(2), mat1(1)});
    const FlatBundle b2 = FlatBundle::build({mat2(1, 1, 0, 1), mat2(3, 0, 0, 3)});
    Mat r1 = Mat::Zero(3, 3), r2 = Mat::Zero(3, 3);
    r1(0, 0) = 2;
    r1.block(1, 1, 2, 2) = mat2(1, 1, 0, 1);
    r2(0, 0) = 1;
    r2.block(1, 1, 2, 2) = mat2(3, 0, 0, 3);
    const FlatBundle sum = FlatBundle::build({r1, r2});
    const HermitianField h1 = random_twisted_metric(b1, t2, rng, 0.3);
    const HermitianField h2 = random_twisted_metric(b2, t2, rng, 0.3);
    HermitianField hs(t2.size());
    for (std::size_t x = 0; x < t2.size(); ++x) {
      hs[x] = Mat::Zero(3, 3);
      hs[x](0, 0) = h1[x](0, 0);
      hs[x].block(1, 1, 2, 2) = h2[x];
    }
    const EndField K1 = mean_curvature(b1, t2, g2, h1), K2 = mean_curvature(b2, t2, g2, h2),
                   Ks = mean_curvature(sum, t2, g2, hs);
    double e = 0.0;
    for (std::size_t x = 0; x < t2.size(); ++x) {
      e = std::max(e, std::abs(Ks[x](0, 0) - K1[x](0, 0)));
      e = std::max(e, (Ks[x].block(1, 1, 2, 2) - K2[x]).norm());
      CHECK(Ks[x].block(0, 1, 1, 2).norm() <= 1e-10);
      CHECK(Ks[x].block(1, 0, 2, 1).norm() <= 1e-10);
    }
    err.push_back(e);
  }
  for (double e : err) CHECK(e <= 1e-8);
}

TEST_CASE("Chern form differences are del delbar of a function") {
  AffineTorus t(2, 16);
  Rng rng(12);
  const FlatBundle b = FlatBundle::build({mat2(1, 1, 0, 1), mat2(2, 0, 0, 2)});
  for (int trial = 0; trial < 5; ++trial) {
    const HermitianField h = random_twisted_metric(b, t, rng, 0.5), hp = random_twisted_metric(b, t, rng, 0.5);
    Form diff = first_chern_form(b, t, hp);
    diff -= first_chern_form(b, t, h);
    const auto lh = log_metric_decomposition(b, t, h), lhp = log_metric_decomposition(b, t, hp);
    ScalarField d(t.size());
    for (std::size_t x = 0; x < t.size(); ++x) d[x] = lh.periodic_part[x] - lhp.periodic_part[x];
    Form expect = del_delbar(t, scalar_form(t, d));
    expect -= diff;
    CHECK(sup_norm(expect) <= 1e-10);
  }
}

TEST_CASE("Hermiticity, reality and the trace identity") {
  Rng rng(21);
  for (int n = 1; n <= 3; ++n) {
    AffineTorus t(n, n == 3 ? 8 : 16);
    std::vector<Mat> mono;
    for (int k = 0; k < n; ++k) mono.push_back(k == 0 ? mat2(1, 1, 0, 1) : mat2(2, 1, 0, 2));
    const FlatBundle b = FlatBundle::build(mono, FieldKind::Real);
    const MetricField g = random_metric(t, rng, 0.3);
    const HermitianField H = random_twisted_metric(b, t, rng, 0.4);
    const EndField K = mean_curvature(b, t, g, H);
    const EndForm th = hermitian_connection(b, t, H);
    const EndForm om = extended_curvature(b, t, H);
    const Form c1 = first_chern_form(b, t, H);
    for (std::size_t x = 0; x < t.size(); ++x) {
      CHECK(H[x].imag().norm() == 0.0);
      const Mat HK = H[x] * K[x];
      CHECK((HK - HK.adjoint()).norm() <= 1e-10 * std::max(1.0, HK.norm()));
      CHECK(K[x].imag().norm() <= 1e-12);
      for (int k = 0; k < n; ++k) CHECK(th.coeff(k, 0)[x].imag().norm() <= 1e-12);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          CHECK(om.coeff(i, j)[x].imag().norm() <= 1e-12);
          CHECK(std::abs(c1.coeff(i, j)[x].imag()) <= 1e-12);
        }
    }
    // integral of tr K omega^n / nu = n integral of c1 ^ omega^{n-1} / nu
    const ScalarField vol = volume_density(t, g);
    ScalarField lhs(t.size());
    for (std::size_t x = 0; x < t.size(); ++x) lhs[x] = K[x].trace() * vol[x];
    const ScalarField rhs = div_by_nu(wedge(c1, form_power(kahler_form(t, g), n - 1)));
    const cd L = integrate(t, lhs), R = static_cast<double>(n) * integrate(t, rhs);
    CHECK(std::abs(L - R) <= 10.0 / (t.resolution() * t.resolution()));
    CHECK(std::abs(L - R) <= 1e-9);
  }
}

TEST_CASE("covariant del_0") {
  AffineTorus t(2, 16);
  Rng rng(31);
  const FlatBundle b = FlatBundle::build({mat2(1, 1, 0, 1), mat2(1, 0, 0, 1)});
  const HermitianField H0 = random_twisted_metric(b, t, rng, 0.5);
  CHECK(sup_norm(covariant_del0(b, t, H0, EndField(t.size(), identity(2)))) <= 1e-12);

  const FlatBundle triv = trivial(2, 2);
  const EndField phi = random_selfadjoint(triv, t, HermitianField(t.size(), identity(2)), rng, 1.0);
  const EndForm d0 = covariant_del0(triv, t, HermitianField(t.size(), identity(2)), phi);
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        ScalarField c(t.size());
        for (std::size_t x = 0; x < t.size(); ++x) c[x] = phi[x](i, j);
        const ScalarField dc = partial_derivative(t, c, k);
        for (std::size_t x = 0; x < t.size(); ++x) CHECK(std::abs(d0.coeff(k, 0)[x](i, j) - 0.5 * dc[x]) <= 1e-12);
      }
}

TEST_CASE("distributional derivative identity converges at second order") {
  // delbar[h0(d0 phi, xi)] = h0(delbar d0 phi, xi) - h0(d0 phi, d0 xi)
  std::vector<double> err;
  for (int N : {16, 32, 64}) {
    AffineTorus t(1, N);
    Rng rng(55);
    const FlatBundle b = unipotent();
    const HermitianField H0 = random_twisted_metric(b, t, rng, 0.4);
    const EndField phi = random_selfadjoint(b, t, H0, rng, 0.6);
    const EndField xi = random_selfadjoint(b, t, H0, rng, 0.6);
    const EndForm A = covariant_del0(b, t, H0, phi);
    const EndForm B = covariant_del0(b, t, H0, xi);
    const EndForm dA = end_delbar(b, t, A);
    Form lhs_in(t, 1, 0);
    for (std::size_t x = 0; x < t.size(); ++x)
      lhs_in.coeff(0, 0)[x] = (A.coeff(0, 0)[x] * ahe::h_adjoint(H0[x], xi[x])).trace();
    const Form lhs = dolbeault_delbar(t, lhs_in);
    double e = 0.0;
    for (std::size_t x = 0; x < t.size(); ++x) {
      const cd r = (dA.coeff(0, 0)[x] * ahe::h_adjoint(H0[x], xi[x])).trace() -
                   (A.coeff(0, 0)[x] * ahe::h_adjoint(H0[x], B.coeff(0, 0)[x])).trace();
      e = std::max(e, std::abs(lhs.coeff(0, 0)[x] - r));
    }
    err.push_back(e);
  }
  CHECK(err[0] / err[1] > 3.0);
  CHECK(err[1] / err[2] > 3.5);
}

TEST_CASE("second fundamental form") {
  AffineTorus t(1, 32);
  Rng rng(61);
  const FlatBundle d = FlatBundle::build({mat2(2, 0, 0, 3)});
  HermitianField H(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) {
    const double s = t.position(x, 0);
    H[x] = mat2(std::pow(4.0, -s), 0, 0, std::pow(9.0, -s));
  }
  CHECK(sup_norm(second_fundamental_form(d, t, H, EndField(t.size(), identity(2)))) <= 1e-12);
  CHECK(sup_norm(second_fundamental_form(d, t, H, EndField(t.size(), Mat::Zero(2, 2)))) <= 1e-12);
  CHECK(sup_norm(second_fundamental_form(d, t, H, EndField(t.size(), mat2(1, 0, 0, 0)))) <= 1e-12);

  const FlatBundle u = unipotent();
  const HermitianField Hu = background_metric(u, t);
  EndField pi(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) {
    Mat B = Mat::Zero(2, 1);
    B(0, 0) = 1.0;
    pi[x] = B * (B.adjoint() * Hu[x] * B).inverse() * B.adjoint() * Hu[x];
  }
  CHECK(sup_norm(second_fundamental_form(u, t, Hu, pi)) > 0.1);
  CHECK_THROWS_AS(second_fundamental_form(u, t, Hu, EndField(t.size(), mat2(1, 1, 0, 1))), Error);
}

TEST_CASE("metric change formula converges at second order") {
  std::vector<double> err;
  for (int N : {16, 32, 64}) {
    AffineTorus t(1, N);
    Rng rng(71);
    const FlatBundle b = unipotent();
    const MetricField g = random_metric(t, rng, 0.3);
    const HermitianField H0 = random_twisted_metric(b, t, rng, 0.4);
    const EndField f = random_positive(b, t, H0, rng, 0.5);
    const EndField K0 = mean_curvature(b, t, g, H0);
    const EndField K = mean_curvature(b, t, g, apply_endomorphism(H0, f));
    const EndField C = metric_change_term(b, t, g, H0, f);
    double e = 0.0;
    for (std::size_t x = 0; x < t.size(); ++x) e = std::max(e, (K[x] - K0[x] - C[x]).norm());
    err.push_back(e);
  }
  CHECK(err[0] / err[1] > 3.0);
  CHECK(err[1] / err[2] > 3.5);
}

TEST_CASE("dual connection identity on a real bundle") {
  // d[h(s1, s2)] = h(D s1, s2) + h(s1, D* s2) defines D*; its (1,0) part is twice theta.
  AffineTorus t(2, 32);
  Rng rng(81);
  const FlatBundle b = FlatBundle::build({identity(3), identity(3)}, FieldKind::Real);
  const HermitianField H = random_twisted_metric(b, t, rng, 0.5);
  const EndForm th = hermitian_connection(b, t, H);
  std::normal_distribution<double> nd;
  Eigen::Matrix<cd, Eigen::Dynamic, 1, 0, kMaxRank, 1> s1(3), s2(3);
  for (int i = 0; i < 3; ++i) {
    s1[i] = nd(rng);
    s2[i] = nd(rng);
  }
  for (int k = 0; k < 2; ++k) {
    ScalarField pairing(t.size());
    for (std::size_t x = 0; x < t.size(); ++x) pairing[x] = s2.dot(H[x] * s1);
    const ScalarField dp = partial_derivative(t, pairing, k);
    for (std::size_t x = 0; x < t.size(); ++x) {
      const Mat dual = 2.0 * th.coeff(k, 0)[x];
      // constant flat sections: d[h(s1,s2)] = h(s1, Gamma s2) with Gamma = H^{-1} dH
      const cd rhs = (dual * s2).dot(H[x] * s1);
      CHECK(std::abs(dp[x] - rhs) <= 1e-10);
      CHECK(dual.imag().norm() == 0.0);
    }
  }
}
