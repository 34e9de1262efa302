#include "ahe/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "ahe/linalg.hpp"

namespace ahe {

namespace {

// Wave vectors with entries in {-1, 0, 1}, one per half space, zero excluded.
std::vector<std::array<int, kMaxDim>> low_modes(int n) {
  std::vector<std::array<int, kMaxDim>> out;
  const int total = static_cast<int>(std::pow(3, n));
  for (int c = 0; c < total; ++c) {
    std::array<int, kMaxDim> k{};
    int rest = c;
    for (int i = 0; i < n; ++i) {
      k[i] = rest % 3 - 1;
      rest /= 3;
    }
    int first = 0;
    for (int i = 0; i < n && first == 0; ++i) first = k[i];
    if (first > 0) out.push_back(k);
  }
  return out;
}

double phase(const AffineTorus& t, std::size_t x, const std::array<int, kMaxDim>& k) {
  double s = 0.0;
  for (int i = 0; i < t.dim(); ++i) s += k[i] * t.position(x, i);
  return 2.0 * std::numbers::pi * s;
}

Mat random_block(int r, Rng& rng, bool real, bool hermitian) {
  std::normal_distribution<double> nd;
  Mat m(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) m(i, j) = real ? cd(nd(rng), 0.0) : cd(nd(rng), nd(rng));
  return hermitian ? hermitian_part(m) : m;
}

}  // namespace

ScalarField random_periodic_scalar(const AffineTorus& t, Rng& rng, double amplitude, bool real) {
  std::normal_distribution<double> nd;
  ScalarField f(t.size(), 0.0);
  amplitude /= std::sqrt(2.0 * low_modes(t.dim()).size() + 1.0);
  const cd c0 = real ? cd(nd(rng), 0.0) : cd(nd(rng), nd(rng));
  for (auto& v : f) v = amplitude * c0;
  for (const auto& k : low_modes(t.dim())) {
    const cd a = real ? cd(nd(rng), 0.0) : cd(nd(rng), nd(rng));
    const cd b = real ? cd(nd(rng), 0.0) : cd(nd(rng), nd(rng));
    for (std::size_t x = 0; x < t.size(); ++x) {
      const double ph = phase(t, x, k);
      f[x] += amplitude * (a * std::cos(ph) + b * std::sin(ph));
    }
  }
  return f;
}

Form random_periodic_form(const AffineTorus& t, Rng& rng, int p, int q, double amplitude) {
  Form w(t, p, q);
  for (int a = 0; a < w.rows(); ++a)
    for (int b = 0; b < w.cols(); ++b) w.coeff(a, b) = random_periodic_scalar(t, rng, amplitude, false);
  return w;
}

MetricField random_metric(const AffineTorus& t, Rng& rng, double amplitude) {
  const int n = t.dim();
  std::normal_distribution<double> nd;
  MetricField g(t.size(), RealMat::Zero(n, n));
  std::vector<RealMat> coef;
  const auto modes = low_modes(n);
  for (std::size_t m = 0; m < 2 * modes.size() + 1; ++m) {
    RealMat s(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s(i, j) = nd(rng);
    coef.push_back(0.5 * (s + s.transpose()));
  }
  for (std::size_t x = 0; x < t.size(); ++x) {
    RealMat s = coef[0];
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const double ph = phase(t, x, modes[m]);
      s += std::cos(ph) * coef[2 * m + 1] + std::sin(ph) * coef[2 * m + 2];
    }
    s *= amplitude / std::sqrt(2.0 * modes.size() + 1.0);
    Eigen::SelfAdjointEigenSolver<RealMat> es(s);
    RealMat e = es.eigenvectors() * es.eigenvalues().array().exp().matrix().asDiagonal() * es.eigenvectors().transpose();
    g[x] = 0.5 * (e + e.transpose());
  }
  return g;
}

HermitianField random_periodic_hermitian(const AffineTorus& t, int rank, Rng& rng, double amplitude, bool real) {
  const auto modes = low_modes(t.dim());
  std::vector<Mat> coef;
  for (std::size_t m = 0; m < 2 * modes.size() + 1; ++m) coef.push_back(random_block(rank, rng, real, true));
  HermitianField Y(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) {
    Mat s = coef[0];
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const double ph = phase(t, x, modes[m]);
      s += std::cos(ph) * coef[2 * m + 1] + std::sin(ph) * coef[2 * m + 2];
    }
    Y[x] = (amplitude / std::sqrt(2.0 * modes.size() + 1.0)) * s;
  }
  return Y;
}

HermitianField random_periodic_hpd(const AffineTorus& t, int rank, Rng& rng, double amplitude, bool real) {
  HermitianField Y = random_periodic_hermitian(t, rank, rng, amplitude, real);
  for (auto& y : Y) y = hermitian_function(y, [](double v) { return std::exp(v); });
  return Y;
}

HermitianField random_twisted_metric(const FlatBundle& b, const AffineTorus& t, Rng& rng, double amplitude) {
  const HermitianField P = random_periodic_hpd(t, b.rank(), rng, amplitude, b.field() == FieldKind::Real);
  return background_metric(b, t, &P);
}

EndField random_selfadjoint(const FlatBundle& b, const AffineTorus& t, const HermitianField& H0, Rng& rng,
                            double amplitude) {
  const HermitianField Y = random_periodic_hermitian(t, b.rank(), rng, amplitude, b.field() == FieldKind::Real);
  // U^{-*} Y U^{-1} is twisted like a metric, so H0^{-1} times it is equivariant.
  const std::vector<Mat> Uinv = inverse_transport(b, t);
  EndField out(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) out[x] = H0[x].inverse() * (Uinv[x].adjoint() * Y[x] * Uinv[x]);
  return out;
}

EndField random_positive(const FlatBundle& b, const AffineTorus& t, const HermitianField& H0, Rng& rng,
                         double amplitude) {
  const HermitianField Hp = random_twisted_metric(b, t, rng, amplitude);
  EndField out(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) out[x] = H0[x].inverse() * Hp[x];
  return out;
}

Mat random_matrix(int rank, Rng& rng, double amplitude, bool real) {
  return identity(rank) + amplitude * random_block(rank, rng, real, false);
}

}  // namespace ahe
