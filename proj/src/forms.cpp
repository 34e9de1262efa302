#include "ahe/forms.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include "ahe/error.hpp"

namespace ahe {

int binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  int r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

const std::vector<unsigned>& index_sets(int n, int k) {
  static const auto table = [] {
    std::vector<std::vector<std::vector<unsigned>>> t(kMaxDim + 1);
    for (int dim = 0; dim <= kMaxDim; ++dim) {
      t[dim].resize(dim + 1);
      for (unsigned m = 0; m < (1u << dim); ++m) t[dim][std::popcount(m)].push_back(m);
    }
    return t;
  }();
  return table[n][k];
}

int index_position(int n, unsigned mask) {
  const auto& sets = index_sets(n, std::popcount(mask));
  auto it = std::lower_bound(sets.begin(), sets.end(), mask);
  return static_cast<int>(it - sets.begin());
}

int insertion_sign(unsigned mask, int k) {
  return (std::popcount(mask & ((1u << k) - 1u)) % 2 == 0) ? 1 : -1;
}

int merge_sign(unsigned a, unsigned b) {
  if (a & b) return 0;
  int inversions = 0;
  for (unsigned rest = b; rest; rest &= rest - 1) {
    const int j = std::countr_zero(rest);
    inversions += std::popcount(a >> (j + 1));
  }
  return inversions % 2 == 0 ? 1 : -1;
}

Form::Form(int dim, std::size_t points, int p, int q) : dim_(dim), points_(points), p_(p), q_(q) {
  if (p < 0 || q < 0 || p > dim || q > dim) throw Error(ErrorCode::DegreeOverflow, "form degree outside [0, n]");
  comp_.assign(static_cast<std::size_t>(binomial(dim, p) * binomial(dim, q)), ScalarField(points, 0.0));
}

Form& Form::operator+=(const Form& other) {
  if (other.p_ != p_ || other.q_ != q_) throw Error(ErrorCode::DegreeMismatch, "adding forms of different degree");
  for (std::size_t c = 0; c < comp_.size(); ++c)
    for (std::size_t i = 0; i < points_; ++i) comp_[c][i] += other.comp_[c][i];
  return *this;
}

Form& Form::operator-=(const Form& other) {
  if (other.p_ != p_ || other.q_ != q_) throw Error(ErrorCode::DegreeMismatch, "subtracting forms of different degree");
  for (std::size_t c = 0; c < comp_.size(); ++c)
    for (std::size_t i = 0; i < points_; ++i) comp_[c][i] -= other.comp_[c][i];
  return *this;
}

Form& Form::operator*=(cd s) {
  for (auto& c : comp_)
    for (auto& v : c) v *= s;
  return *this;
}

Form scalar_form(const AffineTorus& torus, const ScalarField& f) {
  Form w(torus, 0, 0);
  w.coeff(0, 0) = f;
  return w;
}

double sup_norm(const Form& w) {
  double m = 0.0;
  for (int a = 0; a < w.rows(); ++a)
    for (int b = 0; b < w.cols(); ++b) m = std::max(m, sup_norm(w.coeff(a, b)));
  return m;
}

namespace {

void check_axis(const AffineTorus& torus, int axis) {
  if (axis < 0 || axis >= torus.dim()) throw Error(ErrorCode::AxisOutOfRange, "axis " + std::to_string(axis));
}

ScalarField apply_along_axis(const AffineTorus& torus, const Eigen::MatrixXd& d, const ScalarField& f, int axis) {
  const int n = torus.resolution();
  const std::size_t s = torus.stride(axis);
  ScalarField out(f.size(), 0.0);
  Eigen::VectorXcd line(n);
  for (std::size_t base = 0; base < f.size(); ++base) {
    if (torus.coordinate(base, axis) != 0) continue;
    for (int j = 0; j < n; ++j) line[j] = f[base + j * s];
    Eigen::VectorXcd res = d * line;
    for (int j = 0; j < n; ++j) out[base + j * s] = res[j];
  }
  return out;
}

}  // namespace

ScalarField partial_derivative(const AffineTorus& torus, const ScalarField& f, int axis) {
  check_axis(torus, axis);
  if (torus.backend() == DerivativeBackend::Spectral) return apply_along_axis(torus, torus.spectral_first(), f, axis);
  const double inv = 0.5 * torus.resolution();
  ScalarField out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i)
    out[i] = (f[torus.step(i, axis, 1).index] - f[torus.step(i, axis, -1).index]) * inv;
  return out;
}

ScalarField second_derivative(const AffineTorus& torus, const ScalarField& f, int a, int b) {
  check_axis(torus, a);
  check_axis(torus, b);
  if (torus.backend() == DerivativeBackend::Spectral) {
    if (a == b) return apply_along_axis(torus, torus.spectral_second(), f, a);
    return partial_derivative(torus, partial_derivative(torus, f, b), a);
  }
  const double n2 = static_cast<double>(torus.resolution()) * torus.resolution();
  ScalarField out(f.size());
  if (a == b) {
    for (std::size_t i = 0; i < f.size(); ++i)
      out[i] = (f[torus.step(i, a, 1).index] - 2.0 * f[i] + f[torus.step(i, a, -1).index]) * n2;
    return out;
  }
  for (std::size_t i = 0; i < f.size(); ++i) {
    const std::size_t ip = torus.step(i, a, 1).index, im = torus.step(i, a, -1).index;
    const cd pp = f[torus.step(ip, b, 1).index], pm = f[torus.step(ip, b, -1).index];
    const cd mp = f[torus.step(im, b, 1).index], mm = f[torus.step(im, b, -1).index];
    out[i] = (pp - pm - mp + mm) * (0.25 * n2);
  }
  return out;
}

Form dolbeault_del(const AffineTorus& torus, const Form& w) {
  const int n = w.dim();
  if (w.p() >= n) throw Error(ErrorCode::DegreeOverflow, "del of a form with p = n");
  Form out(torus, w.p() + 1, w.q());
  for (unsigned I : index_sets(n, w.p())) {
    for (unsigned J : index_sets(n, w.q())) {
      const ScalarField& c = w.at(I, J);
      for (int k = 0; k < n; ++k) {
        if (I & (1u << k)) continue;
        const ScalarField d = partial_derivative(torus, c, k);
        const double s = 0.5 * insertion_sign(I, k);
        ScalarField& target = out.at(I | (1u << k), J);
        for (std::size_t x = 0; x < d.size(); ++x) target[x] += s * d[x];
      }
    }
  }
  return out;
}

Form dolbeault_delbar(const AffineTorus& torus, const Form& w) {
  const int n = w.dim();
  if (w.q() >= n) throw Error(ErrorCode::DegreeOverflow, "delbar of a form with q = n");
  Form out(torus, w.p(), w.q() + 1);
  const double parity = (w.p() % 2 == 0) ? 1.0 : -1.0;
  for (unsigned I : index_sets(n, w.p())) {
    for (unsigned J : index_sets(n, w.q())) {
      const ScalarField& c = w.at(I, J);
      for (int k = 0; k < n; ++k) {
        if (J & (1u << k)) continue;
        const ScalarField d = partial_derivative(torus, c, k);
        const double s = 0.5 * parity * insertion_sign(J, k);
        ScalarField& target = out.at(I, J | (1u << k));
        for (std::size_t x = 0; x < d.size(); ++x) target[x] += s * d[x];
      }
    }
  }
  return out;
}

Form del_delbar(const AffineTorus& torus, const Form& w) {
  const int n = w.dim();
  if (w.p() >= n || w.q() >= n) throw Error(ErrorCode::DegreeOverflow, "del delbar needs p < n and q < n");
  Form out(torus, w.p() + 1, w.q() + 1);
  const double parity = (w.p() % 2 == 0) ? 1.0 : -1.0;
  for (unsigned I : index_sets(n, w.p())) {
    for (unsigned J : index_sets(n, w.q())) {
      const ScalarField& c = w.at(I, J);
      for (int k = 0; k < n; ++k) {
        if (I & (1u << k)) continue;
        for (int l = 0; l < n; ++l) {
          if (J & (1u << l)) continue;
          const ScalarField d = second_derivative(torus, c, k, l);
          const double s = 0.25 * parity * insertion_sign(I, k) * insertion_sign(J, l);
          ScalarField& target = out.at(I | (1u << k), J | (1u << l));
          for (std::size_t x = 0; x < d.size(); ++x) target[x] += s * d[x];
        }
      }
    }
  }
  return out;
}

Form wedge(const Form& a, const Form& b) {
  const int n = a.dim();
  if (b.dim() != n || a.points() != b.points()) throw Error(ErrorCode::InvalidArgument, "wedge of forms on different tori");
  if (a.p() + b.p() > n || a.q() + b.q() > n) throw Error(ErrorCode::DegreeOverflow, "wedge degree exceeds n");
  Form out(n, a.points(), a.p() + b.p(), a.q() + b.q());
  const int koszul = (a.q() * b.p()) % 2 == 0 ? 1 : -1;
  for (unsigned I1 : index_sets(n, a.p()))
    for (unsigned J1 : index_sets(n, a.q()))
      for (unsigned I2 : index_sets(n, b.p()))
        for (unsigned J2 : index_sets(n, b.q())) {
          const int s = koszul * merge_sign(I1, I2) * merge_sign(J1, J2);
          if (s == 0) continue;
          const ScalarField& x = a.at(I1, J1);
          const ScalarField& y = b.at(I2, J2);
          ScalarField& t = out.at(I1 | I2, J1 | J2);
          for (std::size_t i = 0; i < t.size(); ++i) t[i] += static_cast<double>(s) * x[i] * y[i];
        }
  return out;
}

Form conjugate_form(const Form& w) {
  const int n = w.dim();
  Form out(n, w.points(), w.q(), w.p());
  const double s = (w.p() * w.q()) % 2 == 0 ? 1.0 : -1.0;
  for (unsigned I : index_sets(n, w.p()))
    for (unsigned J : index_sets(n, w.q())) {
      const ScalarField& c = w.at(I, J);
      ScalarField& t = out.at(J, I);
      for (std::size_t i = 0; i < c.size(); ++i) t[i] = s * std::conj(c[i]);
    }
  return out;
}

MetricField inverse_metric(const MetricField& g) {
  MetricField out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i].inverse();
  return out;
}

ScalarField trace_g(const MetricField& g, const Form& t) {
  if (t.p() != 1 || t.q() != 1) throw Error(ErrorCode::DegreeMismatch, "trace_g needs a (1,1)-form");
  const int n = t.dim();
  ScalarField out(t.points(), 0.0);
  for (std::size_t x = 0; x < t.points(); ++x) {
    const RealMat gi = g[x].inverse();
    cd acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) acc += gi(i, j) * t.coeff(i, j)[x];
    out[x] = acc;
  }
  return out;
}

ScalarField div_by_nu(const Form& chi) {
  const int n = chi.dim();
  if (chi.p() != n || chi.q() != n) throw Error(ErrorCode::DegreeMismatch, "div_by_nu needs an (n,n)-form");
  const double s = ((n * (n - 1) / 2) % 2 == 0) ? 1.0 : -1.0;
  ScalarField out = chi.coeff(0, 0);
  for (auto& v : out) v *= s;
  return out;
}

cd integrate(const AffineTorus& torus, const ScalarField& f) {
  cd acc = 0.0;
  for (const auto& v : f) acc += v;
  return acc / static_cast<double>(torus.size());
}

Form kahler_form(const AffineTorus& torus, const MetricField& g) {
  Form w(torus, 1, 1);
  for (int i = 0; i < torus.dim(); ++i)
    for (int j = 0; j < torus.dim(); ++j)
      for (std::size_t x = 0; x < torus.size(); ++x) w.coeff(i, j)[x] = g[x](i, j);
  return w;
}

Form form_power(const Form& w, int k) {
  Form out(w.dim(), w.points(), 0, 0);
  for (auto& v : out.coeff(0, 0)) v = 1.0;
  for (int i = 0; i < k; ++i) out = wedge(out, w);
  return out;
}

ScalarField volume_density(const AffineTorus& torus, const MetricField& g) {
  return div_by_nu(form_power(kahler_form(torus, g), torus.dim()));
}

MetricField constant_metric(const AffineTorus& torus, const RealMat& g0) {
  if (g0.rows() != torus.dim() || g0.cols() != torus.dim())
    throw Error(ErrorCode::InvalidArgument, "metric matrix has the wrong size");
  Eigen::SelfAdjointEigenSolver<RealMat> es(g0);
  if ((g0 - g0.transpose()).norm() > 1e-14 * g0.norm() || es.eigenvalues().minCoeff() <= 0.0)
    throw Error(ErrorCode::InvalidArgument, "metric matrix is not symmetric positive definite");
  return MetricField(torus.size(), g0);
}

MetricField sine_conformal_metric(const AffineTorus& torus, double amplitude, int axis) {
  if (std::abs(amplitude) >= 1.0) throw Error(ErrorCode::InvalidArgument, "conformal amplitude must be below 1");
  MetricField g(torus.size());
  for (std::size_t x = 0; x < torus.size(); ++x) {
    const double c = 1.0 + amplitude * std::sin(2.0 * std::numbers::pi * torus.position(x, axis));
    g[x] = c * RealMat::Identity(torus.dim(), torus.dim());
  }
  return g;
}

MetricField conformal_rescale(const MetricField& g, const ScalarField& factor, double power) {
  MetricField out(g.size());
  for (std::size_t x = 0; x < g.size(); ++x) out[x] = std::pow(factor[x].real(), power) * g[x];
  return out;
}

}  // namespace ahe
