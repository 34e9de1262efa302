#include "ahe/gauduchon.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "ahe/error.hpp"
#include "ahe/sparse_assembly.hpp"

namespace ahe {

ScalarField apply_Q(const AffineTorus& t, const MetricField& g, const ScalarField& phi) {
  const int n = t.dim();
  Form w = form_power(kahler_form(t, g), n - 1);
  for (int a = 0; a < w.rows(); ++a)
    for (int b = 0; b < w.cols(); ++b) {
      ScalarField& c = w.coeff(a, b);
      for (std::size_t x = 0; x < t.size(); ++x) c[x] *= phi[x];
    }
  ScalarField top = div_by_nu(del_delbar(t, w));
  const ScalarField vol = volume_density(t, g);
  for (std::size_t x = 0; x < t.size(); ++x) top[x] /= vol[x];
  return top;
}

ScalarField apply_Qstar(const AffineTorus& t, const MetricField& g, const ScalarField& psi) {
  ScalarField out = trace_g(g, del_delbar(t, scalar_form(t, psi)));
  for (auto& v : out) v /= static_cast<double>(t.dim());
  return out;
}

cd inner_product_g(const AffineTorus& t, const MetricField& g, const ScalarField& a, const ScalarField& b) {
  const ScalarField vol = volume_density(t, g);
  ScalarField p(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) p[x] = a[x] * b[x] * vol[x];
  return integrate(t, p);
}

double gauduchon_residual(const AffineTorus& t, const MetricField& g) {
  if (t.dim() == 1) return 0.0;
  return sup_norm(apply_Q(t, g, make_scalar(t, 1.0)));
}

namespace {

// Smallest singular values of Q by block inverse iteration on Q^T Q + delta I.
std::vector<double> smallest_singular_values(const Eigen::SparseMatrix<double>& Q, int k, int iterations) {
  const Eigen::Index m = Q.rows();
  k = static_cast<int>(std::min<Eigen::Index>(k, m));
  const int block = std::min<int>(static_cast<int>(m), k + 4);
  Eigen::SparseMatrix<double> B = Q.transpose() * Q;
  double scale = 0.0;
  for (int j = 0; j < B.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(B, j); it; ++it) scale = std::max(scale, std::abs(it.value()));
  const double delta = 1e-14 * scale;
  Eigen::SparseMatrix<double> Bs = B;
  for (Eigen::Index i = 0; i < m; ++i) Bs.coeffRef(i, i) += delta;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Bs);
  if (ldlt.info() != Eigen::Success) throw Error(ErrorCode::LinearSolveStagnation, "factorization of Q^T Q failed");
  std::mt19937_64 rng(1234);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd X(m, block);
  for (Eigen::Index i = 0; i < m; ++i)
    for (int j = 0; j < block; ++j) X(i, j) = nd(rng);
  Eigen::VectorXd prev = Eigen::VectorXd::Constant(block, -1.0);
  Eigen::VectorXd ritz(block);
  for (int it = 0; it < iterations; ++it) {
    Eigen::MatrixXd Y = ldlt.solve(X);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Y);
    X = qr.householderQ() * Eigen::MatrixXd::Identity(m, block);
    Eigen::MatrixXd R = X.transpose() * (B * X);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (R + R.transpose()));
    ritz = es.eigenvalues();
    X = X * es.eigenvectors();
    if ((ritz - prev).head(k).norm() <= 1e-12 * scale) break;
    prev = ritz;
  }
  std::vector<double> out;
  for (int j = 0; j < k; ++j) out.push_back(std::sqrt(std::max(0.0, ritz[j])));
  return out;
}

}  // namespace

GauduchonResult find_gauduchon_factor(const AffineTorus& t, const MetricField& g, const GauduchonOptions& opt) {
  GauduchonResult res;
  const int n = t.dim();
  const ScalarField vol = volume_density(t, g);
  if (n == 1) {
    res.factor = make_scalar(t, 1.0);
    res.metric = g;
    res.trivially_gauduchon = true;
    return res;
  }
  const std::size_t M = t.size();
  const int radius = t.backend() == DerivativeBackend::Spectral ? t.resolution() : 1;
  const Eigen::SparseMatrix<double> Q = assemble_local(t, 1, radius, [&](const Eigen::VectorXd& v) {
    ScalarField phi(M);
    for (std::size_t x = 0; x < M; ++x) phi[x] = v[static_cast<Eigen::Index>(x)];
    const ScalarField q = apply_Q(t, g, phi);
    Eigen::VectorXd out(static_cast<Eigen::Index>(M));
    for (std::size_t x = 0; x < M; ++x) out[static_cast<Eigen::Index>(x)] = q[x].real();
    return out;
  });

  // The weighted rows of Q sum to zero, so one equation is redundant: replace it by phi(0) = 1.
  Eigen::SparseMatrix<double> A = Q;
  A.prune([](Eigen::Index row, Eigen::Index, double) { return row != 0; });
  A.coeffRef(0, 0) = 1.0;
  A.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw Error(ErrorCode::NoPositiveKernel, "bordered Gauduchon system is singular");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(M));
  rhs[0] = 1.0;
  Eigen::VectorXd phi = lu.solve(rhs);

  if (phi.mean() < 0.0) phi = -phi;
  const double mx = phi.maxCoeff(), mn = phi.minCoeff();
  if (mn < -opt.sign_tolerance * mx || mn <= 0.0)
    throw Error(ErrorCode::NoPositiveKernel, "kernel vector of Q changes sign (min/max = " + std::to_string(mn / mx) + ")");

  double num = 0.0, den = 0.0;
  for (std::size_t x = 0; x < M; ++x) {
    num += phi[static_cast<Eigen::Index>(x)] * vol[x].real();
    den += vol[x].real();
  }
  phi *= den / num;

  res.factor = ScalarField(M);
  for (std::size_t x = 0; x < M; ++x) res.factor[x] = phi[static_cast<Eigen::Index>(x)];
  res.metric = conformal_rescale(g, res.factor, 1.0 / (n - 1));
  res.residual = sup_norm(apply_Q(t, g, res.factor));
  res.metric_residual = sup_norm(div_by_nu(del_delbar(t, form_power(kahler_form(t, res.metric), n - 1))));
  res.smallest_singular_values = smallest_singular_values(Q, opt.singular_values, opt.max_iterations);
  // The bordered solve gives a certified kernel vector; its residual bounds the smallest value.
  res.smallest_singular_values[0] = (Q * phi).norm() / phi.norm();
  double qscale = 0.0;
  for (int j = 0; j < Q.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(Q, j); it; ++it) qscale = std::max(qscale, std::abs(it.value()));
  res.kernel_dimension = static_cast<int>(std::count_if(res.smallest_singular_values.begin(),
                                                        res.smallest_singular_values.end(),
                                                        [&](double s) { return s <= 1e-6 * qscale; }));
  return res;
}

}  // namespace ahe
