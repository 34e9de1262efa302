#include "ahe/continuation.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseLU>

#include "ahe/error.hpp"
#include "ahe/linalg.hpp"
#include "ahe/sparse_assembly.hpp"

namespace ahe {

namespace {

AffineTorus fd_view(const AffineTorus& t) { return t.with_backend(DerivativeBackend::FiniteDifference); }

// Frobenius-orthonormal basis of traceless Hermitian r x r matrices.
std::vector<Mat> traceless_basis(int r) {
  std::vector<Mat> out;
  for (int k = 1; k < r; ++k) {
    Mat e = Mat::Zero(r, r);
    for (int i = 0; i < k; ++i) e(i, i) = 1.0;
    e(k, k) = -static_cast<double>(k);
    out.push_back(e / std::sqrt(static_cast<double>(k * (k + 1))));
  }
  const double s = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j) {
      Mat a = Mat::Zero(r, r), c = Mat::Zero(r, r);
      a(i, j) = a(j, i) = s;
      c(i, j) = cd(0.0, s);
      c(j, i) = cd(0.0, -s);
      out.push_back(a);
      out.push_back(c);
    }
  return out;
}

// Per-point data of the current state used by residual and Jacobian evaluation.
struct StateData {
  HermitianField H;
  std::vector<Mat> C, Cinv, G, Ginv, H0inv;
  std::vector<OrthonormalFrame> hframe;              // of H = h0 f
  std::vector<std::vector<CurvatureLink>> links;
  std::vector<std::vector<HermitianSpectrum>> zspec;  // of C_H^{-*} Y_l C_H^{-1}
  std::vector<std::vector<Mat>> X;                   // H^{-1} Y_l
  std::vector<HermitianSpectrum> spec;               // of C f C^{-1}
  std::vector<Mat> half;                             // (C f C^{-1})^{1/2}
};

StateData state_data(const HEProblem& p, const EndField& f) {
  const AffineTorus& t = p.torus;
  const FlatBundle& b = *p.bundle;
  StateData d;
  d.H = apply_endomorphism(p.h0, f);
  const std::size_t M = t.size();
  d.C.resize(M);
  d.Cinv.resize(M);
  d.G.resize(M);
  d.Ginv.resize(M);
  d.H0inv.resize(M);
  d.hframe.resize(M);
  d.links.resize(M);
  d.zspec.resize(M);
  d.X.resize(M);
  d.spec.resize(M);
  d.half.resize(M);
  for (std::size_t x = 0; x < M; ++x) {
    d.hframe[x] = orthonormal_frame(d.H[x]);
    d.links[x] = curvature_links(p.g[x].inverse(), t.resolution());
    for (const CurvatureLink& l : d.links[x]) {
      const Mat Y = link_value(b, t, d.H, x, l);
      d.zspec[x].push_back(hermitian_spectrum(hermitian_part(d.hframe[x].Cinv.adjoint() * Y * d.hframe[x].Cinv)));
      d.X[x].push_back(d.hframe[x].Cinv * d.hframe[x].Cinv.adjoint() * Y);
    }
    const OrthonormalFrame fr = orthonormal_frame(p.h0[x]);
    d.C[x] = fr.C;
    d.Cinv[x] = fr.Cinv;
    d.H0inv[x] = p.h0[x].inverse();
    d.spec[x] = hermitian_spectrum(hermitian_part(fr.C * f[x] * fr.Cinv));
    const HermitianSpectrum& s = d.spec[x];
    if (s.values[0] <= 0.0) throw Error(ErrorCode::NonHPD, "f is not positive definite");
    d.half[x] = s.vectors * s.values.cwiseSqrt().asDiagonal() * s.vectors.adjoint();
    d.G[x] = d.half[x] * fr.C;
    d.Ginv[x] = fr.Cinv * d.half[x].inverse();
  }
  return d;
}

// Derivative of K plus eps log f in directions dH = h0 df.
EndField raw_derivative(const HEProblem& p, const StateData& d, const HermitianField& dH, const EndField& df,
                        double eps) {
  const AffineTorus& t = p.torus;
  const FlatBundle& b = *p.bundle;
  EndField out(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) {
    const OrthonormalFrame& fr = d.hframe[x];
    Mat v = Mat::Zero(b.rank(), b.rank());
    for (std::size_t i = 0; i < d.links[x].size(); ++i) {
      const CurvatureLink& l = d.links[x][i];
      // X = H^{-1} Y, dX = H^{-1}(dY - dH X); log X = C^{-1} log(Z) C.
      const Mat dY = link_value(b, t, dH, x, l);
      const Mat E = fr.Cinv.adjoint() * (dY - dH[x] * d.X[x][i]) * fr.Cinv;
      v += l.weight * (fr.Cinv * log_derivative(d.zspec[x][i], E) * fr.C);
    }
    if (eps != 0.0) {
      const Mat phi = hermitian_part(d.C[x] * df[x] * d.Cinv[x]);
      v += eps * (d.Cinv[x] * log_derivative(d.spec[x], phi) * d.C[x]);
    }
    out[x] = v;
  }
  return out;
}

// Frechet derivative of the square root at Hermitian positive y in direction E.
Mat sqrt_derivative(const HermitianSpectrum& y, const Mat& E) {
  Mat e = y.vectors.adjoint() * E * y.vectors;
  for (Eigen::Index a = 0; a < e.rows(); ++a)
    for (Eigen::Index b = 0; b < e.cols(); ++b) e(a, b) /= std::sqrt(y.values[a]) + std::sqrt(y.values[b]);
  return y.vectors * e * y.vectors.adjoint();
}

EndField log_field(const HEProblem& p, const EndField& f) {
  EndField out(f.size());
  for (std::size_t x = 0; x < f.size(); ++x)
    out[x] = selfadjoint_function(p.h0[x], f[x], [](double v) { return std::log(std::max(v, 1e-30)); });
  return out;
}

Eigen::VectorXd project(const std::vector<Mat>& basis, const StateData& d, const EndField& L) {
  const int nb = static_cast<int>(basis.size());
  Eigen::VectorXd v(static_cast<Eigen::Index>(L.size() * nb));
  for (std::size_t x = 0; x < L.size(); ++x) {
    const Mat X = d.G[x] * L[x] * d.Ginv[x];
    for (int c = 0; c < nb; ++c) v[static_cast<Eigen::Index>(x * nb + c)] = (basis[c] * X).trace().real();
  }
  return v;
}

EndField update(const HEProblem& p, const StateData& d, const std::vector<Mat>& basis, const Eigen::VectorXd& s,
                double alpha) {
  const int nb = static_cast<int>(basis.size());
  const int r = p.bundle->rank();
  EndField out(p.torus.size());
  for (std::size_t x = 0; x < out.size(); ++x) {
    Mat S = Mat::Zero(r, r);
    for (int c = 0; c < nb; ++c) S += (alpha * s[static_cast<Eigen::Index>(x * nb + c)]) * basis[c];
    const Mat E = hermitian_function(hermitian_part(S), [](double v) { return std::exp(v); });
    Mat ft = hermitian_part(d.half[x] * E * d.half[x]);
    ft /= std::pow(ft.determinant().real(), 1.0 / r);
    out[x] = d.Cinv[x] * ft * d.C[x];
  }
  return out;
}

struct Evaluation {
  EndField L;
  double sup = 0.0;
};

Evaluation evaluate(const HEProblem& p, const EndField& f, double eps) {
  Evaluation e;
  e.L = residual_L_eps(p, f, eps);
  e.sup = residual_norm(p, f, e.L);
  return e;
}

}  // namespace

std::string to_string(HEStatus s) {
  switch (s) {
    case HEStatus::Converged: return "converged";
    case HEStatus::Blowup: return "blowup";
    case HEStatus::MaxIters: return "max-iters";
  }
  return "unknown";
}

double einstein_constant(const FlatBundle& b, const AffineTorus& t, const HermitianField& h0, const MetricField& gG,
                         bool snap) {
  const int n = t.dim();
  const double mu = slope(b, t, h0, gG);
  const double vol = integrate(t, div_by_nu(form_power(kahler_form(t, gG), n))).real();
  const double gamma = n * mu / vol;
  const double N = t.resolution();
  if (snap && std::abs(gamma) < 10.0 / (N * N)) return 0.0;
  return gamma;
}

NormalizedBackground normalize_background(const FlatBundle& b, const AffineTorus& torus,
                                          const HermitianField& h0_prime, const MetricField& gG, double gamma) {
  const AffineTorus t = fd_view(torus);
  const int r = b.rank();
  const std::size_t M = t.size();
  // tr K(e^rho h) = tr K(h) + r T(rho), T(rho) = -tr_g del delbar rho.
  auto T = [&](const ScalarField& rho) {
    ScalarField out = trace_g(gG, del_delbar(t, scalar_form(t, rho)));
    for (auto& v : out) v = -v;
    return out;
  };
  const Eigen::SparseMatrix<double> A = assemble_local(t, 1, 1, [&](const Eigen::VectorXd& v) {
    ScalarField rho(M);
    for (std::size_t x = 0; x < M; ++x) rho[x] = v[static_cast<Eigen::Index>(x)];
    const ScalarField o = T(rho);
    Eigen::VectorXd out(static_cast<Eigen::Index>(M));
    for (std::size_t x = 0; x < M; ++x) out[static_cast<Eigen::Index>(x)] = o[x].real();
    return out;
  });
  // Bordered system [T 1; 1^T 0][rho; lambda] = [rhs; 0].
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  const int m = static_cast<int>(M);
  for (int i = 0; i < m; ++i) {
    trip.emplace_back(i, m, 1.0);
    trip.emplace_back(m, i, 1.0);
  }
  Eigen::SparseMatrix<double> B(m + 1, m + 1);
  B.setFromTriplets(trip.begin(), trip.end());
  const EndField K0 = mean_curvature(b, t, gG, h0_prime);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
  for (std::size_t x = 0; x < M; ++x) rhs[static_cast<Eigen::Index>(x)] = gamma - K0[x].trace().real() / r;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(B);
  if (lu.info() != Eigen::Success) throw Error(ErrorCode::PoissonSolveFailed, "bordered Poisson factorization failed");
  const Eigen::VectorXd sol = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !sol.allFinite())
    throw Error(ErrorCode::PoissonSolveFailed, "bordered Poisson solve failed");
  if ((B * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-8 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>()))
    throw Error(ErrorCode::PoissonSolveFailed, "Poisson residual above 1e-8");

  NormalizedBackground nb;
  nb.rho = ScalarField(M);
  nb.poisson_multiplier = sol[m];
  HermitianField h1(M);
  for (std::size_t x = 0; x < M; ++x) {
    nb.rho[x] = sol[static_cast<Eigen::Index>(x)];
    h1[x] = std::exp(sol[static_cast<Eigen::Index>(x)]) * h0_prime[x];
  }
  const EndField K1 = mean_curvature(b, t, gG, h1);
  nb.f1 = EndField(M);
  nb.h0 = HermitianField(M);
  const Mat I = identity(r);
  for (std::size_t x = 0; x < M; ++x) {
    nb.f1[x] = selfadjoint_function(h1[x], -K1[x] + gamma * I, [](double v) { return std::exp(v); });
    // tr K1 = r gamma holds to solver accuracy; remove the remaining determinant drift.
    nb.f1[x] /= std::pow(std::abs(nb.f1[x].determinant()), 1.0 / r);
    nb.h0[x] = hermitian_part(h1[x] * nb.f1[x].inverse());
  }
  // det f1 = 1, so log det h0 = log det h1; the product above only loses accuracy.
  nb.log_det_h0 = log_metric_decomposition(b, t, h1).periodic_part;
  const EndField K = mean_curvature(b, t, gG, nb.h0);
  ScalarField tau = trace_g(gG, del_delbar(t, scalar_form(t, nb.log_det_h0)));
  for (std::size_t x = 0; x < M; ++x) {
    const double tr = std::max(std::abs(K[x].trace() - static_cast<double>(r) * gamma),
                               std::abs(-tau[x].real() - static_cast<double>(r) * gamma));
    nb.trace_defect = std::max(nb.trace_defect, tr);
  }
  return nb;
}

HEProblem make_problem(const FlatBundle& b, const AffineTorus& t, const MetricField& g, const HermitianField& h0,
                       double gamma) {
  HEProblem p;
  p.bundle = &b;
  p.torus = fd_view(t);
  p.g = g;
  p.h0 = h0;
  p.log_det_h0 = log_metric_decomposition(b, p.torus, h0).periodic_part;
  p.gamma = gamma;
  return p;
}

namespace {

ScalarField chern_trace(const HEProblem& p, const ScalarField& log_det) {
  ScalarField tau = trace_g(p.g, del_delbar(p.torus, scalar_form(p.torus, log_det)));
  for (auto& v : tau) v = -v;
  return tau;
}

}  // namespace

EndField residual_L_eps(const HEProblem& p, const EndField& f, double eps) {
  const int r = p.bundle->rank();
  for (std::size_t x = 0; x < f.size(); ++x) require_hpd(hermitian_part(p.h0[x] * f[x]));
  const EndField K = mean_curvature(*p.bundle, p.torus, p.g, apply_endomorphism(p.h0, f));
  ScalarField ld(f.size());
  for (std::size_t x = 0; x < f.size(); ++x)
    ld[x] = p.log_det_h0[x] + selfadjoint_eigenvalues(p.h0[x], f[x]).array().log().sum();
  const ScalarField tau = chern_trace(p, ld);
  EndField L(f.size());
  const Mat I = identity(r);
  const EndField lg = eps != 0.0 ? log_field(p, f) : EndField();
  for (std::size_t x = 0; x < f.size(); ++x) {
    L[x] = K[x] + ((tau[x].real() - K[x].trace()) / static_cast<double>(r) - p.gamma) * I;
    if (eps != 0.0) L[x] += eps * lg[x];
  }
  return L;
}

double residual_norm(const HEProblem& p, const EndField& f, const EndField& L) {
  double s = 0.0;
  for (std::size_t x = 0; x < f.size(); ++x) {
    const Mat H = hermitian_part(p.h0[x] * f[x]);
    const OrthonormalFrame fr = orthonormal_frame(H);
    s = std::max(s, (fr.C * L[x] * fr.Cinv).norm());
  }
  return s;
}

double selfadjointness_defect(const HEProblem& p, const EndField& f, const EndField& L) {
  double s = 0.0;
  for (std::size_t x = 0; x < f.size(); ++x) {
    const Mat hl = p.h0[x] * f[x] * L[x];
    s = std::max(s, (hl - hl.adjoint()).norm() / std::max(1e-300, hl.norm()));
  }
  return s;
}

EndField linearize_apply(const HEProblem& p, const EndField& f, const EndField& phi, double eps) {
  const AffineTorus& t = p.torus;
  const int r = p.bundle->rank();
  const StateData d = state_data(p, f);
  HermitianField dH(t.size());
  ScalarField dld(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) {
    dH[x] = hermitian_part(p.h0[x] * phi[x]);
    dld[x] = (f[x].inverse() * phi[x]).trace().real();
  }
  const EndField dK = raw_derivative(p, d, dH, phi, 0.0);
  const ScalarField dtau = chern_trace(p, dld);
  const EndField L = residual_L_eps(p, f, eps);
  const Mat I = identity(r);
  EndField out(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) {
    Mat dL = dK[x] + ((dtau[x].real() - dK[x].trace()) / static_cast<double>(r)) * I;
    if (eps != 0.0) {
      const Mat ph = hermitian_part(d.C[x] * phi[x] * d.Cinv[x]);
      dL += eps * (d.Cinv[x] * log_derivative(d.spec[x], ph) * d.C[x]);
    }
    out[x] = phi[x] * L[x] + f[x] * dL;
  }
  return out;
}

EndField linearize_fd(const HEProblem& p, const EndField& f, const EndField& phi, double eps, double t) {
  if (t <= 0.0) {
    const double np = sup_norm(phi);
    if (np == 0.0) return EndField(f.size(), Mat::Zero(p.bundle->rank(), p.bundle->rank()));
    t = 1e-6 * sup_norm(f) / np;
  }
  EndField fp(f.size()), fm(f.size());
  for (std::size_t x = 0; x < f.size(); ++x) {
    fp[x] = f[x] + t * phi[x];
    fm[x] = f[x] - t * phi[x];
  }
  const EndField Lp = residual_L_eps(p, fp, eps), Lm = residual_L_eps(p, fm, eps);
  EndField out(f.size());
  for (std::size_t x = 0; x < f.size(); ++x) out[x] = (fp[x] * Lp[x] - fm[x] * Lm[x]) / (2.0 * t);
  return out;
}

EndField principal_term(const HEProblem& p, const EndField& phi) {
  const AffineTorus& t = p.torus;
  const int n = t.dim();
  EndField out(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) {
    const Jet j = field_jet(*p.bundle, t, phi, x);
    const RealMat gi = p.g[x].inverse();
    Mat acc = Mat::Zero(phi[x].rows(), phi[x].cols());
    for (int a = 0; a < n; ++a)
      for (int c = 0; c < n; ++c) acc += gi(a, c) * j.dd[a][c];
    out[x] = -0.25 * acc;
  }
  return out;
}

double log_monitor(const HEProblem& p, const EndField& f) {
  double m = 0.0;
  for (std::size_t x = 0; x < f.size(); ++x) m = std::max(m, selfadjoint_eigenvalues(p.h0[x], f[x]).array().log().matrix().norm());
  return m;
}

double det_defect(const EndField& f) {
  double d = 0.0;
  for (const auto& v : f) d = std::max(d, std::abs(v.determinant() - 1.0));
  return d;
}

ContinuationState newton_solve(const HEProblem& p, double eps, const EndField& f_init, const SolverOptions& opt,
                               double jacobian_eps) {
  if (jacobian_eps < 0.0) jacobian_eps = eps;
  const int r = p.bundle->rank();
  const std::vector<Mat> basis = traceless_basis(r);
  const int nb = static_cast<int>(basis.size());
  const std::size_t M = p.torus.size();
  ContinuationState st;
  st.epsilon = eps;
  st.h0 = p.h0;
  st.f = f_init;
  Evaluation ev = evaluate(p, st.f, eps);
  int it = 0;
  while (ev.sup > opt.newton_tol) {
    if (nb == 0 || it >= opt.max_newton)
      throw Error(ErrorCode::Diverged, "Newton did not reach tolerance at eps = " + std::to_string(eps) +
                                           ", residual " + std::to_string(ev.sup));
    const StateData d = state_data(p, st.f);
    const Eigen::VectorXd R = project(basis, d, ev.L);
    // R = P_tl[h L h^{-1}] in the h0 frame, h = (C f C^{-1})^{1/2}; exact derivative under f~ -> h e^s h.
    std::vector<Mat> Lt(M), hinv(M);
    for (std::size_t x = 0; x < M; ++x) {
      Lt[x] = d.C[x] * ev.L[x] * d.Cinv[x];
      hinv[x] = d.half[x].inverse();
    }
    auto jvp = [&](const Eigen::VectorXd& v) {
      HermitianField dH(M);
      EndField df(M);
      std::vector<Mat> dft(M);
      for (std::size_t x = 0; x < M; ++x) {
        Mat S = Mat::Zero(r, r);
        for (int c = 0; c < nb; ++c) S += v[static_cast<Eigen::Index>(x * nb + c)] * basis[c];
        dft[x] = d.half[x] * S * d.half[x];
        df[x] = d.Cinv[x] * dft[x] * d.C[x];
        dH[x] = hermitian_part(d.C[x].adjoint() * dft[x] * d.C[x]);
      }
      const EndField dL = raw_derivative(p, d, dH, df, jacobian_eps);
      Eigen::VectorXd out(static_cast<Eigen::Index>(M * nb));
      for (std::size_t x = 0; x < M; ++x) {
        const Mat dh = sqrt_derivative(d.spec[x], dft[x]);
        const Mat A = d.half[x] * Lt[x] * hinv[x];
        const Mat dR = dh * Lt[x] * hinv[x] + d.half[x] * (d.C[x] * dL[x] * d.Cinv[x]) * hinv[x] - A * dh * hinv[x];
        for (int c = 0; c < nb; ++c) out[static_cast<Eigen::Index>(x * nb + c)] = (basis[c] * dR).trace().real();
      }
      return out;
    };
    Eigen::SparseMatrix<double> J = assemble_local(p.torus, nb, 1, jvp);
    J.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success)
      throw Error(ErrorCode::LinearSolveStagnation, "Newton Jacobian is singular at eps = " + std::to_string(eps));
    const Eigen::VectorXd s = lu.solve(-R);
    if (lu.info() != Eigen::Success || !s.allFinite())
      throw Error(ErrorCode::LinearSolveStagnation, "Newton linear solve failed at eps = " + std::to_string(eps));
    if ((J * s + R).norm() > 1e-6 * std::max(1e-300, R.norm()))
      throw Error(ErrorCode::LinearSolveStagnation, "Newton linear solve stagnated at eps = " + std::to_string(eps));
    // A step below roundoff with a small residual means the residual has hit its floating point floor.
    if (s.lpNorm<Eigen::Infinity>() <= opt.stagnation_step && ev.sup <= opt.stagnation_residual) break;
    // Backtracking on the Euclidean norm of the projected residual.
    const double r0 = R.norm();
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 12; ++ls, alpha *= 0.5) {
      EndField trial = update(p, d, basis, s, alpha);
      Evaluation te;
      try {
        te = evaluate(p, trial, eps);
      } catch (const Error&) {
        continue;
      }
      const double r1 = project(basis, state_data(p, trial), te.L).norm();
      if (r1 < (1.0 - 1e-4 * alpha) * r0 || te.sup <= opt.newton_tol) {
        st.f = std::move(trial);
        ev = std::move(te);
        accepted = true;
        break;
      }
    }
    if (!accepted && ev.sup <= opt.stagnation_residual) break;  // no descent left above the roundoff floor
    if (!accepted)
      throw Error(ErrorCode::Diverged, "line search failed at eps = " + std::to_string(eps) + ", residual " +
                                           std::to_string(ev.sup));
    ++it;
  }
  st.residual = ev.sup;
  st.m = log_monitor(p, st.f);
  st.det_defect = det_defect(st.f);
  st.newton_iterations = it;
  return st;
}

SpectralSplit spectral_split(const HEProblem& p, const EndField& f) { return spectral_split(p.h0, f); }

SpectralSplit spectral_split(const HermitianField& h0, const EndField& f) {
  SpectralSplit sp;
  std::vector<RealVec> lg(f.size());
  sp.max_log = -1e300;
  for (std::size_t x = 0; x < f.size(); ++x) {
    lg[x] = selfadjoint_eigenvalues(h0[x], f[x]).array().log().matrix();
    sp.max_log = std::max(sp.max_log, lg[x].maxCoeff());
  }
  // (rho f)^sigma >= 1/2  <=>  log(rho f) >= -ln 2 / sigma; take the first sigma of the schedule
  // whose pointwise count is constant and unchanged by the next halving.
  const int r = f.size() == 0 ? 0 : static_cast<int>(f[0].rows());
  auto count = [&](double sigma) {
    int c = -2;
    for (std::size_t x = 0; x < f.size(); ++x) {
      int k = 0;
      for (Eigen::Index i = 0; i < lg[x].size(); ++i) k += (lg[x][i] - sp.max_log >= -std::log(2.0) / sigma);
      if (c == -2) c = k;
      else if (c != k) return -1;
    }
    return c;
  };
  sp.kept = -1;
  for (double sigma = 1.0; sigma >= 1.0 / 64; sigma *= 0.5) {
    const int c = count(sigma);
    if (c > 0 && c < r && c == count(sigma * 0.5)) {
      sp.kept = c;
      sp.sigma = sigma;
      break;
    }
  }
  if (sp.kept < 0) {
    sp.gap = 1.0;
    return sp;
  }
  double min_kept = 1e300, max_drop = -1e300;
  for (std::size_t x = 0; x < f.size(); ++x) {
    // ascending eigenvalues: the top `kept` are kept
    for (Eigen::Index i = 0; i < lg[x].size(); ++i) {
      if (i >= r - sp.kept) min_kept = std::min(min_kept, lg[x][i]);
      else max_drop = std::max(max_drop, lg[x][i]);
    }
  }
  sp.gap = std::exp(min_kept - max_drop);
  return sp;
}

namespace {

HistoryEntry entry_of(const ContinuationState& s, int step) {
  return {step, s.epsilon, s.residual, s.m, s.det_defect, s.newton_iterations};
}

// m at the recorded epsilon closest (in log) to the target.
double m_near(const std::vector<HistoryEntry>& h, double eps) {
  double best = 1e300, m = 0.0;
  for (const auto& e : h) {
    if (e.epsilon <= 0.0) continue;
    const double d = std::abs(std::log(e.epsilon / eps));
    if (d < best) {
      best = d;
      m = e.m;
    }
  }
  return m;
}

}  // namespace

HEResult run_continuation(const FlatBundle& b, const AffineTorus& torus, const MetricField& gG,
                          const HermitianField& h0_prime, const SolverOptions& opt) {
  const AffineTorus t = fd_view(torus);
  HEResult res;
  res.gamma = einstein_constant(b, t, h0_prime, gG);
  const NormalizedBackground nb = normalize_background(b, t, h0_prime, gG, res.gamma);
  res.trace_defect = nb.trace_defect;
  HEProblem p = make_problem(b, t, gG, nb.h0, res.gamma);
  p.log_det_h0 = nb.log_det_h0;

  ContinuationState cur = newton_solve(p, 1.0, nb.f1, opt);
  std::vector<HistoryEntry> hist{entry_of(cur, 0)};
  int step = 0;
  auto finish = [&](HEStatus s, ContinuationState st) {
    res.status = s;
    st.history = hist;
    res.final_metric = apply_endomorphism(p.h0, st.f);
    res.K_defect = residual_norm(p, st.f, residual_L_eps(p, st.f, 0.0));
    for (const auto& e : hist) res.max_eps_m = std::max(res.max_eps_m, e.epsilon * e.m);
    res.state = std::move(st);
    return res;
  };

  // Walks epsilon down to `target`; false when the step factor collapses or m exceeds m_max.
  double q = opt.factor;
  auto descend = [&](double target, bool follow) {
    while (cur.epsilon > target) {
      if (++step > opt.max_steps) return false;
      const double next = std::max(cur.epsilon * q, target);
      SolverOptions o = opt;
      if (follow) {
        // eps log f is what drives the growth of f; keep it resolved.
        const double scale = opt.follow_rel_tol * next * std::max(1.0, cur.m);
        o.newton_tol = std::min(opt.newton_tol, scale);
        o.stagnation_residual = std::min(opt.stagnation_residual, 10.0 * scale);
      }
      try {
        ContinuationState s = newton_solve(p, next, cur.f, o);
        cur = std::move(s);
        hist.push_back(entry_of(cur, step));
        q = std::max(opt.factor, q * q);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Diverged && e.code() != ErrorCode::LinearSolveStagnation &&
            e.code() != ErrorCode::NonHPD)
          throw;
        q = std::sqrt(q);
        if (q > 0.999) return false;
        continue;
      }
      if (cur.m >= opt.m_max) return false;
    }
    return true;
  };

  if (!descend(opt.eps_min, false)) {
    if (cur.m >= opt.m_max) return finish(HEStatus::Blowup, cur);
    return finish(HEStatus::MaxIters, cur);
  }
  // Without a stable limit m grows like log(1/eps), and eps = 0 can still be met to tolerance at
  // finite m by a metric running off to infinity; so the growth rate decides before the polish.
  res.m_slope = (m_near(hist, opt.eps_min) - m_near(hist, 10.0 * opt.eps_min)) / std::log(10.0);
  if (res.m_slope > opt.slope_threshold) {
    descend(opt.eps_floor, true);
    return finish(HEStatus::Blowup, cur);
  }
  try {
    ContinuationState pol = newton_solve(p, 0.0, cur.f, opt, opt.polish_mu);
    pol.epsilon = 0.0;
    hist.push_back(entry_of(pol, ++step));
    return finish(HEStatus::Converged, pol);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Diverged && e.code() != ErrorCode::LinearSolveStagnation) throw;
  }
  return finish(HEStatus::MaxIters, cur);
}

RealHEResult real_he_metric(const FlatBundle& b, const AffineTorus& t, const MetricField& gG,
                            const std::optional<ConjugateSplitting>& splitting, const SolverOptions& opt) {
  RealHEResult out;
  const int r = b.rank();
  if (!splitting) {
    const HEResult he = run_continuation(b, t, gG, background_metric(b, t), opt);
    out.metric = he.final_metric;
    out.status = he.status;
  } else {
    const Mat& V = splitting->V;
    std::vector<Mat> m;
    for (int k = 0; k < b.dim(); ++k) m.push_back(V.adjoint() * b.monodromy(k) * V);
    const FlatBundle bv = FlatBundle::build(m, FieldKind::Complex);
    const HEResult he = run_continuation(bv, t, gG, background_metric(bv, t), opt);
    out.status = he.status;
    out.used_splitting = true;
    const int h = static_cast<int>(V.cols());
    Mat T(r, r);
    T << V, splitting->Vbar;
    const Mat Tinv = T.inverse();
    out.metric = HermitianField(t.size());
    for (std::size_t x = 0; x < t.size(); ++x) {
      Mat Hf = Mat::Zero(r, r);
      Hf.topLeftCorner(h, h) = he.final_metric[x];
      Hf.bottomRightCorner(h, h) = he.final_metric[x].conjugate();
      out.metric[x] = hermitian_part(Tinv.adjoint() * Hf * Tinv);
    }
  }
  double im = 0.0, mag = 0.0;
  for (const auto& H : out.metric) {
    im = std::max(im, H.imag().cwiseAbs().maxCoeff());
    mag = std::max(mag, H.cwiseAbs().maxCoeff());
  }
  out.reality_defect = im / mag;
  const HEProblem p = make_problem(b, t, gG, out.metric, einstein_constant(b, t, out.metric, gG));
  const EndField I(t.size(), identity(r));
  out.K_defect = residual_norm(p, I, residual_L_eps(p, I, 0.0));
  return out;
}

}  // namespace ahe
