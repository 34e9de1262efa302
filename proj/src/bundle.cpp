#include "ahe/bundle.hpp"

#include <cmath>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "ahe/error.hpp"
#include "ahe/linalg.hpp"

namespace ahe {

namespace {

AffineTorus fd_view(const AffineTorus& t) { return t.with_backend(DerivativeBackend::FiniteDifference); }

Mat to_mat(const Eigen::MatrixXcd& m) { return Mat(m); }

}  // namespace

FlatBundle FlatBundle::build(const std::vector<Mat>& monodromy, FieldKind field) {
  if (monodromy.empty() || static_cast<int>(monodromy.size()) > kMaxDim)
    throw Error(ErrorCode::InvalidArgument, "need one monodromy matrix per axis (1 to 3 axes)");
  const int r = static_cast<int>(monodromy[0].rows());
  if (r < 1 || r > kMaxRank) throw Error(ErrorCode::RankTooLarge, "rank must be between 1 and 6");
  FlatBundle b;
  b.rank_ = r;
  b.field_ = field;
  for (std::size_t k = 0; k < monodromy.size(); ++k) {
    const Mat& m = monodromy[k];
    if (m.rows() != r || m.cols() != r) throw Error(ErrorCode::InvalidArgument, "monodromy matrices must be square of equal size");
    if (field == FieldKind::Real && m.imag().norm() > 0.0)
      throw Error(ErrorCode::InvalidArgument, "real bundle with non-real monodromy");
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd{Eigen::MatrixXcd(m)};
    const auto& s = svd.singularValues();
    if (!(s[r - 1] > 1e-12 * s[0])) throw Error(ErrorCode::Singular, "monodromy " + std::to_string(k + 1) + " is singular");
  }
  for (std::size_t i = 0; i < monodromy.size(); ++i)
    for (std::size_t j = i + 1; j < monodromy.size(); ++j) {
      const double c = commutator(monodromy[i], monodromy[j]).norm();
      if (c > 1e-12 * monodromy[i].norm() * monodromy[j].norm())
        throw Error(ErrorCode::NonCommuting, "rho_" + std::to_string(i + 1) + " and rho_" + std::to_string(j + 1) +
                                                 " do not commute, commutator norm " + std::to_string(c));
    }
  for (const Mat& m : monodromy) {
    b.rho_.push_back(m);
    b.rho_inv_.push_back(m.inverse());
    b.rho_inv_adj_.push_back(b.rho_inv_.back().adjoint());
    Eigen::MatrixXcd lg = Eigen::MatrixXcd(m).log();
    if (field == FieldKind::Real && lg.imag().norm() <= 1e-12 * std::max(1.0, lg.norm())) lg = lg.real().cast<cd>();
    b.log_.push_back(to_mat(lg));
    b.slope_.push_back(-2.0 * std::log(std::abs(m.determinant())));
  }
  return b;
}

Mat FlatBundle::twist_metric(const Mat& H, int axis, int wrap) const {
  Mat v = H;
  for (; wrap > 0; --wrap) v = rho_inv_adj_[axis] * v * rho_inv_[axis];
  for (; wrap < 0; ++wrap) v = rho_[axis].adjoint() * v * rho_[axis];
  return v;
}

Mat FlatBundle::twist_end(const Mat& F, int axis, int wrap) const {
  Mat v = F;
  for (; wrap > 0; --wrap) v = rho_[axis] * v * rho_inv_[axis];
  for (; wrap < 0; ++wrap) v = rho_inv_[axis] * v * rho_[axis];
  return v;
}

EndForm::EndForm(int dim, std::size_t points, int rank, int p, int q)
    : dim_(dim), points_(points), rank_(rank), p_(p), q_(q) {
  if (p < 0 || q < 0 || p > dim || q > dim) throw Error(ErrorCode::DegreeOverflow, "form degree outside [0, n]");
  comp_.assign(static_cast<std::size_t>(binomial(dim, p) * binomial(dim, q)), EndField(points, Mat::Zero(rank, rank)));
}

double sup_norm(const EndForm& w) {
  double m = 0.0;
  for (int a = 0; a < w.rows(); ++a)
    for (int b = 0; b < w.cols(); ++b) m = std::max(m, sup_norm(w.coeff(a, b)));
  return m;
}

void require_hpd(const HermitianField& H) {
  for (const auto& h : H) require_hpd(h);
}

void hermitize(HermitianField& H) {
  for (auto& h : H) h = hermitian_part(h);
}

LogMetricDecomposition log_metric_decomposition(const FlatBundle& b, const AffineTorus& t, const HermitianField& H) {
  LogMetricDecomposition out;
  for (int k = 0; k < t.dim(); ++k) out.linear_part[k] = b.log_det_slope(k);
  out.periodic_part = ScalarField(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) {
    Eigen::LLT<Mat> llt(hermitian_part(H[x]));
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonHPD, "metric is not positive definite");
    double ld = 0.0;
    for (int i = 0; i < b.rank(); ++i) ld += 2.0 * std::log(std::real(llt.matrixLLT()(i, i)));
    for (int k = 0; k < t.dim(); ++k) ld -= out.linear_part[k] * t.position(x, k);
    out.periodic_part[x] = ld;
  }
  return out;
}

EndForm hermitian_connection(const FlatBundle& b, const AffineTorus& torus, const HermitianField& H) {
  const AffineTorus t = fd_view(torus);
  const int r = b.rank();
  EndForm theta(t.dim(), t.size(), r, 1, 0);
  if (r == 1) {
    const LogMetricDecomposition lm = log_metric_decomposition(b, t, H);
    for (int k = 0; k < t.dim(); ++k) {
      const ScalarField d = partial_derivative(t, lm.periodic_part, k);
      for (std::size_t x = 0; x < t.size(); ++x)
        theta.coeff(k, 0)[x] = Mat::Constant(1, 1, 0.5 * (lm.linear_part[k] + d[x]));
    }
    return theta;
  }
  for (std::size_t x = 0; x < t.size(); ++x) {
    const Mat Hinv = H[x].inverse();
    for (int k = 0; k < t.dim(); ++k) {
      const Mat dk = (neighbor_value(b, t, H, x, k, 1) - neighbor_value(b, t, H, x, k, -1)) * (0.5 * t.resolution());
      theta.coeff(k, 0)[x] = 0.5 * Hinv * dk;
    }
  }
  return theta;
}

Form first_chern_form(const FlatBundle& b, const AffineTorus& torus, const HermitianField& H) {
  const AffineTorus t = fd_view(torus);
  const LogMetricDecomposition lm = log_metric_decomposition(b, t, H);
  Form c1 = del_delbar(t, scalar_form(t, lm.periodic_part));
  c1 *= -1.0;
  return c1;
}

std::vector<CurvatureLink> curvature_links(const RealMat& gi, int resolution) {
  const double n2 = static_cast<double>(resolution) * resolution;
  std::vector<CurvatureLink> out;
  const int n = static_cast<int>(gi.rows());
  for (int a = 0; a < n; ++a) {
    out.push_back({a, 1, -1, 0, -0.25 * gi(a, a) * n2});
    out.push_back({a, -1, -1, 0, -0.25 * gi(a, a) * n2});
  }
  for (int a = 0; a < n; ++a)
    for (int c = a + 1; c < n; ++c) {
      const double w = -0.25 * 2.0 * gi(a, c) * 0.25 * n2;
      if (w == 0.0) continue;
      out.push_back({a, 1, c, 1, w});
      out.push_back({a, 1, c, -1, -w});
      out.push_back({a, -1, c, 1, -w});
      out.push_back({a, -1, c, -1, w});
    }
  return out;
}

Mat link_log(const Mat& H, const Mat& Y) {
  const OrthonormalFrame fr = orthonormal_frame(H);
  const Mat Z = hermitian_part(fr.Cinv.adjoint() * Y * fr.Cinv);
  return fr.Cinv * hermitian_function(Z, [](double v) { return std::log(v); }) * fr.C;
}

std::array<std::array<Mat, kMaxDim>, kMaxDim> log_hessian(const FlatBundle& b, const AffineTorus& t,
                                                          const HermitianField& H, std::size_t x) {
  std::array<std::array<Mat, kMaxDim>, kMaxDim> M;
  const double n2 = static_cast<double>(t.resolution()) * t.resolution();
  const Mat& h = H[x];
  auto lg = [&](int a, int oa, int c, int oc) {
    return link_log(h, link_value(b, t, H, x, CurvatureLink{a, oa, c, oc, 0.0}));
  };
  for (int a = 0; a < t.dim(); ++a) M[a][a] = n2 * (lg(a, 1, -1, 0) + lg(a, -1, -1, 0));
  for (int a = 0; a < t.dim(); ++a)
    for (int c = a + 1; c < t.dim(); ++c) {
      M[a][c] = (0.25 * n2) * (lg(a, 1, c, 1) - lg(a, 1, c, -1) - lg(a, -1, c, 1) + lg(a, -1, c, -1));
      M[c][a] = M[a][c];
    }
  return M;
}

EndForm extended_curvature(const FlatBundle& b, const AffineTorus& torus, const HermitianField& H) {
  const AffineTorus t = fd_view(torus);
  const int r = b.rank();
  const int n = t.dim();
  EndForm omega(n, t.size(), r, 1, 1);
  for (std::size_t x = 0; x < t.size(); ++x) {
    const auto M = log_hessian(b, t, H, x);
    const Jet j = field_jet(b, t, H, x);
    const Mat Hinv = j.v.inverse();
    for (int a = 0; a < n; ++a)
      for (int c = 0; c < n; ++c) {
        // Antisymmetric part -1/8 H^{-1}(D_a H H^{-1} D_c H - D_c H H^{-1} D_a H).
        const Mat anti = -0.125 * Hinv * (j.d[a] * Hinv * j.d[c] - j.d[c] * Hinv * j.d[a]);
        omega.coeff(a, c)[x] = -0.25 * M[a][c] + anti;
      }
  }
  return omega;
}

EndField mean_curvature(const FlatBundle& b, const AffineTorus& torus, const MetricField& g, const HermitianField& H) {
  const AffineTorus t = fd_view(torus);
  EndField K(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) {
    const Mat& h = H[x];
    Mat k = Mat::Zero(b.rank(), b.rank());
    for (const CurvatureLink& l : curvature_links(g[x].inverse(), t.resolution()))
      k += l.weight * link_log(h, link_value(b, t, H, x, l));
    K[x] = k;
  }
  return K;
}

EndField trace_g(const MetricField& g, const EndForm& w) {
  if (w.p() != 1 || w.q() != 1) throw Error(ErrorCode::DegreeMismatch, "trace_g needs a (1,1)-form");
  const int n = w.dim();
  EndField out(w.points(), Mat::Zero(w.rank(), w.rank()));
  for (std::size_t x = 0; x < w.points(); ++x) {
    const RealMat gi = g[x].inverse();
    for (int a = 0; a < n; ++a)
      for (int c = 0; c < n; ++c) out[x] += gi(a, c) * w.coeff(a, c)[x];
  }
  return out;
}

EndForm covariant_del0(const FlatBundle& b, const AffineTorus& torus, const HermitianField& H0, const EndForm& w) {
  const AffineTorus t = fd_view(torus);
  const int n = t.dim();
  if (w.p() >= n) throw Error(ErrorCode::DegreeOverflow, "del_0 of a form with p = n");
  const EndForm theta = hermitian_connection(b, t, H0);
  EndForm out(n, t.size(), w.rank(), w.p() + 1, w.q());
  for (unsigned I : index_sets(n, w.p()))
    for (unsigned J : index_sets(n, w.q())) {
      const EndField& c = w.at(I, J);
      for (int k = 0; k < n; ++k) {
        if (I & (1u << k)) continue;
        const double s = insertion_sign(I, k);
        EndField& target = out.at(I | (1u << k), J);
        for (std::size_t x = 0; x < t.size(); ++x) {
          const Mat d = (neighbor_value(b, t, c, x, k, 1) - neighbor_value(b, t, c, x, k, -1)) * (0.5 * t.resolution());
          target[x] += s * (0.5 * d + commutator(theta.coeff(k, 0)[x], c[x]));
        }
      }
    }
  return out;
}

EndForm covariant_del0(const FlatBundle& b, const AffineTorus& torus, const HermitianField& H0, const EndField& phi) {
  EndForm w(torus.dim(), torus.size(), b.rank(), 0, 0);
  w.coeff(0, 0) = phi;
  return covariant_del0(b, torus, H0, w);
}

EndForm end_delbar(const FlatBundle& b, const AffineTorus& torus, const EndForm& w) {
  const AffineTorus t = fd_view(torus);
  const int n = t.dim();
  if (w.q() >= n) throw Error(ErrorCode::DegreeOverflow, "delbar of a form with q = n");
  EndForm out(n, t.size(), w.rank(), w.p(), w.q() + 1);
  const double parity = (w.p() % 2 == 0) ? 1.0 : -1.0;
  for (unsigned I : index_sets(n, w.p()))
    for (unsigned J : index_sets(n, w.q())) {
      const EndField& c = w.at(I, J);
      for (int l = 0; l < n; ++l) {
        if (J & (1u << l)) continue;
        const double s = 0.25 * parity * insertion_sign(J, l) * t.resolution();
        EndField& target = out.at(I, J | (1u << l));
        for (std::size_t x = 0; x < t.size(); ++x)
          target[x] += s * (neighbor_value(b, t, c, x, l, 1) - neighbor_value(b, t, c, x, l, -1));
      }
    }
  return out;
}

EndForm second_fundamental_form(const FlatBundle& b, const AffineTorus& t, const HermitianField& H,
                                const EndField& pi) {
  const int r = b.rank();
  for (std::size_t x = 0; x < t.size(); ++x) {
    const double idem = (pi[x] * pi[x] - pi[x]).norm();
    const double adj = (ahe::h_adjoint(H[x], pi[x]) - pi[x]).norm();
    if (idem > 1e-8 || adj > 1e-8)
      throw Error(ErrorCode::NotAProjection, "pi is not an h-orthogonal projection at point " + std::to_string(x));
  }
  EndForm d = covariant_del0(b, t, H, pi);
  const Mat I = identity(r);
  for (int k = 0; k < t.dim(); ++k)
    for (std::size_t x = 0; x < t.size(); ++x) d.coeff(k, 0)[x] = (I - pi[x]) * d.coeff(k, 0)[x];
  return d;
}

EndField metric_change_term(const FlatBundle& b, const AffineTorus& t, const MetricField& g, const HermitianField& H0,
                            const EndField& f) {
  EndForm w = covariant_del0(b, t, H0, f);
  for (int k = 0; k < t.dim(); ++k)
    for (std::size_t x = 0; x < t.size(); ++x) w.coeff(k, 0)[x] = f[x].inverse() * w.coeff(k, 0)[x];
  return trace_g(g, end_delbar(b, t, w));
}

EndField h_adjoint(const HermitianField& H, const EndField& F) {
  EndField out(F.size());
  for (std::size_t x = 0; x < F.size(); ++x) out[x] = ahe::h_adjoint(H[x], F[x]);
  return out;
}

HermitianField apply_endomorphism(const HermitianField& H0, const EndField& f) {
  HermitianField out(H0.size());
  for (std::size_t x = 0; x < H0.size(); ++x) out[x] = hermitian_part(H0[x] * f[x]);
  return out;
}

std::vector<Mat> inverse_transport(const FlatBundle& b, const AffineTorus& t) {
  const int r = b.rank();
  std::vector<Mat> out(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) {
    Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(r, r);
    for (int k = 0; k < t.dim(); ++k) s += t.position(x, k) * Eigen::MatrixXcd(b.logarithm(k));
    out[x] = to_mat((-s).exp());
  }
  return out;
}

HermitianField background_metric(const FlatBundle& b, const AffineTorus& t, const HermitianField* periodic) {
  const int r = b.rank();
  const std::vector<Mat> Uinv = inverse_transport(b, t);
  HermitianField H(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) {
    const Mat P = periodic ? (*periodic)[x] : identity(r);
    H[x] = hermitian_part(Uinv[x].adjoint() * P * Uinv[x]);
  }
  return H;
}

}  // namespace ahe
