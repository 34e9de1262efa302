#include "ahe/destabilizer.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "ahe/continuation.hpp"
#include "ahe/error.hpp"
#include "ahe/linalg.hpp"

namespace ahe {

namespace {

int rounded_rank(const Mat& P) { return static_cast<int>(std::lround(P.trace().real())); }

// Euclidean orthogonal projector onto the span of the top k left singular vectors.
Mat image_projector(const Mat& P, int k) {
  Eigen::JacobiSVD<Mat> svd(P, Eigen::ComputeThinU);
  const Mat U = svd.matrixU().leftCols(k);
  return U * U.adjoint();
}

Mat orthonormal_columns(const Mat& B) {
  Eigen::JacobiSVD<Mat> svd(B, Eigen::ComputeThinU);
  return svd.matrixU().leftCols(B.cols());
}

double frame_norm(const OrthonormalFrame& fr, const Mat& X) { return (fr.C * X * fr.Cinv).norm(); }

}  // namespace

RescaledPower rescaled_power(const HermitianField& h0, const EndField& f, double sigma) {
  if (!(sigma > 0.0 && sigma <= 1.0)) throw Error(ErrorCode::InvalidArgument, "sigma must lie in (0, 1]");
  double max_log = -1e300;
  for (std::size_t x = 0; x < f.size(); ++x) {
    const RealVec ev = selfadjoint_eigenvalues(h0[x], f[x]);
    if (ev.minCoeff() <= 0.0)
      throw Error(ErrorCode::NonHPD, "endomorphism is not positive at point " + std::to_string(x));
    max_log = std::max(max_log, std::log(ev.maxCoeff()));
  }
  RescaledPower out;
  out.rho = std::exp(-max_log);
  out.power = EndField(f.size());
  for (std::size_t x = 0; x < f.size(); ++x)
    out.power[x] = selfadjoint_function(h0[x], f[x], [&](double v) {
      return std::min(1.0, std::exp(sigma * (std::log(v) - max_log)));
    });
  return out;
}

ExtractedProjection extract_projection(const HermitianField& h0, const EndField& f, const DestabilizerOptions& opt) {
  const SpectralSplit sp = spectral_split(h0, f);
  if (sp.kept < 0)
    throw Error(ErrorCode::NoSpectralGap, "eigenvalue split of rho f does not stabilize along the sigma schedule");
  if (sp.gap < opt.min_gap)
    throw Error(ErrorCode::NoSpectralGap, "spectral gap " + std::to_string(sp.gap) + " below " +
                                               std::to_string(opt.min_gap));
  const RescaledPower rp = rescaled_power(h0, f, sp.sigma);
  ExtractedProjection ex;
  ex.gap = sp.gap;
  ex.sigma = sp.sigma;
  ex.pi = EndField(f.size());
  const int r = f.size() == 0 ? 0 : static_cast<int>(f[0].rows());
  ex.rank = r - sp.kept;
  for (std::size_t x = 0; x < f.size(); ++x)
    ex.pi[x] = selfadjoint_function(h0[x], rp.power[x], [&](double v) { return v >= opt.keep_threshold ? 0.0 : 1.0; });
  return ex;
}

double ProjectionDefects::max() const { return std::max({idempotent, adjoint, holomorphic, flat}); }

ProjectionDefects validate_projection(const FlatBundle& b, const AffineTorus& t, const HermitianField& h0,
                                      const EndField& pi) {
  ProjectionDefects d;
  const int r = b.rank();
  const Mat I = identity(r);
  const double h = 0.5 * t.resolution();
  for (std::size_t x = 0; x < t.size(); ++x) {
    const OrthonormalFrame fr = orthonormal_frame(h0[x]);
    const Mat& P = pi[x];
    d.idempotent = std::max(d.idempotent, frame_norm(fr, P * P - P));
    d.adjoint = std::max(d.adjoint, frame_norm(fr, ahe::h_adjoint(h0[x], P) - P));
    const int k = std::clamp(rounded_rank(P), 0, r);
    for (int a = 0; a < t.dim(); ++a) {
      const Mat plus = neighbor_value(b, t, pi, x, a, 1), minus = neighbor_value(b, t, pi, x, a, -1);
      // delbar = D / 2 on endomorphisms of a flat bundle
      const Mat delbar = 0.5 * h * (plus - minus);
      d.holomorphic = std::max(d.holomorphic, frame_norm(fr, (I - P) * delbar));
      d.flat = std::max(d.flat, h * (image_projector(plus, k) - image_projector(minus, k)).norm());
    }
  }
  return d;
}

FlatSubbundle flatten_projection(const FlatBundle& b, const EndField& pi, const DestabilizerOptions& opt) {
  const int r = b.rank();
  Mat avg = Mat::Zero(r, r);
  for (const Mat& P : pi) avg += P;
  avg /= static_cast<double>(pi.size());
  Eigen::ComplexEigenSolver<Mat> es(avg);
  std::vector<Eigen::Index> ones;
  for (Eigen::Index i = 0; i < r; ++i)
    if (std::abs(es.eigenvalues()[i] - 1.0) < std::abs(es.eigenvalues()[i])) ones.push_back(i);
  const int k = static_cast<int>(ones.size());
  if (k == 0 || k == r)
    throw Error(ErrorCode::NoNearbyFlatSubbundle, "rounded projection has rank " + std::to_string(k));
  Mat img(r, k);
  for (int j = 0; j < k; ++j) img.col(j) = es.eigenvectors().col(ones[static_cast<std::size_t>(j)]);
  img = orthonormal_columns(img);
  const Mat Q = img * img.adjoint();

  const SubbundleEnumeration en = enumerate_flat_subbundles(b, r);
  double best = 1e300;
  const FlatSubbundle* nearest = nullptr;
  for (const auto& F : en.subbundles) {
    if (F.rank() != k) continue;
    const double dist = (F.basis * F.basis.adjoint() - Q).norm();
    if (dist < best) {
      best = dist;
      nearest = &F;
    }
  }
  if (nearest && best <= opt.snap_tol) return *nearest;
  // In a continuous family the representatives need not contain the image; accept it when it is invariant.
  if (en.continuous_family && invariance_residual(b, img) <= 1e-10) {
    FlatSubbundle F{img};
    if (b.field() == FieldKind::Real && img.imag().norm() <= 1e-12) F.basis = img.real().cast<cd>();
    return F;
  }
  throw Error(ErrorCode::NoNearbyFlatSubbundle,
              "nearest monodromy-invariant subspace is at distance " + std::to_string(best));
}

EndField orthogonal_projection(const HermitianField& h0, const FlatSubbundle& F) {
  EndField pi(h0.size());
  const Mat& B = F.basis;
  for (std::size_t x = 0; x < h0.size(); ++x)
    pi[x] = B * (B.adjoint() * h0[x] * B).inverse() * B.adjoint() * h0[x];
  return pi;
}

DestabilizerReport destabilizing_report(const FlatBundle& b, const AffineTorus& t, const HermitianField& h0,
                                        const MetricField& gG, const FlatSubbundle& F, const EndField& pi,
                                        const DestabilizerOptions& opt) {
  DestabilizerReport rep;
  rep.pi = pi;
  rep.subbundle = F;
  rep.defects = validate_projection(b, t, h0, pi);
  const int n = t.dim();
  const int s = F.rank();
  rep.slope_E = slope(b, t, h0, gG);
  rep.slope_F = slope(induced_bundle(b, F), t, induced_metric(h0, F), gG);

  const EndField piF = orthogonal_projection(h0, F);
  const EndField K0 = mean_curvature(b, t, gG, h0);
  const EndForm A = second_fundamental_form(b, t, h0, piF);
  const MetricField gi = inverse_metric(gG);
  const ScalarField vol = volume_density(t, gG);
  ScalarField density = make_scalar(t);
  for (std::size_t x = 0; x < t.size(); ++x) {
    cd a2 = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        a2 += gi[x](i, j) * (A.coeff(i, 0)[x] * ahe::h_adjoint(h0[x], A.coeff(j, 0)[x])).trace();
    density[x] = ((K0[x] * piF[x]).trace() - a2) * vol[x];
  }
  rep.slope_F_chern_weil = integrate(t, density).real() / (n * s);
  rep.chern_weil_defect = std::abs(rep.slope_F - rep.slope_F_chern_weil);

  const double N = t.resolution();
  rep.slope_tolerance = opt.slope_tol >= 0.0 ? opt.slope_tol : 10.0 / (N * N);
  if (rep.slope_F < rep.slope_E - rep.slope_tolerance)
    throw Error(ErrorCode::SlopeInequalityViolated, "slope of F " + std::to_string(rep.slope_F) +
                                                        " below slope of E " + std::to_string(rep.slope_E));
  return rep;
}

DestabilizerReport destabilize(const FlatBundle& b, const AffineTorus& t, const MetricField& gG,
                               const HermitianField& h0, const EndField& f, const DestabilizerOptions& opt) {
  const ExtractedProjection ex = extract_projection(h0, f, opt);
  const ProjectionDefects d = validate_projection(b, t, h0, ex.pi);
  if (d.max() > opt.defect_tol)
    throw Error(ErrorCode::InvariantViolated, "projection defect " + std::to_string(d.max()) + " above " +
                                                  std::to_string(opt.defect_tol));
  const FlatSubbundle F = flatten_projection(b, ex.pi, opt);
  DestabilizerReport rep = destabilizing_report(b, t, h0, gG, F, ex.pi, opt);
  rep.gap = ex.gap;
  return rep;
}

}  // namespace ahe
