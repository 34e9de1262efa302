#include "ahe/linalg.hpp"

#include <cmath>

#include "ahe/error.hpp"

namespace ahe {

OrthonormalFrame orthonormal_frame(const Mat& H) {
  Eigen::LLT<Mat> llt(hermitian_part(H));
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonHPD, "Cholesky factorization failed");
  Mat L = llt.matrixL();
  OrthonormalFrame f;
  f.C = L.adjoint();
  f.Cinv = f.C.inverse();
  return f;
}

HermitianSpectrum hermitian_spectrum(const Mat& Y) {
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitian_part(Y));
  return {es.eigenvalues(), es.eigenvectors()};
}

Mat hermitian_function(const Mat& Y, const std::function<double(double)>& fn) {
  const HermitianSpectrum s = hermitian_spectrum(Y);
  Mat d = Mat::Zero(Y.rows(), Y.cols());
  for (int i = 0; i < Y.rows(); ++i) d(i, i) = fn(s.values[i]);
  return s.vectors * d * s.vectors.adjoint();
}

Mat selfadjoint_function(const Mat& H, const Mat& F, const std::function<double(double)>& fn) {
  const OrthonormalFrame fr = orthonormal_frame(H);
  return fr.Cinv * hermitian_function(fr.C * F * fr.Cinv, fn) * fr.C;
}

RealVec selfadjoint_eigenvalues(const Mat& H, const Mat& F) {
  const OrthonormalFrame fr = orthonormal_frame(H);
  return hermitian_spectrum(fr.C * F * fr.Cinv).values;
}

Mat log_derivative(const HermitianSpectrum& y, const Mat& E) {
  const int r = static_cast<int>(y.values.size());
  Mat e = y.vectors.adjoint() * E * y.vectors;
  for (int a = 0; a < r; ++a) {
    for (int b = 0; b < r; ++b) {
      const double la = y.values[a], lb = y.values[b];
      double w;
      if (std::abs(la - lb) <= 1e-10 * std::max(la, lb)) {
        w = 2.0 / (la + lb);
      } else {
        w = (std::log(la) - std::log(lb)) / (la - lb);
      }
      e(a, b) *= w;
    }
  }
  return y.vectors * e * y.vectors.adjoint();
}

void require_hpd(const Mat& H, double floor) {
  const double asym = (H - H.adjoint()).norm();
  if (asym > 1e-8 * std::max(1.0, H.norm())) throw Error(ErrorCode::NonHPD, "metric is not Hermitian");
  const RealVec ev = hermitian_spectrum(H).values;
  if (!(ev[0] > floor * ev[ev.size() - 1]))
    throw Error(ErrorCode::NonHPD, "metric eigenvalue below floor: " + std::to_string(ev[0]));
}

}  // namespace ahe
