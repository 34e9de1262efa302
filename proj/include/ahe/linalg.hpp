#pragma once

#include <functional>

#include "ahe/grid.hpp"

namespace ahe {

inline Mat identity(int r) { return Mat::Identity(r, r); }
inline Mat hermitian_part(const Mat& m) { return 0.5 * (m + m.adjoint()); }
inline Mat commutator(const Mat& a, const Mat& b) { return a * b - b * a; }

// Adjoint with respect to h(u, v) = v^* H u.
inline Mat h_adjoint(const Mat& H, const Mat& F) { return H.inverse() * F.adjoint() * H; }

// H = C^* C; C maps the flat frame to an h-orthonormal frame.
struct OrthonormalFrame {
  Mat C;
  Mat Cinv;
};
OrthonormalFrame orthonormal_frame(const Mat& H);

struct HermitianSpectrum {
  RealVec values;  // ascending
  Mat vectors;
};
HermitianSpectrum hermitian_spectrum(const Mat& Y);
Mat hermitian_function(const Mat& Y, const std::function<double(double)>& fn);

// fn applied to an h-self-adjoint endomorphism F through its h-orthonormal frame.
Mat selfadjoint_function(const Mat& H, const Mat& F, const std::function<double(double)>& fn);
// Eigenvalues of an h-self-adjoint F (real, ascending).
RealVec selfadjoint_eigenvalues(const Mat& H, const Mat& F);

// Frechet derivative of log at Hermitian positive Y in direction E (both in an orthonormal frame).
Mat log_derivative(const HermitianSpectrum& y, const Mat& E);

// Throws NonHPD when H is not Hermitian positive definite to the given relative floor.
void require_hpd(const Mat& H, double floor = 1e-12);

}  // namespace ahe
