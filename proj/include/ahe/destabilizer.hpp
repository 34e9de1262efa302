#pragma once

#include "ahe/bundle.hpp"
#include "ahe/stability.hpp"

namespace ahe {

struct DestabilizerOptions {
  double keep_threshold = 0.5;  // eigenvalues of (rho f)^sigma at or above are kept
  double min_gap = 1e3;         // required ratio of smallest kept to largest dropped eigenvalue
  double defect_tol = 1e-4;
  double snap_tol = 1e-3;       // Frobenius distance of image projectors accepted when snapping
  double slope_tol = -1.0;      // negative: 10 N^-2
};

struct RescaledPower {
  double rho = 1.0;  // exp(-max log lambda)
  EndField power;    // (rho f)^sigma, eigenvalues in (0, 1]
};
RescaledPower rescaled_power(const HermitianField& h0, const EndField& f, double sigma);

struct ExtractedProjection {
  EndField pi;
  int rank = 0;
  double gap = 1.0;
  double sigma = 1.0;
};
// pi = I - threshold((rho f)^sigma); throws NoSpectralGap when the split is unstable or too narrow.
ExtractedProjection extract_projection(const HermitianField& h0, const EndField& f,
                                       const DestabilizerOptions& opt = {});

struct ProjectionDefects {
  double idempotent = 0.0;   // |pi^2 - pi|
  double adjoint = 0.0;      // |pi^* - pi|, h0-adjoint
  double holomorphic = 0.0;  // |(I - pi) delbar pi|
  double flat = 0.0;         // |D Q|, Q the Euclidean projector onto im pi in the flat frame
  double max() const;
};
// Sup norms; the first three in an h0-orthonormal frame.
ProjectionDefects validate_projection(const FlatBundle& b, const AffineTorus& t, const HermitianField& h0,
                                      const EndField& pi);

// Grid average, spectral rounding to an idempotent, then the nearest monodromy-invariant subspace.
FlatSubbundle flatten_projection(const FlatBundle& b, const EndField& pi, const DestabilizerOptions& opt = {});
// h0-orthogonal projection onto F.
EndField orthogonal_projection(const HermitianField& h0, const FlatSubbundle& F);

struct DestabilizerReport {
  EndField pi;
  FlatSubbundle subbundle;
  ProjectionDefects defects;
  double slope_F = 0.0;              // degree of F with the induced metric, over rank F
  double slope_F_chern_weil = 0.0;   // from tr(K0 pi) - |del0 pi|^2
  double slope_E = 0.0;
  double chern_weil_defect = 0.0;    // |slope_F - slope_F_chern_weil|
  double slope_tolerance = 0.0;
  double gap = 1.0;
};
// Throws SlopeInequalityViolated when slope_F < slope_E - tolerance.
DestabilizerReport destabilizing_report(const FlatBundle& b, const AffineTorus& t, const HermitianField& h0,
                                        const MetricField& gG, const FlatSubbundle& F, const EndField& pi,
                                        const DestabilizerOptions& opt = {});

// Full pipeline on a blown-up state; throws InvariantViolated when a projection defect exceeds defect_tol.
DestabilizerReport destabilize(const FlatBundle& b, const AffineTorus& t, const MetricField& gG,
                               const HermitianField& h0, const EndField& f, const DestabilizerOptions& opt = {});

}  // namespace ahe
