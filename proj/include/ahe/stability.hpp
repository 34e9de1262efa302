#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ahe/bundle.hpp"

namespace ahe {

struct FlatSubbundle {
  Mat basis;  // r x s, orthonormal columns spanning a common invariant subspace
  int rank() const { return static_cast<int>(basis.cols()); }
};

struct SubbundleEnumeration {
  std::vector<FlatSubbundle> subbundles;
  // Some joint eigenvalue carries a socle layer of dimension >= 2, so invariant subspaces
  // come in continuous families; the list then holds representatives only.
  bool continuous_family = false;
};

struct JointEigenspace {
  std::vector<cd> eigenvalue;  // one entry per axis
  Mat basis;                   // r x m orthonormal
};

std::vector<JointEigenspace> joint_generalized_eigenspaces(const FlatBundle& b, double cluster_tol = 1e-6);
SubbundleEnumeration enumerate_flat_subbundles(const FlatBundle& b, int max_rank);
double invariance_residual(const FlatBundle& b, const Mat& basis);

FlatBundle induced_bundle(const FlatBundle& b, const FlatSubbundle& F);
HermitianField induced_metric(const HermitianField& H, const FlatSubbundle& F);
// Orthonormal complement C of F; E/F is represented on span(C) with monodromy C^* rho C.
Mat complement_basis(const FlatSubbundle& F);
FlatBundle quotient_bundle(const FlatBundle& b, const FlatSubbundle& F);
// Quotient metric: Schur complement of H in the frame [F, C].
HermitianField quotient_metric(const HermitianField& H, const FlatSubbundle& F);

double degree(const FlatBundle& b, const AffineTorus& t, const HermitianField& H, const MetricField& gG,
              double gauduchon_tol = 1e-8);
double slope(const FlatBundle& b, const AffineTorus& t, const HermitianField& H, const MetricField& gG,
             double gauduchon_tol = 1e-8);

struct AdditivityCheck {
  double deg_sub = 0.0;
  double deg_quotient = 0.0;
  double deg_total = 0.0;
  double defect = 0.0;
};
AdditivityCheck degree_additivity_check(const FlatBundle& b, const AffineTorus& t, const HermitianField& H,
                                        const MetricField& gG, const FlatSubbundle& F);

int commutant_dimension(const FlatBundle& b);

enum class Verdict { Stable, StrictlySemistable, Unstable, IrreducibleStable };
enum class Simplicity { CSimple, RSimpleOnly, NotSimple };
std::string to_string(Verdict v);
std::string to_string(Simplicity s);

struct Witness {
  FlatSubbundle subbundle;
  double slope = 0.0;
};

struct ConjugateSplitting {
  Mat V;     // r x r/2
  Mat Vbar;  // exact entrywise conjugate of V
};

struct StabilityReport {
  FieldKind field = FieldKind::Complex;
  double degree = 0.0;
  double slope = 0.0;
  double tolerance = 0.0;
  Verdict verdict = Verdict::IrreducibleStable;
  std::vector<Witness> witnesses;
  bool continuous_family = false;
  int commutant_dimension = 1;
  Simplicity simplicity = Simplicity::CSimple;
  std::optional<ConjugateSplitting> splitting;
};

StabilityReport stability_verdict(const FlatBundle& b, const AffineTorus& t, const MetricField& gG);

// E (x) C = V (+) Vbar for a real bundle whose joint eigenvalues are all non-real.
std::optional<ConjugateSplitting> conjugate_splitting(const FlatBundle& b);

}  // namespace ahe
