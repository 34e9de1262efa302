#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ahe/bundle.hpp"
#include "ahe/stability.hpp"

namespace ahe {

struct SolverOptions {
  double factor = 0.5;          // geometric epsilon factor
  double eps_min = 1e-4;        // "epsilon -> 0 reached"
  double eps_floor = 1e-30;     // lowest epsilon tried while following a blow-up
  double newton_tol = 1e-7;     // sup of the h-frame residual
  double stagnation_step = 1e-9;     // Newton step treated as roundoff
  double stagnation_residual = 1e-5;  // largest residual accepted at a roundoff-sized step
  int max_newton = 30;
  int max_steps = 400;          // epsilon steps including retries
  double m_max = 25.0;
  double polish_mu = 1e-7;      // Jacobian regularization for the epsilon = 0 polish
  double follow_rel_tol = 1e-2;   // Newton tolerance relative to eps m while following a blow-up
  double slope_threshold = 0.05;  // dm / dln(1/eps) above which m is treated as unbounded
};

// Problem data shared by every continuation step: normalized background h0 and frozen gamma.
struct HEProblem {
  const FlatBundle* bundle = nullptr;
  AffineTorus torus{1, 8};
  MetricField g;
  HermitianField h0;
  ScalarField log_det_h0;  // periodic part of log det h0
  double gamma = 0.0;
};

struct HistoryEntry {
  int step = 0;
  double epsilon = 0.0;
  double residual = 0.0;
  double m = 0.0;
  double det_defect = 0.0;
  int newton_iterations = 0;
};

struct ContinuationState {
  double epsilon = 1.0;
  EndField f;
  HermitianField h0;
  double residual = 0.0;
  double m = 0.0;
  double det_defect = 0.0;
  int newton_iterations = 0;
  std::vector<HistoryEntry> history;
};

enum class HEStatus { Converged, Blowup, MaxIters };
std::string to_string(HEStatus s);

struct HEResult {
  HEStatus status = HEStatus::MaxIters;
  HermitianField final_metric;  // h0 f
  double gamma = 0.0;
  double K_defect = 0.0;        // sup |K - gamma I| in the h-orthonormal frame
  double trace_defect = 0.0;    // sup |tr K0 - r gamma| after normalization
  double max_eps_m = 0.0;       // max over the run of epsilon * m
  double m_slope = 0.0;         // dm / dln(1/eps) near eps_min
  ContinuationState state;      // final (or blown-up) state, for the destabilizer
};

struct NormalizedBackground {
  HermitianField h0;
  EndField f1;
  ScalarField rho;
  ScalarField log_det_h0;
  double trace_defect = 0.0;
  double poisson_multiplier = 0.0;  // constant absorbed by the bordered Poisson solve
};

// gamma = n mu(E) / int omega^n / nu, snapped to 0 below 10 N^-2.
double einstein_constant(const FlatBundle& b, const AffineTorus& t, const HermitianField& h0, const MetricField& gG,
                         bool snap = true);
NormalizedBackground normalize_background(const FlatBundle& b, const AffineTorus& t, const HermitianField& h0_prime,
                                          const MetricField& gG, double gamma);

// L_eps(f) = K_{h0 f} - gamma I + eps log f. The trace of K is assembled from log det h0 and
// log det f, which keeps it free of the roundoff of ill-conditioned products.
EndField residual_L_eps(const HEProblem& p, const EndField& f, double eps);
// sup over points of the Frobenius norm of L in an h-orthonormal frame, h = h0 f.
double residual_norm(const HEProblem& p, const EndField& f, const EndField& L);
// sup |h L - (h L)^*| relative to |h L|: pointwise h-self-adjointness of L.
double selfadjointness_defect(const HEProblem& p, const EndField& f, const EndField& L);

// Directional derivative of f L_eps(f) in direction phi (h0-self-adjoint), analytic.
EndField linearize_apply(const HEProblem& p, const EndField& f, const EndField& phi, double eps);
// The same derivative by central differences with step t; t <= 0 picks 1e-6 |f| / |phi|.
EndField linearize_fd(const HEProblem& p, const EndField& f, const EndField& phi, double eps, double t = 0.0);
// Second-order part -1/4 g^{ij} D_i D_j phi of tr_g delbar del_0 phi.
EndField principal_term(const HEProblem& p, const EndField& phi);

// sup |log f| (Frobenius, h0-frame) and sup |det f - 1|.
double log_monitor(const HEProblem& p, const EndField& f);
double det_defect(const EndField& f);

// Newton for L_eps = 0 with updates f <- f^{1/2} exp(s) f^{1/2}, s traceless. The Jacobian
// is taken at jacobian_eps (eps when negative). Throws Diverged or LinearSolveStagnation.
ContinuationState newton_solve(const HEProblem& p, double eps, const EndField& f_init, const SolverOptions& opt,
                               double jacobian_eps = -1.0);

// Eigenvalues of rho f, rho = exp(-max log lambda), kept where (rho f)^sigma >= 1/2 for the
// first stable sigma in 1, 1/2, ..., 1/64; gap = min kept over max dropped eigenvalue of rho f.
struct SpectralSplit {
  double gap = 1.0;
  int kept = -1;  // pointwise number of kept eigenvalues, -1 without a stable proper split
  double sigma = 0.0;
  double max_log = 0.0;
};
SpectralSplit spectral_split(const HermitianField& h0, const EndField& f);
SpectralSplit spectral_split(const HEProblem& p, const EndField& f);

HEResult run_continuation(const FlatBundle& b, const AffineTorus& t, const MetricField& gG,
                          const HermitianField& h0_prime, const SolverOptions& opt = {});
HEProblem make_problem(const FlatBundle& b, const AffineTorus& t, const MetricField& g, const HermitianField& h0,
                       double gamma = 0.0);

struct RealHEResult {
  HermitianField metric;
  double reality_defect = 0.0;  // sup |Im H| relative to sup |H|
  double K_defect = 0.0;
  bool used_splitting = false;
  HEStatus status = HEStatus::MaxIters;
};
// HE metric on V extended by h(xi, eta-bar) = 0, h(xi-bar, eta-bar) = conj h(xi, eta); without a
// splitting the bundle is solved directly.
RealHEResult real_he_metric(const FlatBundle& b, const AffineTorus& t, const MetricField& gG,
                            const std::optional<ConjugateSplitting>& splitting, const SolverOptions& opt = {});

}  // namespace ahe
