#pragma once

#include <vector>

#include "ahe/forms.hpp"

namespace ahe {

struct GauduchonOptions {
  double residual_tolerance = 1e-8;
  double sign_tolerance = 1e-6;
  int singular_values = 4;    // smallest singular values reported
  int max_iterations = 200;
};

struct GauduchonResult {
  ScalarField factor;        // phi > 0, int phi omega^n/nu = int omega^n/nu
  MetricField metric;        // phi^{1/(n-1)} g
  double residual = 0.0;     // sup |Q_g(phi)|
  double metric_residual = 0.0;  // sup |del delbar(omega_G^{n-1}) / nu|
  std::vector<double> smallest_singular_values;
  int kernel_dimension = 1;
  bool trivially_gauduchon = false;  // n = 1
};

// Q(phi) = del delbar(phi omega^{n-1}) / omega^n
ScalarField apply_Q(const AffineTorus& t, const MetricField& g, const ScalarField& phi);
// Q*(psi) = (1/n) tr_g del delbar psi
ScalarField apply_Qstar(const AffineTorus& t, const MetricField& g, const ScalarField& psi);
// <phi, psi>_g = int phi psi omega^n / nu
cd inner_product_g(const AffineTorus& t, const MetricField& g, const ScalarField& a, const ScalarField& b);
// sup |Q_g(1)|: zero iff g is Gauduchon.
double gauduchon_residual(const AffineTorus& t, const MetricField& g);

GauduchonResult find_gauduchon_factor(const AffineTorus& t, const MetricField& g, const GauduchonOptions& opt = {});

}  // namespace ahe
