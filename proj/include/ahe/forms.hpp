#pragma once

#include <vector>

#include "ahe/grid.hpp"

namespace ahe {

int binomial(int n, int k);
// Increasing multi-indices of length k in {0..n-1}, as bitmasks in lexicographic order.
const std::vector<unsigned>& index_sets(int n, int k);
int index_position(int n, unsigned mask);

// Scalar (p,q)-form: one coefficient field per pair (I, J) of increasing multi-indices,
// the coefficient of dz^I (x) dzbar^J.
class Form {
 public:
  Form(int dim, std::size_t points, int p, int q);
  Form(const AffineTorus& torus, int p, int q) : Form(torus.dim(), torus.size(), p, q) {}

  int dim() const { return dim_; }
  int p() const { return p_; }
  int q() const { return q_; }
  std::size_t points() const { return points_; }
  int rows() const { return binomial(dim_, p_); }
  int cols() const { return binomial(dim_, q_); }

  ScalarField& coeff(int a, int b) { return comp_[static_cast<std::size_t>(a * cols() + b)]; }
  const ScalarField& coeff(int a, int b) const { return comp_[static_cast<std::size_t>(a * cols() + b)]; }
  ScalarField& at(unsigned I, unsigned J) { return coeff(index_position(dim_, I), index_position(dim_, J)); }
  const ScalarField& at(unsigned I, unsigned J) const {
    return coeff(index_position(dim_, I), index_position(dim_, J));
  }

  Form& operator+=(const Form& other);
  Form& operator-=(const Form& other);
  Form& operator*=(cd s);

 private:
  int dim_;
  std::size_t points_;
  int p_;
  int q_;
  std::vector<ScalarField> comp_;
};

Form scalar_form(const AffineTorus& torus, const ScalarField& f);
double sup_norm(const Form& w);

// Sign of dz^k moved in front of the increasing product dz^I.
int insertion_sign(unsigned mask, int k);
// dz^I ^ dz^J = sign * dz^{I u J}; 0 when they overlap.
int merge_sign(unsigned a, unsigned b);

ScalarField partial_derivative(const AffineTorus& torus, const ScalarField& f, int axis);
// Fused second derivative: compact three-point stencil on the diagonal, product of
// central differences off it. Symmetric in (a, b).
ScalarField second_derivative(const AffineTorus& torus, const ScalarField& f, int a, int b);

Form dolbeault_del(const AffineTorus& torus, const Form& w);
Form dolbeault_delbar(const AffineTorus& torus, const Form& w);
// del o delbar with the fused second derivative (keeps the scalar Laplacian compact).
Form del_delbar(const AffineTorus& torus, const Form& w);

Form wedge(const Form& a, const Form& b);
Form conjugate_form(const Form& w);

ScalarField trace_g(const MetricField& g, const Form& t);
ScalarField div_by_nu(const Form& chi);
cd integrate(const AffineTorus& torus, const ScalarField& f);

Form kahler_form(const AffineTorus& torus, const MetricField& g);
Form form_power(const Form& w, int k);
// omega_g^n / nu, positive for SPD g.
ScalarField volume_density(const AffineTorus& torus, const MetricField& g);
MetricField inverse_metric(const MetricField& g);

MetricField constant_metric(const AffineTorus& torus, const RealMat& g0);
// (1 + a sin 2 pi x^axis) I
MetricField sine_conformal_metric(const AffineTorus& torus, double amplitude, int axis = 0);
MetricField conformal_rescale(const MetricField& g, const ScalarField& factor, double power);

}  // namespace ahe
