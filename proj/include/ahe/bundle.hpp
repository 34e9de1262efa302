#pragma once

#include <array>
#include <vector>

#include "ahe/forms.hpp"
#include "ahe/grid.hpp"

namespace ahe {

enum class FieldKind { Real, Complex };

class FlatBundle {
 public:
  // One monodromy matrix per torus axis; validated for commutation and invertibility.
  static FlatBundle build(const std::vector<Mat>& monodromy, FieldKind field = FieldKind::Complex);

  int rank() const { return rank_; }
  int dim() const { return static_cast<int>(rho_.size()); }
  FieldKind field() const { return field_; }
  const Mat& monodromy(int axis) const { return rho_[axis]; }
  const Mat& monodromy_inverse(int axis) const { return rho_inv_[axis]; }
  // Commuting logarithms A_k with exp(A_k) = rho_k; real for real bundles when one exists.
  const Mat& logarithm(int axis) const { return log_[axis]; }
  // Jump of log det H across one period of `axis`: -2 log |det rho_k|.
  double log_det_slope(int axis) const { return slope_[axis]; }

  Mat twist_metric(const Mat& H, int axis, int wrap) const;
  Mat twist_end(const Mat& F, int axis, int wrap) const;

 private:
  int rank_ = 0;
  FieldKind field_ = FieldKind::Complex;
  std::vector<Mat> rho_, rho_inv_, rho_inv_adj_, log_;
  std::vector<double> slope_;
};

inline Mat apply_twist(const FlatBundle& b, const Mat& v, int axis, int wrap, HermitianTag) {
  return b.twist_metric(v, axis, wrap);
}
inline Mat apply_twist(const FlatBundle& b, const Mat& v, int axis, int wrap, EndTag) {
  return b.twist_end(v, axis, wrap);
}

template <class Tag>
Mat neighbor_value(const FlatBundle& b, const AffineTorus& t, const GridField<Mat, Tag>& f, std::size_t x, int axis,
                   int offset) {
  const auto s = t.step(x, axis, offset);
  if (s.wrap == 0) return f[s.index];
  return apply_twist(b, f[s.index], axis, s.wrap, Tag{});
}

template <class Tag>
Mat diagonal_value(const FlatBundle& b, const AffineTorus& t, const GridField<Mat, Tag>& f, std::size_t x, int a,
                   int oa, int c, int oc) {
  const auto s1 = t.step(x, a, oa);
  const auto s2 = t.step(s1.index, c, oc);
  Mat v = f[s2.index];
  if (s1.wrap != 0) v = apply_twist(b, v, a, s1.wrap, Tag{});
  if (s2.wrap != 0) v = apply_twist(b, v, c, s2.wrap, Tag{});
  return v;
}

// Value, central first differences and fused second differences of a twisted field at one point.
struct Jet {
  Mat v;
  std::array<Mat, kMaxDim> d;
  std::array<std::array<Mat, kMaxDim>, kMaxDim> dd;
};

template <class Tag>
Jet field_jet(const FlatBundle& b, const AffineTorus& t, const GridField<Mat, Tag>& f, std::size_t x) {
  Jet j;
  j.v = f[x];
  const double n = t.resolution();
  std::array<Mat, kMaxDim> plus, minus;
  for (int k = 0; k < t.dim(); ++k) {
    plus[k] = neighbor_value(b, t, f, x, k, 1);
    minus[k] = neighbor_value(b, t, f, x, k, -1);
    j.d[k] = (plus[k] - minus[k]) * (0.5 * n);
    j.dd[k][k] = (plus[k] - 2.0 * j.v + minus[k]) * (n * n);
  }
  for (int k = 0; k < t.dim(); ++k)
    for (int l = k + 1; l < t.dim(); ++l) {
      j.dd[k][l] = (diagonal_value(b, t, f, x, k, 1, l, 1) - diagonal_value(b, t, f, x, k, 1, l, -1) -
                    diagonal_value(b, t, f, x, k, -1, l, 1) + diagonal_value(b, t, f, x, k, -1, l, -1)) *
                   (0.25 * n * n);
      j.dd[l][k] = j.dd[k][l];
    }
  return j;
}

template <class Tag>
GridField<Mat, Tag> shift_equivariant(const FlatBundle& b, const AffineTorus& t, const GridField<Mat, Tag>& f,
                                      int axis, int offset) {
  GridField<Mat, Tag> out(f.size());
  for (std::size_t x = 0; x < f.size(); ++x) out[x] = neighbor_value(b, t, f, x, axis, offset);
  return out;
}

// Curvature stencil: K(x) = sum_l weight_l log(H(x)^{-1} H(x + oa e_a + oc e_c)), c < 0 for
// links along one axis. Exact for flat metrics with normal monodromy logarithms.
struct CurvatureLink {
  int a = 0;
  int oa = 0;
  int c = -1;
  int oc = 0;
  double weight = 0.0;
};
std::vector<CurvatureLink> curvature_links(const RealMat& gi, int resolution);

template <class Tag>
Mat link_value(const FlatBundle& b, const AffineTorus& t, const GridField<Mat, Tag>& f, std::size_t x,
               const CurvatureLink& l) {
  if (l.c < 0) return neighbor_value(b, t, f, x, l.a, l.oa);
  return diagonal_value(b, t, f, x, l.a, l.oa, l.c, l.oc);
}

// log(H^{-1} Y) for Hermitian positive H, Y.
Mat link_log(const Mat& H, const Mat& Y);
// M_ac with tr_g-weighted sum -1/4 g^{ac} M_ac = K: second differences of the link logarithms.
std::array<std::array<Mat, kMaxDim>, kMaxDim> log_hessian(const FlatBundle& b, const AffineTorus& t,
                                                          const HermitianField& H, std::size_t x);

// End(E)-valued (p,q)-form with the same index layout as Form.
class EndForm {
 public:
  EndForm(int dim, std::size_t points, int rank, int p, int q);

  int dim() const { return dim_; }
  int rank() const { return rank_; }
  int p() const { return p_; }
  int q() const { return q_; }
  std::size_t points() const { return points_; }
  int rows() const { return binomial(dim_, p_); }
  int cols() const { return binomial(dim_, q_); }
  EndField& coeff(int a, int b) { return comp_[static_cast<std::size_t>(a * cols() + b)]; }
  const EndField& coeff(int a, int b) const { return comp_[static_cast<std::size_t>(a * cols() + b)]; }
  EndField& at(unsigned I, unsigned J) { return coeff(index_position(dim_, I), index_position(dim_, J)); }
  const EndField& at(unsigned I, unsigned J) const {
    return coeff(index_position(dim_, I), index_position(dim_, J));
  }

 private:
  int dim_;
  std::size_t points_;
  int rank_;
  int p_;
  int q_;
  std::vector<EndField> comp_;
};

double sup_norm(const EndForm& w);

struct LogMetricDecomposition {
  std::array<double, kMaxDim> linear_part{};
  ScalarField periodic_part;
};

void require_hpd(const HermitianField& H);
void hermitize(HermitianField& H);
LogMetricDecomposition log_metric_decomposition(const FlatBundle& b, const AffineTorus& t, const HermitianField& H);

EndForm hermitian_connection(const FlatBundle& b, const AffineTorus& t, const HermitianField& H);
// Curvature (1,1)-form; its symmetric part comes from log_hessian, so tr R equals the
// discrete first Chern form.
EndForm extended_curvature(const FlatBundle& b, const AffineTorus& t, const HermitianField& H);
EndField mean_curvature(const FlatBundle& b, const AffineTorus& t, const MetricField& g, const HermitianField& H);
Form first_chern_form(const FlatBundle& b, const AffineTorus& t, const HermitianField& H);

EndField trace_g(const MetricField& g, const EndForm& w);
EndForm covariant_del0(const FlatBundle& b, const AffineTorus& t, const HermitianField& H0, const EndField& phi);
EndForm covariant_del0(const FlatBundle& b, const AffineTorus& t, const HermitianField& H0, const EndForm& w);
EndForm end_delbar(const FlatBundle& b, const AffineTorus& t, const EndForm& w);
EndForm second_fundamental_form(const FlatBundle& b, const AffineTorus& t, const HermitianField& H,
                                const EndField& pi);
// tr_g delbar(f^{-1} del_0 f) composed from the individual operators.
EndField metric_change_term(const FlatBundle& b, const AffineTorus& t, const MetricField& g,
                            const HermitianField& H0, const EndField& f);

// Pointwise h-adjoint H^{-1} F^* H.
EndField h_adjoint(const HermitianField& H, const EndField& F);
// H0 f as a metric (f h0-self-adjoint).
HermitianField apply_endomorphism(const HermitianField& H0, const EndField& f);

// U(x)^{-1} with U(x) = exp(sum_k x_k A_k), so that U(x + e_k) = rho_k U(x).
std::vector<Mat> inverse_transport(const FlatBundle& b, const AffineTorus& t);
// Twisted metric U(x)^{-*} P(x) U(x)^{-1}, U(x) = exp(sum_k x_k A_k); P = I when omitted.
HermitianField background_metric(const FlatBundle& b, const AffineTorus& t, const HermitianField* periodic = nullptr);

}  // namespace ahe
