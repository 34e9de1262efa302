#include "ahe/stability.hpp"

#include <algorithm>
#include <cmath>

#include "ahe/error.hpp"
#include "ahe/gauduchon.hpp"
#include "ahe/linalg.hpp"

namespace ahe {

namespace {

using DMat = Eigen::MatrixXcd;

// Orthonormal basis of the right null space, singular values below tol * max(1, s_max).
DMat null_space(const DMat& A, double tol) {
  Eigen::JacobiSVD<DMat> svd(A, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cut = tol * std::max(1.0, s.size() ? s[0] : 0.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > cut) ++rank;
  return svd.matrixV().rightCols(A.cols() - rank);
}

DMat orthonormalize(const DMat& B) {
  if (B.cols() == 0) return B;
  Eigen::JacobiSVD<DMat> svd(B, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > 1e-10 * s[0]) ++rank;
  return svd.matrixU().leftCols(rank);
}

// Real orthonormal basis of a conjugation-invariant subspace given by a complex basis.
DMat realify(const DMat& B, int dim) {
  Eigen::MatrixXd X(B.rows(), 2 * B.cols());
  X << B.real(), B.imag();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU);
  return svd.matrixU().leftCols(dim).cast<cd>();
}

// +1 when the first non-real component has positive imaginary part.
int orientation(const std::vector<cd>& lambda, double tol) {
  for (const cd& l : lambda)
    if (std::abs(l.imag()) > tol * std::max(1.0, std::abs(l))) return l.imag() > 0 ? 1 : -1;
  return 0;
}

void split_recursive(const FlatBundle& b, const DMat& B, int axis, std::vector<cd>& lambda, double tol,
                     std::vector<JointEigenspace>& out) {
  if (axis == b.dim()) {
    out.push_back({lambda, Mat(B)});
    return;
  }
  const DMat M = B.adjoint() * DMat(b.monodromy(axis)) * B;
  const Eigen::Index m = M.rows();
  Eigen::ComplexEigenSolver<DMat> es(M, false);
  std::vector<cd> ev(es.eigenvalues().data(), es.eigenvalues().data() + m);
  std::vector<std::vector<cd>> clusters;
  for (const cd& v : ev) {
    bool placed = false;
    for (auto& c : clusters) {
      if (std::abs(v - c[0]) <= tol * std::max(1.0, std::abs(v))) {
        c.push_back(v);
        placed = true;
        break;
      }
    }
    if (!placed) clusters.push_back({v});
  }
  for (const auto& c : clusters) {
    cd mu = 0.0;
    for (const cd& v : c) mu += v;
    mu /= static_cast<double>(c.size());
    DMat P = M - mu * DMat::Identity(m, m);
    DMat Pm = DMat::Identity(m, m);
    for (Eigen::Index i = 0; i < m; ++i) Pm = Pm * P;
    Eigen::JacobiSVD<DMat> svd(Pm, Eigen::ComputeFullV);
    const DMat V = svd.matrixV().rightCols(static_cast<Eigen::Index>(c.size()));
    lambda.push_back(mu);
    split_recursive(b, B * V, axis + 1, lambda, tol, out);
    lambda.pop_back();
  }
}

struct LocalCandidates {
  std::vector<DMat> spaces;  // bases in C^r, excluding zero
  bool continuous = false;
};

// Socle series of the commuting nilpotent parts on one joint generalized eigenspace.
LocalCandidates local_candidates(const FlatBundle& b, const JointEigenspace& js) {
  const DMat B = js.basis;
  const Eigen::Index m = B.cols();
  const int n = b.dim();
  std::vector<DMat> N;
  for (int k = 0; k < n; ++k)
    N.push_back(B.adjoint() * DMat(b.monodromy(k)) * B - js.eigenvalue[k] * DMat::Identity(m, m));
  LocalCandidates lc;
  DMat S(m, 0);
  while (S.cols() < m) {
    const DMat proj = DMat::Identity(m, m) - S * S.adjoint();
    DMat stack(n * m, m);
    for (int k = 0; k < n; ++k) stack.block(k * m, 0, m, m) = proj * N[k];
    DMat next = null_space(stack, 1e-7);
    if (next.cols() <= S.cols()) next = DMat::Identity(m, m);  // numerical stall: close the series
    // Directions added by this layer, orthogonal to the previous socle.
    DMat layer = orthonormalize(proj * next);
    if (layer.cols() >= 2) {
      lc.continuous = true;
      for (Eigen::Index j = 0; j < layer.cols(); ++j) {
        DMat rep(m, S.cols() + 1);
        rep << S, layer.col(j);
        if (rep.cols() < m) lc.spaces.push_back(B * rep);
      }
    }
    DMat combined(m, S.cols() + layer.cols());
    combined << S, layer;
    S = orthonormalize(combined);
    lc.spaces.push_back(B * S);
  }
  return lc;
}

bool same_subspace(const DMat& a, const DMat& b) {
  if (a.cols() != b.cols()) return false;
  return (a * a.adjoint() - b * b.adjoint()).norm() <= 1e-8;
}

}  // namespace

std::vector<JointEigenspace> joint_generalized_eigenspaces(const FlatBundle& b, double cluster_tol) {
  std::vector<JointEigenspace> out;
  std::vector<cd> lambda;
  split_recursive(b, DMat::Identity(b.rank(), b.rank()), 0, lambda, cluster_tol, out);
  return out;
}

double invariance_residual(const FlatBundle& b, const Mat& basis) {
  double r = 0.0;
  for (int k = 0; k < b.dim(); ++k) {
    const Mat& rho = b.monodromy(k);
    const Mat M = basis.adjoint() * rho * basis;
    r = std::max(r, (rho * basis - basis * M).norm());
  }
  return r;
}

SubbundleEnumeration enumerate_flat_subbundles(const FlatBundle& b, int max_rank) {
  const int r = b.rank();
  if (r > kMaxRank) throw Error(ErrorCode::RankTooLarge, "enumeration supports rank <= 6");
  const double tol = 1e-6;
  const auto spaces = joint_generalized_eigenspaces(b, tol);
  const bool real = b.field() == FieldKind::Real;

  // Groups: each contributes a list of options (subspaces of C^r); zero is always allowed.
  std::vector<std::vector<DMat>> groups;
  SubbundleEnumeration res;
  for (const auto& js : spaces) {
    const int orient = real ? orientation(js.eigenvalue, tol) : 0;
    if (real && orient < 0) continue;
    LocalCandidates lc = local_candidates(b, js);
    res.continuous_family = res.continuous_family || lc.continuous;
    std::vector<DMat> opts;
    for (const DMat& s : lc.spaces) {
      if (!real) {
        opts.push_back(s);
      } else if (orient == 0) {
        opts.push_back(realify(s, static_cast<int>(s.cols())));
      } else {
        DMat both(r, 2 * s.cols());
        both << s, s.conjugate();
        opts.push_back(realify(both, static_cast<int>(2 * s.cols())));
      }
    }
    groups.push_back(opts);
  }

  std::vector<std::size_t> choice(groups.size(), 0);  // 0 = zero subspace, i = option i-1
  while (true) {
    DMat acc(r, 0);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (choice[g] == 0) continue;
      const DMat& s = groups[g][choice[g] - 1];
      DMat next(r, acc.cols() + s.cols());
      next << acc, s;
      acc = next;
    }
    if (acc.cols() > 0 && acc.cols() < r && acc.cols() <= max_rank) {
      DMat q = orthonormalize(acc);
      if (real) q = q.real().cast<cd>();
      bool dup = false;
      for (const auto& f : res.subbundles) dup = dup || same_subspace(DMat(f.basis), q);
      if (!dup) res.subbundles.push_back({Mat(q)});
    }
    std::size_t g = 0;
    for (; g < groups.size(); ++g) {
      if (++choice[g] <= groups[g].size()) break;
      choice[g] = 0;
    }
    if (g == groups.size()) break;
  }
  std::sort(res.subbundles.begin(), res.subbundles.end(),
            [](const FlatSubbundle& a, const FlatSubbundle& c) { return a.rank() < c.rank(); });
  return res;
}

FlatBundle induced_bundle(const FlatBundle& b, const FlatSubbundle& F) {
  std::vector<Mat> m;
  for (int k = 0; k < b.dim(); ++k) m.push_back(F.basis.adjoint() * b.monodromy(k) * F.basis);
  const bool real = b.field() == FieldKind::Real && F.basis.imag().norm() == 0.0;
  return FlatBundle::build(m, real ? FieldKind::Real : FieldKind::Complex);
}

HermitianField induced_metric(const HermitianField& H, const FlatSubbundle& F) {
  HermitianField out(H.size());
  for (std::size_t x = 0; x < H.size(); ++x) out[x] = hermitian_part(F.basis.adjoint() * H[x] * F.basis);
  return out;
}

Mat complement_basis(const FlatSubbundle& F) {
  const DMat B = F.basis;
  DMat C = null_space(B.adjoint(), 1e-12);
  if (F.basis.imag().norm() == 0.0) C = realify(C, static_cast<int>(C.cols()));
  return Mat(C);
}

FlatBundle quotient_bundle(const FlatBundle& b, const FlatSubbundle& F) {
  const Mat C = complement_basis(F);
  std::vector<Mat> m;
  for (int k = 0; k < b.dim(); ++k) m.push_back(C.adjoint() * b.monodromy(k) * C);
  const bool real = b.field() == FieldKind::Real && C.imag().norm() == 0.0;
  return FlatBundle::build(m, real ? FieldKind::Real : FieldKind::Complex);
}

HermitianField quotient_metric(const HermitianField& H, const FlatSubbundle& F) {
  const Mat C = complement_basis(F);
  const Mat& B = F.basis;
  HermitianField out(H.size());
  for (std::size_t x = 0; x < H.size(); ++x) {
    const Mat hbb = B.adjoint() * H[x] * B, hbc = B.adjoint() * H[x] * C, hcc = C.adjoint() * H[x] * C;
    out[x] = hermitian_part(hcc - hbc.adjoint() * hbb.inverse() * hbc);
  }
  return out;
}

double degree(const FlatBundle& b, const AffineTorus& t, const HermitianField& H, const MetricField& gG,
              double gauduchon_tol) {
  const double res = gauduchon_residual(t, gG);
  if (res > gauduchon_tol)
    throw Error(ErrorCode::NonGauduchonMetric, "metric Gauduchon residual " + std::to_string(res));
  const int n = t.dim();
  const Form c1 = first_chern_form(b, t, H);
  return integrate(t, div_by_nu(wedge(c1, form_power(kahler_form(t, gG), n - 1)))).real();
}

double slope(const FlatBundle& b, const AffineTorus& t, const HermitianField& H, const MetricField& gG,
             double gauduchon_tol) {
  return degree(b, t, H, gG, gauduchon_tol) / b.rank();
}

AdditivityCheck degree_additivity_check(const FlatBundle& b, const AffineTorus& t, const HermitianField& H,
                                        const MetricField& gG, const FlatSubbundle& F) {
  if (invariance_residual(b, F.basis) > 1e-10)
    throw Error(ErrorCode::InvalidArgument, "subspace is not invariant under the monodromy");
  AdditivityCheck a;
  a.deg_sub = degree(induced_bundle(b, F), t, induced_metric(H, F), gG);
  a.deg_quotient = degree(quotient_bundle(b, F), t, quotient_metric(H, F), gG);
  a.deg_total = degree(b, t, H, gG);
  a.defect = std::abs(a.deg_sub + a.deg_quotient - a.deg_total);
  return a;
}

int commutant_dimension(const FlatBundle& b) {
  const int r = b.rank();
  const int n = b.dim();
  DMat K(n * r * r, r * r);
  const DMat I = DMat::Identity(r, r);
  for (int k = 0; k < n; ++k) {
    const DMat rho = b.monodromy(k);
    DMat blk(r * r, r * r);
    // vec(rho X - X rho) = (I (x) rho - rho^T (x) I) vec(X)
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) blk.block(i * r, j * r, r, r) = I(i, j) * rho - rho(j, i) * I;
    K.block(k * r * r, 0, r * r, r * r) = blk;
  }
  return static_cast<int>(null_space(K, 1e-10).cols());
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Stable: return "stable";
    case Verdict::StrictlySemistable: return "strictly-semistable";
    case Verdict::Unstable: return "unstable";
    case Verdict::IrreducibleStable: return "irreducible-stable";
  }
  return "unknown";
}

std::string to_string(Simplicity s) {
  switch (s) {
    case Simplicity::CSimple: return "C-simple";
    case Simplicity::RSimpleOnly: return "R-simple-only";
    case Simplicity::NotSimple: return "not-simple";
  }
  return "unknown";
}

std::optional<ConjugateSplitting> conjugate_splitting(const FlatBundle& b) {
  if (b.field() != FieldKind::Real) return std::nullopt;
  const double tol = 1e-6;
  DMat V(b.rank(), 0);
  for (const auto& js : joint_generalized_eigenspaces(b, tol)) {
    const int o = orientation(js.eigenvalue, tol);
    if (o == 0) return std::nullopt;
    if (o < 0) continue;
    DMat next(b.rank(), V.cols() + js.basis.cols());
    next << V, DMat(js.basis);
    V = next;
  }
  if (2 * V.cols() != b.rank()) return std::nullopt;
  ConjugateSplitting s;
  s.V = Mat(orthonormalize(V));
  s.Vbar = s.V.conjugate();
  return s;
}

StabilityReport stability_verdict(const FlatBundle& b, const AffineTorus& t, const MetricField& gG) {
  StabilityReport rep;
  rep.field = b.field();
  rep.tolerance = 10.0 / (static_cast<double>(t.resolution()) * t.resolution());
  const HermitianField H = background_metric(b, t);
  rep.degree = degree(b, t, H, gG);
  rep.slope = rep.degree / b.rank();
  const SubbundleEnumeration en = enumerate_flat_subbundles(b, b.rank() - 1);
  rep.continuous_family = en.continuous_family;
  bool equal = false, larger = false;
  for (const auto& F : en.subbundles) {
    const double mu = slope(induced_bundle(b, F), t, induced_metric(H, F), gG);
    rep.witnesses.push_back({F, mu});
    if (mu > rep.slope + rep.tolerance) larger = true;
    else if (mu >= rep.slope - rep.tolerance) equal = true;
  }
  if (en.subbundles.empty()) rep.verdict = Verdict::IrreducibleStable;
  else if (larger) rep.verdict = Verdict::Unstable;
  else if (equal) rep.verdict = Verdict::StrictlySemistable;
  else rep.verdict = Verdict::Stable;
  rep.commutant_dimension = commutant_dimension(b);
  rep.simplicity = rep.commutant_dimension == 1 ? Simplicity::CSimple : Simplicity::NotSimple;
  rep.splitting = conjugate_splitting(b);
  return rep;
}

}  // namespace ahe
