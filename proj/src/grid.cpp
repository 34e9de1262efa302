#include "ahe/grid.hpp"

#include <cmath>
#include <numbers>

#include "ahe/error.hpp"

namespace ahe {

namespace {

// Trigonometric interpolation derivative along a periodic line of N samples.
// The first derivative drops the unpaired Nyquist mode, the second keeps it.
std::shared_ptr<const Eigen::MatrixXd> periodic_derivative_matrix(int n, int order) {
  auto d = std::make_shared<Eigen::MatrixXd>(Eigen::MatrixXd::Zero(n, n));
  const double two_pi = 2.0 * std::numbers::pi;
  const int kmax = n / 2;
  for (int j = 0; j < n; ++j) {
    for (int l = 0; l < n; ++l) {
      double acc = 0.0;
      for (int k = -((n - 1) / 2); k <= kmax; ++k) {
        const bool nyquist = (n % 2 == 0) && (k == kmax);
        const double phase = two_pi * k * (j - l) / n;
        if (order == 1) {
          if (!nyquist) acc += -two_pi * k * std::sin(phase);
        } else {
          acc += -(two_pi * k) * (two_pi * k) * std::cos(phase);
        }
      }
      (*d)(j, l) = acc / n;
    }
  }
  return d;
}

}  // namespace

AffineTorus::AffineTorus(int dim, int resolution, DerivativeBackend backend)
    : dim_(dim), n_(resolution), size_(1), backend_(backend) {
  if (dim < 1 || dim > kMaxDim) throw Error(ErrorCode::InvalidArgument, "torus dimension must be 1, 2 or 3");
  if (resolution < 8) throw Error(ErrorCode::InvalidArgument, "grid resolution must be at least 8");
  for (int k = 0; k < dim; ++k) {
    strides_[k] = size_;
    size_ *= static_cast<std::size_t>(resolution);
  }
  if (backend == DerivativeBackend::Spectral) {
    d1_ = periodic_derivative_matrix(resolution, 1);
    d2_ = periodic_derivative_matrix(resolution, 2);
  }
}

AffineTorus AffineTorus::with_backend(DerivativeBackend backend) const {
  if (backend == backend_) return *this;
  return AffineTorus(dim_, n_, backend);
}

AffineTorus::Neighbor AffineTorus::step(std::size_t index, int axis, int offset) const {
  const int c = coordinate(index, axis);
  int t = c + offset;
  int wrap = 0;
  while (t >= n_) {
    t -= n_;
    ++wrap;
  }
  while (t < 0) {
    t += n_;
    --wrap;
  }
  const std::ptrdiff_t delta = static_cast<std::ptrdiff_t>(t - c) * static_cast<std::ptrdiff_t>(strides_[axis]);
  return {static_cast<std::size_t>(static_cast<std::ptrdiff_t>(index) + delta), wrap};
}

const Eigen::MatrixXd& AffineTorus::spectral_first() const {
  if (!d1_) throw Error(ErrorCode::InvalidArgument, "torus was not built with the spectral backend");
  return *d1_;
}

const Eigen::MatrixXd& AffineTorus::spectral_second() const {
  if (!d2_) throw Error(ErrorCode::InvalidArgument, "torus was not built with the spectral backend");
  return *d2_;
}

ScalarField make_scalar(const AffineTorus& torus, cd value) { return ScalarField(torus.size(), value); }

double sup_norm(const ScalarField& f) {
  double m = 0.0;
  for (const auto& v : f) m = std::max(m, std::abs(v));
  return m;
}

double sup_norm(const EndField& f) {
  double m = 0.0;
  for (const auto& v : f) m = std::max(m, v.norm());
  return m;
}

}  // namespace ahe
