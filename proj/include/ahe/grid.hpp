#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace ahe {

using cd = std::complex<double>;

inline constexpr int kMaxDim = 3;
inline constexpr int kMaxRank = 6;

// Small matrices live on the stack; grid fields hold one per point.
using Mat = Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxRank, kMaxRank>;
using RealMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using RealVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxRank, 1>;

enum class DerivativeBackend { FiniteDifference, Spectral };

class AffineTorus {
 public:
  struct Neighbor {
    std::size_t index;
    int wrap;  // +1 crossed the upper face, -1 the lower face, 0 interior
  };

  AffineTorus(int dim, int resolution, DerivativeBackend backend = DerivativeBackend::FiniteDifference);

  int dim() const { return dim_; }
  int resolution() const { return n_; }
  double spacing() const { return 1.0 / n_; }
  std::size_t size() const { return size_; }
  DerivativeBackend backend() const { return backend_; }
  AffineTorus with_backend(DerivativeBackend backend) const;

  std::size_t stride(int axis) const { return strides_[axis]; }
  int coordinate(std::size_t index, int axis) const {
    return static_cast<int>((index / strides_[axis]) % static_cast<std::size_t>(n_));
  }
  double position(std::size_t index, int axis) const { return coordinate(index, axis) * spacing(); }
  Neighbor step(std::size_t index, int axis, int offset) const;

  // Dense periodic differentiation matrices along one axis (spectral backend only).
  const Eigen::MatrixXd& spectral_first() const;
  const Eigen::MatrixXd& spectral_second() const;

 private:
  int dim_;
  int n_;
  std::size_t size_;
  DerivativeBackend backend_;
  std::array<std::size_t, kMaxDim> strides_{};
  std::shared_ptr<const Eigen::MatrixXd> d1_;
  std::shared_ptr<const Eigen::MatrixXd> d2_;
};

template <class T, class Tag>
class GridField {
 public:
  using value_type = T;

  GridField() = default;
  explicit GridField(std::size_t n, const T& value = T{}) : values_(n, value) {}

  std::size_t size() const { return values_.size(); }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }
  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }
  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }

 private:
  std::vector<T> values_;
};

struct ScalarTag {};
struct MetricTag {};
struct HermitianTag {};
struct EndTag {};

using ScalarField = GridField<cd, ScalarTag>;
using MetricField = GridField<RealMat, MetricTag>;
using HermitianField = GridField<Mat, HermitianTag>;
using EndField = GridField<Mat, EndTag>;

ScalarField make_scalar(const AffineTorus& torus, cd value = 0.0);
double sup_norm(const ScalarField& f);
double sup_norm(const EndField& f);
// Periodic coordinate sampling helper: f(x) at every grid point.
template <class Fn>
ScalarField sample(const AffineTorus& torus, Fn fn) {
  ScalarField out(torus.size());
  std::array<double, kMaxDim> x{};
  for (std::size_t i = 0; i < torus.size(); ++i) {
    for (int k = 0; k < torus.dim(); ++k) x[k] = torus.position(i, k);
    out[i] = fn(x);
  }
  return out;
}

}  // namespace ahe
