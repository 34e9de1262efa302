#include "ahe/sparse_assembly.hpp"

#include <array>

namespace ahe {

namespace {

int colour_width(int n, int radius) {
  for (int w = 2 * radius + 1; w < n; ++w)
    if (n % w == 0) return w;
  return n;
}

}  // namespace

Eigen::SparseMatrix<double> assemble_local(const AffineTorus& t, int block, int radius, const LinearMap& apply) {
  const int n = t.resolution();
  const int dim = t.dim();
  const int w = colour_width(n, radius);
  int colours = 1;
  for (int k = 0; k < dim; ++k) colours *= w;
  const std::size_t M = t.size();
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd probe(static_cast<Eigen::Index>(M * block));
  for (int c = 0; c < colours; ++c) {
    std::array<int, kMaxDim> cc{};
    for (int k = 0, rest = c; k < dim; ++k, rest /= w) cc[k] = rest % w;
    for (int comp = 0; comp < block; ++comp) {
      probe.setZero();
      for (std::size_t x = 0; x < M; ++x) {
        bool in = true;
        for (int k = 0; k < dim && in; ++k) in = (t.coordinate(x, k) % w) == cc[k];
        if (in) probe[static_cast<Eigen::Index>(x * block + comp)] = 1.0;
      }
      const Eigen::VectorXd y = apply(probe);
      for (std::size_t row = 0; row < M; ++row) {
        std::size_t col = 0;
        bool ok = true;
        for (int k = 0; k < dim && ok; ++k) {
          const int yk = t.coordinate(row, k);
          int xk;
          if (w == n) {
            xk = cc[k];
          } else {
            int o = ((cc[k] - yk) % w + w) % w;
            if (o > radius) o -= w;
            if (o < -radius) ok = false;
            xk = ((yk + o) % n + n) % n;
          }
          col += static_cast<std::size_t>(xk) * t.stride(k);
        }
        if (!ok) continue;
        for (int rc = 0; rc < block; ++rc) {
          const double v = y[static_cast<Eigen::Index>(row * block + rc)];
          if (v != 0.0)
            trip.emplace_back(static_cast<int>(row * block + rc), static_cast<int>(col * block + comp), v);
        }
      }
    }
  }
  Eigen::SparseMatrix<double> J(static_cast<Eigen::Index>(M * block), static_cast<Eigen::Index>(M * block));
  J.setFromTriplets(trip.begin(), trip.end());
  return J;
}

}  // namespace ahe
