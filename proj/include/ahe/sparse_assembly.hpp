#pragma once

#include <functional>

#include <Eigen/Sparse>

#include "ahe/grid.hpp"

namespace ahe {

using LinearMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Assembles a linear operator on point-major block vectors (index x * block + c) whose output
// at a point depends only on inputs within Chebyshev distance `radius` on the periodic grid.
// Columns are probed in colour classes, so the map is applied block * w^n times.
Eigen::SparseMatrix<double> assemble_local(const AffineTorus& t, int block, int radius, const LinearMap& apply);

}  // namespace ahe
