#pragma once

#include <vector>

#include "ncf/tensor.hpp"

namespace ncf {

// Solves A X = B for X with Gaussian elimination and partial pivoting.
// A is [n,n], B is [n,k]. Throws NumericError on a (numerically) singular A.
Tensor solve_linear(Tensor a, Tensor b);

// First principal axis of row observations [n, d] (power iteration on the
// centered covariance). Deterministic start vector.
std::vector<double> principal_axis(const Tensor& rows);

// Spearman rank correlation of two equally long series.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace ncf
