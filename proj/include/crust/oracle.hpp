#pragma once

#include <utility>
#include <vector>

#include "crust/coreset.hpp"
#include "crust/model.hpp"
#include "crust/numerics.hpp"

// Brute-force references used by tests and by `crust verify`. These share no
// algorithmic shortcuts with the implementations they check: facility
// location is evaluated by its definition, gradients by central differences,
// dissimilarities by an independent double loop.
namespace crust::oracle {

// Exact optimum over all C(n, k) subsets; ties toward the lexicographically
// smallest subset. Refuses beyond n <= 15, k <= 5.
std::pair<std::vector<std::size_t>, double> exhaustive_facility_location(
    const DissimilarityMatrix& dm, std::size_t k);

// F(S) straight from the definition, no coverage caching.
double naive_facility_location_value(const DissimilarityMatrix& dm,
                                     const std::vector<std::size_t>& s);

// Central finite differences of the squared loss per parameter; O(m) forward
// passes. Layout matches PerExampleGrad.
std::vector<double> finite_difference_gradient(const MlpModel& model, const double* x, double y,
                                               double h);

// Central finite differences of f itself (a Jacobian row).
std::vector<double> finite_difference_jacobian_row(const MlpModel& model, const double* x,
                                                   double h);

// Central finite differences of the loss w.r.t. the last layer's input
// vector a^{L-1}, the reference for GradientFeatures.
std::vector<double> finite_difference_feature_gradient(const MlpModel& model, const double* x,
                                                       double y, double h);

// Euclidean feature distances by double loop (no shared kernel with
// pairwise_sq_dists).
Matrix naive_feature_distances(const Matrix& features);

// Independent rank-k row search: projector built from an SVD basis instead
// of Gram-Schmidt. Returns (subset, spectral error).
std::pair<std::vector<std::size_t>, double> best_rank_k_rows_reference(const Matrix& j,
                                                                       std::size_t k);

}  // namespace crust::oracle
