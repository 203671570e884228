#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crust/numerics.hpp"

namespace crust {

// Pairwise gradient-surrogate dissimilarities plus the cover constant d0.
// Symmetry, zero diagonal, nonnegativity and d0 dominance are checked at
// construction; downstream code relies on them without re-checking.
struct DissimilarityMatrix {
    Matrix d;          // n x n
    double d0 = 0.0;   // >= max entry

    std::size_t size() const { return d.rows; }

    // Euclidean distances between feature rows; d0 = exact max entry.
    static DissimilarityMatrix from_features(const Matrix& features);
    // Validates an externally built matrix.
    static DissimilarityMatrix from_matrix(Matrix d, double d0);
};

// Result of a medoid selection. `selected` preserves greedy order;
// `assignment[i]` is the ground-set index of i's nearest medoid (ties toward
// the lowest selected index, and assignment[j] = j for selected j);
// `weights[j]` is the size of medoid j's cluster. Sum of weights = n.
struct Coreset {
    std::vector<std::size_t> selected;
    std::vector<std::size_t> assignment;
    std::vector<double> weights;  // aligned with selected
    double objective_value = 0.0;

    // Members of medoid `selected[j]`, in ascending ground-set order.
    std::vector<std::size_t> cluster_members(std::size_t j) const;
};

// F(S) = sum_i max_{j in S} (d0 - d_ij); F(empty) = 0.
double facility_location_value(const DissimilarityMatrix& dm, const std::vector<std::size_t>& s);

// Classical greedy: k steps of exact argmax marginal gain, ties toward the
// lowest index. eval_count (when given) receives the number of marginal-gain
// evaluations performed.
Coreset greedy_select(const DissimilarityMatrix& dm, std::size_t k,
                      std::size_t* eval_count = nullptr);

// Priority-queue variant. Output is element-for-element identical to
// greedy_select, including ties; only the evaluation count drops.
Coreset lazy_greedy_select(const DissimilarityMatrix& dm, std::size_t k,
                           std::size_t* eval_count = nullptr);

// Each step scans a uniform random sample of the remaining candidates
// (all of them when sample_size >= remaining). Deterministic per rng state.
Coreset stochastic_greedy_select(const DissimilarityMatrix& dm, std::size_t k,
                                 std::size_t sample_size, Rng& rng);

// ||J^T - P_S J^T||_2 with P_S the projector onto the span of the selected
// rows (rank-deficient selections just skip dependent rows).
double projection_residual_norm(const Matrix& j, const std::vector<std::size_t>& subset);

// Exhaustive argmin of projection_residual_norm over row subsets. Oracle
// scale only (rows <= 15, k <= 4); ties toward the lexicographically
// smallest subset.
std::vector<std::size_t> best_rank_k_rows_bruteforce(const Matrix& j, std::size_t k);

// Row j scaled by weights[j]. Weights must be positive.
Matrix weighted_jacobian(const Matrix& j_rows, const std::vector<double>& weights);

// Text dump, one medoid per line: index, weight, comma-joined members.
void save_coreset(const Coreset& cs, const std::string& path);

}  // namespace crust
