#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crust/coreset.hpp"
#include "crust/data.hpp"
#include "crust/model.hpp"
#include "crust/numerics.hpp"

namespace crust {

// Left-singular-subspace split of a Jacobian at a chosen cutoff rank. The
// information half is the span of the top-K left singular vectors; the
// nuisance half is its orthogonal complement. basis_nuisance holds only the
// complement directions that carry computed singular values, so nuisance
// projections go through project_nuisance (algebraic complement) rather
// than that partial basis.
struct SubspaceSplit {
    std::size_t cutoff_rank = 0;  // K
    Matrix basis_info;            // K x n, rows orthonormal
    Matrix basis_nuisance;        // (r - K) x n when K < r, else empty
    std::vector<double> sigma;    // full thin spectrum, non-increasing
    // sigma_K == sigma_{K+1} leaves the cut defined only by index order.
    bool degenerate_cutoff = false;
};

SubspaceSplit split_spectrum(const Matrix& j, std::size_t K);

std::vector<double> project_info(const SubspaceSplit& split, const std::vector<double>& v);
std::vector<double> project_nuisance(const SubspaceSplit& split, const std::vector<double>& v);

// Piecewise-constant subspace over the selected set: element j of the
// selection joins the cell of whichever of the first K_main medoids is
// nearest (ties toward the earlier medoid). Cells are indexed by medoid
// selection order; an empty cell (possible only with duplicate medoids) is
// dropped and flagged.
struct ClusterSubspace {
    std::vector<std::vector<std::size_t>> partition;  // positions into cs.selected
    Matrix basis;                                     // one normalized indicator row per cell
    bool dropped_empty_cell = false;
};

ClusterSubspace cluster_subspace(const Coreset& cs, std::size_t K_main,
                                 const DissimilarityMatrix& dm);

// Spectrum diagnostics for one model snapshot and one selection over the
// dataset. J is the Jacobian over all of ds, J_S its restriction to the
// selected rows, J_r equals J_S with each row scaled by the square root of
// its coreset weight (the scaling under which the singular-value sandwich
// below is a theorem).
struct SpectrumReport {
    std::size_t cutoff_rank = 0;     // K
    std::size_t dataset_size = 0;    // n
    std::size_t coreset_size = 0;    // k
    std::vector<double> sigma_full;     // sigma(J)
    std::vector<double> sigma_coreset;  // sigma(J_S)
    std::vector<double> sigma_weighted; // sigma(J_r)

    // Fractions of each vector living in the information space of J:
    // ||P_I v|| / ||v||, zero-norm vectors reported absent.
    double alignment_labels = 0.0;           // observed labels y
    double alignment_true_labels = 0.0;      // true labels
    std::optional<double> alignment_residual;  // f - y, absent at an exact fit
    std::optional<double> alignment_noise;     // e = y - y_true, absent when clean

    double nuisance_ratio_full = 0.0;     // ||P_N y|| / sqrt(n), split of J
    double nuisance_ratio_coreset = 0.0;  // ||P_N y_S|| / sqrt(k), split of J_S

    // Same alignment pair measured on the selected subset with the split of
    // J_S; their gap is the measurable form of noise avoiding the top of
    // the spectrum.
    double coreset_true_alignment = 0.0;
    std::optional<double> coreset_noise_alignment;
    double label_noise_margin = 0.0;  // true alignment minus noise alignment

    double coreset_noise_fraction = 0.0;  // rho over the selected rows

    // Step-size calculus: alpha = sqrt(r_min) * sigma_min(J_S),
    // epsilon = |sqrt(r_max) * ||J_S|| - ||J|||, beta = sigma_1(J) + epsilon.
    double alpha = 0.0;
    double epsilon = 0.0;
    double beta = 0.0;
    double implied_eta = 0.0;  // 1 / (2 beta^2)

    // sqrt(r_min) * sigma_min(J_S) <= sigma_i(J_r) <= sqrt(r_max) * ||J_S||.
    bool sandwich_lower_ok = false;
    bool sandwich_upper_ok = false;

    bool degenerate_cutoff = false;      // either split had a tied cut
    bool dropped_empty_cell = false;     // from the cluster subspace
    // Principal angles (radians) between the top-K left subspace of J_S and
    // the medoid-cluster indicator subspace.
    std::vector<double> principal_angles;
};

// K must not exceed the selection size. Refuses (resource_error) when the
// full Jacobian would blow the memory budget.
SpectrumReport spectrum_report(const MlpModel& model, const NoisyDataset& ds, const Coreset& cs,
                               std::size_t K);

std::string spectrum_report_to_json(const SpectrumReport& report);
void write_spectrum_report(const SpectrumReport& report, const std::string& path);

}  // namespace crust
