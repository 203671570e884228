#pragma once

#include <cstdint>
#include <vector>

#include "crust/coreset.hpp"
#include "crust/data.hpp"

namespace crust {

// Convex combinations of cluster medoids with sampled cluster members, plus
// the bookkeeping needed to audit every row back to its pair.
struct MixedBatch {
    struct Provenance {
        std::size_t medoid = 0;  // dataset row of the cluster medoid
        std::size_t member = 0;  // dataset row of the sampled member
        double lambda = 0.0;     // 0 -> medoid, 1 -> member
    };

    Matrix inputs;
    std::vector<double> labels;
    std::vector<double> weights;  // |V_j| / |R_j| per row
    std::vector<Provenance> provenance;

    std::size_t size() const { return inputs.rows; }
};

// Rows for one cluster: sample_count partners drawn uniformly
// without replacement from members minus the medoid, each combined with the
// medoid at its own lambda ~ Beta(alpha, alpha). The combination is
// medoid + lambda * (member - medoid), so a cluster with one shared label
// reproduces that label exactly for every lambda. Singleton clusters fall
// back to the raw medoid with weight 1. forced_lambda (test hook, and the
// degenerate-mode lattice) overrides the Beta draw.
MixedBatch mix_cluster(const NoisyDataset& ds, std::size_t medoid,
                       const std::vector<std::size_t>& members, std::size_t sample_count,
                       double alpha, Rng& rng, const double* forced_lambda = nullptr);

// Concatenation of mix_cluster over medoids in selection order, one Rng
// substream per cluster. index_map translates coreset ground-set positions
// to dataset rows (identity when null, e.g. a coreset built on the whole
// dataset). sample_count is clamped per cluster to the available partners.
MixedBatch mix_all(const NoisyDataset& ds, const Coreset& cs, std::size_t sample_count,
                   double alpha, Rng& rng, const std::vector<std::size_t>* index_map = nullptr,
                   const double* forced_lambda = nullptr);

}  // namespace crust
