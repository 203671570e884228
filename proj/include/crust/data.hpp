#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crust/numerics.hpp"

namespace crust {

// A labeled dataset with scalar class values and (possibly) corrupted
// observed labels. y_true is ground truth kept for evaluation only; training
// code must consume y_observed.
struct NoisyDataset {
    Matrix x;                          // n x d inputs
    std::vector<double> y_observed;    // each exactly one of class_values
    std::vector<double> y_true;       // hidden ground truth
    std::vector<double> class_values;  // C values in [-1, 1], strictly increasing
    double label_margin = 0.0;         // delta <= |nu_r - nu_s| for all r != s
    std::vector<bool> noise_flags;     // y_observed[i] != y_true[i]

    std::size_t size() const { return x.rows; }
    std::size_t dim() const { return x.cols; }
    std::size_t num_classes() const { return class_values.size(); }
    double realized_noise_fraction() const;

    // Throws invalid_spec if any invariant fails.
    void validate() const;
};

struct SyntheticSpec {
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t num_clusters = 0;  // K >= C
    std::size_t num_classes = 0;   // C
    double cluster_separation = 0.0;
    double within_cluster_std = 0.0;
    std::uint64_t seed = 0;
};

// K isotropic Gaussian clusters with centers pairwise >= cluster_separation
// apart; cluster k carries class value nu_{k mod C}. Class values are C
// evenly spaced points in [-1, 1]. Output is clean (noise_flags all false)
// and shuffled so any prefix is class-balanced in expectation.
NoisyDataset generate_clusterable(const SyntheticSpec& spec);

// Flips exactly floor(ratio * n_c) examples per true class to a uniformly
// random different class value. Operates relative to y_true, so repeated
// injections replace rather than compound.
NoisyDataset inject_symmetric_noise(const NoisyDataset& ds, double ratio, Rng& rng);

// Asymmetric variant: class c flips only to pair_map[c]. pair_map[c] == c is
// invalid.
NoisyDataset inject_asymmetric_noise(const NoisyDataset& ds, double ratio,
                                     const std::vector<std::size_t>& pair_map, Rng& rng);

// Text format, exact round-trip (shortest round-trip decimal encoding):
//   n=...  d=...  C=...  class_values=v1,...,vC  margin=...
// then one line per example: d inputs, observed label, true label,
// comma-separated.
void save_dataset(const NoisyDataset& ds, const std::string& path);
NoisyDataset load_dataset(const std::string& path);

// First n_head examples and the rest, as two datasets sharing class metadata.
// Used to carve a held-out split from one generated population.
std::pair<NoisyDataset, NoisyDataset> split_dataset(const NoisyDataset& ds, std::size_t n_head);

// FNV-1a over the canonical serialization; stable content identity for
// run summaries.
std::uint64_t dataset_content_hash(const NoisyDataset& ds);

}  // namespace crust
