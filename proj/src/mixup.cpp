#include "crust/mixup.hpp"

#include <algorithm>

#include "crust/errors.hpp"

namespace crust {

namespace {

void append_row(MixedBatch& batch, const NoisyDataset& ds, std::size_t medoid,
                std::size_t member, double lambda, double weight) {
    const std::size_t d = ds.dim();
    const double* xm = &ds.x.data[medoid * d];
    const double* xi = &ds.x.data[member * d];
    for (std::size_t t = 0; t < d; ++t)
        batch.inputs.data.push_back(xm[t] + lambda * (xi[t] - xm[t]));
    ++batch.inputs.rows;
    const double ym = ds.y_observed[medoid];
    batch.labels.push_back(ym + lambda * (ds.y_observed[member] - ym));
    batch.weights.push_back(weight);
    batch.provenance.push_back({medoid, member, lambda});
}

void mix_cluster_into(MixedBatch& batch, const NoisyDataset& ds, std::size_t medoid,
                      const std::vector<std::size_t>& members, std::size_t sample_count,
                      double alpha, Rng& rng, const double* forced_lambda) {
    if (!(alpha > 0.0)) throw invalid_input("mixup: alpha must be positive");
    if (medoid >= ds.size()) throw invalid_input("mixup: medoid index out of range");
    std::vector<std::size_t> partners;
    partners.reserve(members.size());
    bool medoid_present = false;
    for (std::size_t i : members) {
        if (i >= ds.size()) throw invalid_input("mixup: member index out of range");
        if (i == medoid) {
            medoid_present = true;
            continue;
        }
        partners.push_back(i);
    }
    if (!medoid_present) throw invalid_input("mixup: medoid must be one of its members");

    if (partners.empty()) {
        // Singleton cluster: no partner to mix with, emit the medoid as-is.
        append_row(batch, ds, medoid, medoid, 0.0, 1.0);
        return;
    }
    if (sample_count < 1 || sample_count > partners.size())
        throw invalid_input("mixup: sample_count must be in [1, |V_j| - 1]");

    // Partial Fisher-Yates; the prefix is R_j.
    for (std::size_t t = 0; t < sample_count; ++t) {
        const std::size_t j = t + rng.below(partners.size() - t);
        std::swap(partners[t], partners[j]);
    }
    const double weight = static_cast<double>(members.size()) / static_cast<double>(sample_count);
    for (std::size_t t = 0; t < sample_count; ++t) {
        const double lambda = forced_lambda ? *forced_lambda : beta_sample(rng, alpha);
        append_row(batch, ds, medoid, partners[t], lambda, weight);
    }
}

}  // namespace

MixedBatch mix_cluster(const NoisyDataset& ds, std::size_t medoid,
                       const std::vector<std::size_t>& members, std::size_t sample_count,
                       double alpha, Rng& rng, const double* forced_lambda) {
    MixedBatch batch;
    batch.inputs.cols = ds.dim();
    mix_cluster_into(batch, ds, medoid, members, sample_count, alpha, rng, forced_lambda);
    return batch;
}

MixedBatch mix_all(const NoisyDataset& ds, const Coreset& cs, std::size_t sample_count,
                   double alpha, Rng& rng, const std::vector<std::size_t>* index_map,
                   const double* forced_lambda) {
    const std::size_t ground = cs.assignment.size();
    if (index_map) {
        if (index_map->size() != ground)
            throw invalid_input("mix_all: index_map must cover the coreset ground set");
    } else if (ground != ds.size()) {
        throw invalid_input("mix_all: coreset ground set does not match the dataset");
    }
    if (sample_count < 1) throw invalid_input("mix_all: sample_count must be positive");

    auto to_row = [&](std::size_t local) { return index_map ? (*index_map)[local] : local; };

    MixedBatch batch;
    batch.inputs.cols = ds.dim();
    // One substream per cluster so clusters could be mixed independently;
    // the draw below keeps repeated calls on the same rng distinct.
    Rng base = rng.split(rng.next_u64());
    for (std::size_t j = 0; j < cs.selected.size(); ++j) {
        std::vector<std::size_t> members = cs.cluster_members(j);
        for (std::size_t& i : members) i = to_row(i);
        const std::size_t partners = members.size() - 1;
        const std::size_t count = partners == 0 ? 1 : std::min(sample_count, partners);
        Rng cluster_rng = base.split(j);
        mix_cluster_into(batch, ds, to_row(cs.selected[j]), members, count, alpha, cluster_rng,
                         forced_lambda);
    }
    return batch;
}

}  // namespace crust
