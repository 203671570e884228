#include "crust/coreset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>

namespace crust {

DissimilarityMatrix DissimilarityMatrix::from_features(const Matrix& features) {
    Matrix sq = pairwise_sq_dists(features);
    const std::size_t n = sq.rows;
    double d0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = std::sqrt(sq(i, j));
            sq(i, j) = v;
            sq(j, i) = v;
            d0 = std::max(d0, v);
        }
    }
    DissimilarityMatrix dm;
    dm.d = std::move(sq);
    dm.d0 = d0;
    return dm;
}

DissimilarityMatrix DissimilarityMatrix::from_matrix(Matrix d, double d0) {
    if (d.rows != d.cols) throw invalid_input("dissimilarity: matrix must be square");
    if (!d.all_finite() || !std::isfinite(d0))
        throw invalid_input("dissimilarity: non-finite entries");
    for (std::size_t i = 0; i < d.rows; ++i) {
        if (d(i, i) != 0.0) throw invalid_input("dissimilarity: nonzero diagonal");
        for (std::size_t j = i + 1; j < d.cols; ++j) {
            if (d(i, j) != d(j, i)) throw invalid_input("dissimilarity: asymmetric");
            if (d(i, j) < 0.0) throw invalid_input("dissimilarity: negative entry");
            if (d(i, j) > d0) throw invalid_input("dissimilarity: d0 below max entry");
        }
    }
    DissimilarityMatrix dm;
    dm.d = std::move(d);
    dm.d0 = d0;
    return dm;
}

std::vector<std::size_t> Coreset::cluster_members(std::size_t j) const {
    std::vector<std::size_t> members;
    const std::size_t medoid = selected[j];
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] == medoid) members.push_back(i);
    return members;
}

double facility_location_value(const DissimilarityMatrix& dm,
                               const std::vector<std::size_t>& s) {
    if (s.empty()) return 0.0;
    const std::size_t n = dm.size();
    for (std::size_t j : s)
        if (j >= n) throw invalid_input("facility_location_value: index out of range");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j : s) best = std::max(best, dm.d0 - dm.d(i, j));
        total += best;
    }
    return total;
}

namespace {

// Marginal gain of adding e given the running best-coverage array.
// coverage[i] = max over selected j of (d0 - d_ij), 0 for the empty set.
double marginal_gain(const DissimilarityMatrix& dm, const std::vector<double>& coverage,
                     std::size_t e) {
    const std::size_t n = dm.size();
    const double* col = &dm.d.data[e * n];  // row e == column e by symmetry
    double gain = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double improved = (dm.d0 - col[i]) - coverage[i];
        if (improved > 0.0) gain += improved;
    }
    return gain;
}

void absorb(const DissimilarityMatrix& dm, std::vector<double>& coverage, std::size_t e) {
    const std::size_t n = dm.size();
    const double* col = &dm.d.data[e * n];
    for (std::size_t i = 0; i < n; ++i) coverage[i] = std::max(coverage[i], dm.d0 - col[i]);
}

// Assignment, weights and objective for a finished selection.
void finalize(const DissimilarityMatrix& dm, Coreset& cs) {
    const std::size_t n = dm.size();
    std::vector<bool> is_selected(n, false);
    for (std::size_t j : cs.selected) is_selected[j] = true;
    cs.assignment.resize(n);
    std::vector<std::size_t> sorted = cs.selected;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) {
        if (is_selected[i]) {
            cs.assignment[i] = i;  // a medoid always covers itself
            continue;
        }
        std::size_t best = sorted[0];
        double best_d = dm.d(i, sorted[0]);
        for (std::size_t t = 1; t < sorted.size(); ++t) {
            const double dist = dm.d(i, sorted[t]);
            if (dist < best_d) {
                best_d = dist;
                best = sorted[t];
            }
        }
        cs.assignment[i] = best;
    }
    cs.weights.assign(cs.selected.size(), 0.0);
    std::vector<std::size_t> slot(n, 0);
    for (std::size_t j = 0; j < cs.selected.size(); ++j) slot[cs.selected[j]] = j;
    for (std::size_t i = 0; i < n; ++i) cs.weights[slot[cs.assignment[i]]] += 1.0;
    cs.objective_value = facility_location_value(dm, cs.selected);
}

void check_budget(const DissimilarityMatrix& dm, std::size_t k) {
    if (k < 1 || k > dm.size()) throw invalid_input("select: budget k out of range");
}

}  // namespace

Coreset greedy_select(const DissimilarityMatrix& dm, std::size_t k, std::size_t* eval_count) {
    check_budget(dm, k);
    const std::size_t n = dm.size();
    std::vector<double> coverage(n, 0.0);
    std::vector<bool> taken(n, false);
    std::size_t evals = 0;
    Coreset cs;
    for (std::size_t step = 0; step < k; ++step) {
        std::size_t best = n;
        double best_gain = -1.0;
        for (std::size_t e = 0; e < n; ++e) {
            if (taken[e]) continue;
            const double gain = marginal_gain(dm, coverage, e);
            ++evals;
            if (gain > best_gain) {  // strict: ties stay with the lowest index
                best_gain = gain;
                best = e;
            }
        }
        taken[best] = true;
        cs.selected.push_back(best);
        absorb(dm, coverage, best);
    }
    if (eval_count) *eval_count = evals;
    finalize(dm, cs);
    return cs;
}

Coreset lazy_greedy_select(const DissimilarityMatrix& dm, std::size_t k,
                           std::size_t* eval_count) {
    check_budget(dm, k);
    const std::size_t n = dm.size();
    std::vector<double> coverage(n, 0.0);
    std::size_t evals = 0;

    struct Entry {
        double bound;
        std::size_t index;
        std::size_t stamp;  // round in which bound was computed
    };
    // Max-heap on (bound, then lower index first), matching the naive
    // tie-break: when bounds are exact, the lowest index surfaces first.
    auto cmp = [](const Entry& a, const Entry& b) {
        if (a.bound != b.bound) return a.bound < b.bound;
        return a.index > b.index;
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> heap(cmp);
    for (std::size_t e = 0; e < n; ++e) {
        heap.push({marginal_gain(dm, coverage, e), e, 0});
        ++evals;
    }

    Coreset cs;
    for (std::size_t step = 0; step < k; ++step) {
        // Stale bounds only overestimate (submodularity), so the first entry
        // whose bound is current is the exact argmax.
        for (;;) {
            Entry top = heap.top();
            heap.pop();
            if (top.stamp == step) {
                cs.selected.push_back(top.index);
                absorb(dm, coverage, top.index);
                break;
            }
            top.bound = marginal_gain(dm, coverage, top.index);
            ++evals;
            top.stamp = step;
            heap.push(top);
        }
    }
    if (eval_count) *eval_count = evals;
    finalize(dm, cs);
    return cs;
}

Coreset stochastic_greedy_select(const DissimilarityMatrix& dm, std::size_t k,
                                 std::size_t sample_size, Rng& rng) {
    check_budget(dm, k);
    if (sample_size < 1) throw invalid_input("select: sample_size must be positive");
    const std::size_t n = dm.size();
    std::vector<double> coverage(n, 0.0);
    std::vector<std::size_t> avail(n);
    for (std::size_t i = 0; i < n; ++i) avail[i] = i;

    Coreset cs;
    std::vector<std::size_t> sample;
    for (std::size_t step = 0; step < k; ++step) {
        const std::size_t s = std::min(sample_size, avail.size());
        // Partial Fisher-Yates; the prefix becomes this step's sample.
        for (std::size_t t = 0; t < s; ++t) {
            const std::size_t j = t + rng.below(avail.size() - t);
            std::swap(avail[t], avail[j]);
        }
        sample.assign(avail.begin(), avail.begin() + static_cast<std::ptrdiff_t>(s));
        std::sort(sample.begin(), sample.end());  // lowest-index tie-break
        std::size_t best = n, best_pos = 0;
        double best_gain = -1.0;
        for (std::size_t e : sample) {
            const double gain = marginal_gain(dm, coverage, e);
            if (gain > best_gain) {
                best_gain = gain;
                best = e;
            }
        }
        for (std::size_t t = 0; t < avail.size(); ++t)
            if (avail[t] == best) {
                best_pos = t;
                break;
            }
        avail[best_pos] = avail.back();
        avail.pop_back();
        cs.selected.push_back(best);
        absorb(dm, coverage, best);
    }
    finalize(dm, cs);
    return cs;
}

// Basis for P_S comes from Gram-Schmidt over the selected rows of J.
double projection_residual_norm(const Matrix& j, const std::vector<std::size_t>& subset) {
    const std::size_t m = j.cols;
    std::vector<std::vector<double>> basis;
    for (std::size_t r : subset) {
        if (r >= j.rows) throw invalid_input("projection_residual_norm: row index out of range");
        std::vector<double> v(j.data.begin() + static_cast<std::ptrdiff_t>(r * m),
                              j.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * m));
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) {
                double dot = 0.0;
                for (std::size_t t = 0; t < m; ++t) dot += v[t] * b[t];
                for (std::size_t t = 0; t < m; ++t) v[t] -= dot * b[t];
            }
        }
        double nrm = 0.0;
        for (double x : v) nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm > 1e-12) {
            for (double& x : v) x /= nrm;
            basis.push_back(std::move(v));
        }
    }
    // Residual of every row of J against the basis; spectral norm of the
    // stacked residuals equals ||J^T - P_S J^T||_2.
    Matrix residual(j.rows, m);
    for (std::size_t r = 0; r < j.rows; ++r) {
        std::vector<double> v(j.data.begin() + static_cast<std::ptrdiff_t>(r * m),
                              j.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * m));
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t t = 0; t < m; ++t) dot += v[t] * b[t];
            for (std::size_t t = 0; t < m; ++t) v[t] -= dot * b[t];
        }
        for (std::size_t t = 0; t < m; ++t) residual(r, t) = v[t];
    }
    return svd(residual).sigma[0];
}

std::vector<std::size_t> best_rank_k_rows_bruteforce(const Matrix& j, std::size_t k) {
    if (j.rows > 15 || k > 4)
        throw invalid_input("best_rank_k_rows_bruteforce: oracle scale is rows <= 15, k <= 4");
    if (k < 1 || k > j.rows) throw invalid_spec("best_rank_k_rows_bruteforce: k out of range");
    std::vector<std::size_t> subset(k), best_subset;
    double best_err = std::numeric_limits<double>::infinity();
    // Lexicographic combination walk; strict improvement keeps the first
    // (lexicographically smallest) argmin.
    for (std::size_t i = 0; i < k; ++i) subset[i] = i;
    for (;;) {
        const double err = projection_residual_norm(j, subset);
        if (err < best_err) {
            best_err = err;
            best_subset = subset;
        }
        bool advanced = false;
        std::size_t i = k;
        while (i-- > 0) {
            if (subset[i] < j.rows - k + i) {
                ++subset[i];
                for (std::size_t t = i + 1; t < k; ++t) subset[t] = subset[t - 1] + 1;
                advanced = true;
                break;
            }
        }
        if (!advanced) return best_subset;
    }
}

void save_coreset(const Coreset& cs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input("save_coreset: cannot open " + path);
    for (std::size_t j = 0; j < cs.selected.size(); ++j) {
        out << cs.selected[j] << ' ' << cs.weights[j] << ' ';
        const std::vector<std::size_t> members = cs.cluster_members(j);
        for (std::size_t t = 0; t < members.size(); ++t) {
            if (t) out << ',';
            out << members[t];
        }
        out << '\n';
    }
    if (!out) throw invalid_input("save_coreset: write failed for " + path);
}

Matrix weighted_jacobian(const Matrix& j_rows, const std::vector<double>& weights) {
    if (weights.size() != j_rows.rows)
        throw invalid_input("weighted_jacobian: weight count must match rows");
    for (double w : weights)
        if (!(w > 0.0)) throw invalid_input("weighted_jacobian: weights must be positive");
    Matrix out = j_rows;
    for (std::size_t i = 0; i < out.rows; ++i)
        for (std::size_t j = 0; j < out.cols; ++j) out(i, j) *= weights[i];
    return out;
}

}  // namespace crust
