#include "crust/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "crust/errors.hpp"

namespace crust::oracle {

double naive_facility_location_value(const DissimilarityMatrix& dm,
                                     const std::vector<std::size_t>& s) {
    if (s.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < dm.size(); ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j : s) best = std::max(best, dm.d0 - dm.d(i, j));
        total += best;
    }
    return total;
}

std::pair<std::vector<std::size_t>, double> exhaustive_facility_location(
    const DissimilarityMatrix& dm, std::size_t k) {
    const std::size_t n = dm.size();
    if (n > 15 || k > 5)
        throw invalid_input("exhaustive_facility_location: oracle scale is n <= 15, k <= 5");
    if (k < 1 || k > n) throw invalid_input("exhaustive_facility_location: k out of range");
    std::vector<std::size_t> subset(k), best_subset;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) subset[i] = i;
    for (;;) {
        const double value = naive_facility_location_value(dm, subset);
        // Strict improvement keeps the first (lexicographically smallest)
        // maximizer; the walk visits subsets in lexicographic order.
        if (value > best_value) {
            best_value = value;
            best_subset = subset;
        }
        bool advanced = false;
        std::size_t i = k;
        while (i-- > 0) {
            if (subset[i] < n - k + i) {
                ++subset[i];
                for (std::size_t t = i + 1; t < k; ++t) subset[t] = subset[t - 1] + 1;
                advanced = true;
                break;
            }
        }
        if (!advanced) return {best_subset, best_value};
    }
}

namespace {

double loss_at(const MlpModel& model, const double* x, double y) {
    const double r = forward(model, x) - y;
    return 0.5 * r * r;
}

// Runs fn over a copy of the model with parameter p nudged by +-h, returning
// the central difference. Parameter order matches PerExampleGrad.
double central_difference(const MlpModel& model, std::size_t p, double h,
                          const std::function<double(const MlpModel&)>& fn) {
    MlpModel bumped = model;
    std::size_t offset = 0;
    for (auto& w : bumped.weights) {
        if (p < offset + w.data.size()) {
            double& target = w.data[p - offset];
            const double saved = target;
            target = saved + h;
            const double hi = fn(bumped);
            target = saved - h;
            const double lo = fn(bumped);
            return (hi - lo) / (2.0 * h);
        }
        offset += w.data.size();
    }
    throw invalid_input("central_difference: parameter index out of range");
}

}  // namespace

std::vector<double> finite_difference_gradient(const MlpModel& model, const double* x, double y,
                                               double h) {
    const std::size_t m = model.param_count();
    std::vector<double> grad(m);
    for (std::size_t p = 0; p < m; ++p)
        grad[p] = central_difference(model, p, h,
                                     [&](const MlpModel& b) { return loss_at(b, x, y); });
    return grad;
}

std::vector<double> finite_difference_jacobian_row(const MlpModel& model, const double* x,
                                                   double h) {
    const std::size_t m = model.param_count();
    std::vector<double> row(m);
    for (std::size_t p = 0; p < m; ++p)
        row[p] = central_difference(model, p, h, [&](const MlpModel& b) { return forward(b, x); });
    return row;
}

std::vector<double> finite_difference_feature_gradient(const MlpModel& model, const double* x,
                                                       double y, double h) {
    // Forward through the hidden stack by hand to reach the last layer's
    // input vector, then difference the loss w.r.t. that vector.
    const std::size_t depth = model.weights.size();
    std::vector<double> a(x, x + model.input_dim());
    for (std::size_t l = 0; l + 1 < depth; ++l) {
        const Matrix& w = model.weights[l];
        std::vector<double> next(w.rows);
        for (std::size_t i = 0; i < w.rows; ++i) {
            double z = 0.0;
            for (std::size_t j = 0; j < w.cols; ++j) z += w(i, j) * a[j];
            next[i] = std::tanh(z);
        }
        a = std::move(next);
    }
    const Matrix& last = model.weights.back();
    auto head_loss = [&](const std::vector<double>& v) {
        double z = 0.0;
        for (std::size_t j = 0; j < last.cols; ++j) z += last(0, j) * v[j];
        const double r = z - y;
        return 0.5 * r * r;
    };
    std::vector<double> grad(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
        std::vector<double> bumped = a;
        bumped[j] = a[j] + h;
        const double hi = head_loss(bumped);
        bumped[j] = a[j] - h;
        const double lo = head_loss(bumped);
        grad[j] = (hi - lo) / (2.0 * h);
    }
    return grad;
}

Matrix naive_feature_distances(const Matrix& features) {
    const std::size_t n = features.rows;
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double sq = 0.0;
            for (std::size_t t = 0; t < features.cols; ++t) {
                const double diff = features(i, t) - features(j, t);
                sq += diff * diff;
            }
            d(i, j) = std::sqrt(sq);
        }
    }
    return d;
}

namespace {

// Spectral norm of J^T - P_S J^T with P_S assembled from an orthonormal
// basis of the selected rows computed by SVD (rank = count of singular
// values above a relative floor).
double svd_projection_error(const Matrix& j, const std::vector<std::size_t>& subset) {
    Matrix rows(subset.size(), j.cols);
    for (std::size_t r = 0; r < subset.size(); ++r)
        for (std::size_t c = 0; c < j.cols; ++c) rows(r, c) = j(subset[r], c);
    const SvdResult rs = svd(rows);
    const double floor = rs.sigma.empty() ? 0.0 : rs.sigma[0] * 1e-12;
    std::size_t rank = 0;
    while (rank < rs.sigma.size() && rs.sigma[rank] > floor) ++rank;
    // P_S = B^T B with B the first `rank` rows of V^T; residual = J - J B^T B.
    Matrix residual = j;
    for (std::size_t r = 0; r < j.rows; ++r) {
        for (std::size_t b = 0; b < rank; ++b) {
            double dot = 0.0;
            for (std::size_t c = 0; c < j.cols; ++c) dot += j(r, c) * rs.vt(b, c);
            for (std::size_t c = 0; c < j.cols; ++c) residual(r, c) -= dot * rs.vt(b, c);
        }
    }
    const SvdResult res = svd(residual);
    return res.sigma.empty() ? 0.0 : res.sigma[0];
}

}  // namespace

std::pair<std::vector<std::size_t>, double> best_rank_k_rows_reference(const Matrix& j,
                                                                       std::size_t k) {
    if (j.rows > 15 || k > 4)
        throw invalid_input("best_rank_k_rows_reference: oracle scale is rows <= 15, k <= 4");
    if (k < 1 || k > j.rows) throw invalid_input("best_rank_k_rows_reference: k out of range");
    std::vector<std::size_t> subset(k), best_subset;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) subset[i] = i;
    for (;;) {
        const double err = svd_projection_error(j, subset);
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
        if (!advanced) return {best_subset, best_err};
    }
}

}  // namespace crust::oracle
