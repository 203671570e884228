#include "crust/spectrum.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "crust/errors.hpp"

namespace crust {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double norm(const std::vector<double>& v) {
    return std::sqrt(dot(v.data(), v.data(), v.size()));
}

// Extend `rows` (orthonormal, length dim each) with `extra` more orthonormal
// vectors. Candidates are standard basis vectors, most-independent first, so
// the completion is deterministic.
void complete_rows(Matrix& rows, std::size_t extra) {
    const std::size_t dim = rows.cols;
    for (std::size_t added = 0; added < extra; ++added) {
        std::size_t pick = 0;
        double best_resid = -1.0;
        for (std::size_t idx = 0; idx < dim; ++idx) {
            double proj = 0.0;
            for (std::size_t b = 0; b < rows.rows; ++b) {
                const double c = rows(b, idx);
                proj += c * c;
            }
            const double resid = 1.0 - proj;
            if (resid > best_resid) {
                best_resid = resid;
                pick = idx;
            }
        }
        std::vector<double> w(dim, 0.0);
        w[pick] = 1.0;
        // Two Gram-Schmidt passes keep the result orthonormal at working
        // precision even when the chosen candidate is barely independent.
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t b = 0; b < rows.rows; ++b) {
                const double c = dot(w.data(), &rows.data[b * dim], dim);
                for (std::size_t i = 0; i < dim; ++i) w[i] -= c * rows(b, i);
            }
        }
        const double nw = norm(w);
        if (nw == 0.0) throw invalid_input("split_spectrum: cannot complete basis");
        rows.data.insert(rows.data.end(), w.begin(), w.end());
        ++rows.rows;
        for (std::size_t i = 0; i < dim; ++i) rows(rows.rows - 1, i) /= nw;
    }
}

std::optional<double> alignment(const SubspaceSplit& split, const std::vector<double>& v) {
    const double nv = norm(v);
    if (nv == 0.0) return std::nullopt;
    const double np = norm(project_info(split, v));
    return std::min(1.0, np / nv);
}

std::vector<double> gather(const std::vector<double>& v, const std::vector<std::size_t>& idx) {
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
    return out;
}

}  // namespace

SubspaceSplit split_spectrum(const Matrix& j, std::size_t K) {
    if (K < 1 || K > j.rows) throw invalid_spec("split_spectrum: K must be in [1, rows]");
    SvdResult s = svd(j);
    const std::size_t n = j.rows;
    const std::size_t r = s.sigma.size();

    SubspaceSplit split;
    split.cutoff_rank = K;
    split.sigma = std::move(s.sigma);
    split.degenerate_cutoff =
        K < r && split.sigma[K - 1] - split.sigma[K] <=
                     1e-9 * std::max(1.0, split.sigma[0]);

    const std::size_t computed = std::min(K, r);
    split.basis_info = Matrix(computed, n);
    for (std::size_t c = 0; c < computed; ++c)
        for (std::size_t i = 0; i < n; ++i) split.basis_info(c, i) = s.u(i, c);
    if (K > r) complete_rows(split.basis_info, K - r);

    if (K < r) {
        split.basis_nuisance = Matrix(r - K, n);
        for (std::size_t c = K; c < r; ++c)
            for (std::size_t i = 0; i < n; ++i) split.basis_nuisance(c - K, i) = s.u(i, c);
    }
    return split;
}

std::vector<double> project_info(const SubspaceSplit& split, const std::vector<double>& v) {
    const std::size_t n = split.basis_info.cols;
    if (v.size() != n) throw invalid_input("project_info: dimension mismatch");
    std::vector<double> out(n, 0.0);
    for (std::size_t b = 0; b < split.basis_info.rows; ++b) {
        const double* row = &split.basis_info.data[b * n];
        const double c = dot(v.data(), row, n);
        for (std::size_t i = 0; i < n; ++i) out[i] += c * row[i];
    }
    return out;
}

std::vector<double> project_nuisance(const SubspaceSplit& split, const std::vector<double>& v) {
    std::vector<double> out = project_info(split, v);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - out[i];
    return out;
}

ClusterSubspace cluster_subspace(const Coreset& cs, std::size_t K_main,
                                 const DissimilarityMatrix& dm) {
    const std::size_t k = cs.selected.size();
    if (K_main < 1 || K_main > k)
        throw invalid_spec("cluster_subspace: K_main must be in [1, |S|]");
    for (std::size_t g : cs.selected)
        if (g >= dm.size()) throw invalid_input("cluster_subspace: selection outside matrix");

    ClusterSubspace out;
    std::vector<std::vector<std::size_t>> cells(K_main);
    for (std::size_t p = 0; p < k; ++p) {
        std::size_t best = 0;
        double best_d = dm.d(cs.selected[p], cs.selected[0]);
        for (std::size_t l = 1; l < K_main; ++l) {
            const double d = dm.d(cs.selected[p], cs.selected[l]);
            if (d < best_d) {
                best_d = d;
                best = l;
            }
        }
        cells[best].push_back(p);
    }

    for (auto& cell : cells) {
        if (cell.empty()) {
            out.dropped_empty_cell = true;
            continue;
        }
        out.partition.push_back(std::move(cell));
    }
    out.basis = Matrix(out.partition.size(), k);
    for (std::size_t l = 0; l < out.partition.size(); ++l) {
        const double value = 1.0 / std::sqrt(static_cast<double>(out.partition[l].size()));
        for (std::size_t p : out.partition[l]) out.basis(l, p) = value;
    }
    return out;
}

SpectrumReport spectrum_report(const MlpModel& model, const NoisyDataset& ds, const Coreset& cs,
                               std::size_t K) {
    const std::size_t n = ds.size();
    const std::size_t k = cs.selected.size();
    if (k == 0) throw invalid_input("spectrum_report: empty selection");
    if (K < 1 || K > k) throw invalid_spec("spectrum_report: K must be in [1, |S|]");
    if (cs.weights.size() != k)
        throw invalid_input("spectrum_report: weights misaligned with selection");
    for (std::size_t g : cs.selected)
        if (g >= n) throw invalid_input("spectrum_report: selection outside dataset");

    std::vector<std::size_t> everything(n);
    std::iota(everything.begin(), everything.end(), 0);
    const Matrix j_full = jacobian_rows(model, ds, everything);
    const Matrix j_core = jacobian_rows(model, ds, cs.selected);
    std::vector<double> sqrt_w(k);
    for (std::size_t i = 0; i < k; ++i) sqrt_w[i] = std::sqrt(cs.weights[i]);
    const Matrix j_weighted = weighted_jacobian(j_core, sqrt_w);

    const SubspaceSplit split_full = split_spectrum(j_full, K);
    const SubspaceSplit split_core = split_spectrum(j_core, K);

    SpectrumReport rep;
    rep.cutoff_rank = K;
    rep.dataset_size = n;
    rep.coreset_size = k;
    rep.sigma_full = split_full.sigma;
    rep.sigma_coreset = split_core.sigma;
    rep.sigma_weighted = svd(j_weighted).sigma;
    rep.degenerate_cutoff = split_full.degenerate_cutoff || split_core.degenerate_cutoff;

    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i) e[i] = ds.y_observed[i] - ds.y_true[i];
    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) resid[i] = forward(model, ds.x, i) - ds.y_observed[i];

    rep.alignment_labels = alignment(split_full, ds.y_observed).value_or(0.0);
    rep.alignment_true_labels = alignment(split_full, ds.y_true).value_or(0.0);
    rep.alignment_residual = alignment(split_full, resid);
    rep.alignment_noise = alignment(split_full, e);

    rep.nuisance_ratio_full =
        norm(project_nuisance(split_full, ds.y_observed)) / std::sqrt(static_cast<double>(n));
    const std::vector<double> y_sel = gather(ds.y_observed, cs.selected);
    rep.nuisance_ratio_coreset =
        norm(project_nuisance(split_core, y_sel)) / std::sqrt(static_cast<double>(k));

    rep.coreset_true_alignment =
        alignment(split_core, gather(ds.y_true, cs.selected)).value_or(0.0);
    rep.coreset_noise_alignment = alignment(split_core, gather(e, cs.selected));
    rep.label_noise_margin =
        rep.coreset_true_alignment - rep.coreset_noise_alignment.value_or(0.0);

    std::size_t noisy = 0;
    for (std::size_t g : cs.selected)
        if (ds.noise_flags[g]) ++noisy;
    rep.coreset_noise_fraction = static_cast<double>(noisy) / static_cast<double>(k);

    const double r_min = *std::min_element(cs.weights.begin(), cs.weights.end());
    const double r_max = *std::max_element(cs.weights.begin(), cs.weights.end());
    rep.alpha = std::sqrt(r_min) * rep.sigma_coreset.back();
    rep.epsilon = std::abs(std::sqrt(r_max) * rep.sigma_coreset.front() - rep.sigma_full.front());
    rep.beta = rep.sigma_full.front() + rep.epsilon;
    rep.implied_eta = rep.beta > 0.0 ? 1.0 / (2.0 * rep.beta * rep.beta) : 0.0;

    const double lo = std::sqrt(r_min) * rep.sigma_coreset.back();
    const double hi = std::sqrt(r_max) * rep.sigma_coreset.front();
    const double tol = 1e-9 * std::max(1.0, hi);
    rep.sandwich_lower_ok = true;
    rep.sandwich_upper_ok = true;
    for (double s : rep.sigma_weighted) {
        if (s < lo - tol) rep.sandwich_lower_ok = false;
        if (s > hi + tol) rep.sandwich_upper_ok = false;
    }

    // Medoid-cluster subspace over the selection, using the same gradient
    // dissimilarity the selection itself would see at this snapshot. The
    // positional view keeps cell indices aligned with selection order.
    GradientFeatures gf = gradient_features(model, ds, cs.selected);
    DissimilarityMatrix dm_sel = DissimilarityMatrix::from_features(gf.g);
    Coreset positional;
    positional.selected.resize(k);
    std::iota(positional.selected.begin(), positional.selected.end(), 0);
    ClusterSubspace clusters = cluster_subspace(positional, K, dm_sel);
    rep.dropped_empty_cell = clusters.dropped_empty_cell;

    // Principal angles via the SVD of B_info * B_cluster^T.
    Matrix cross = matmul(split_core.basis_info, transpose(clusters.basis));
    SvdResult cross_svd = svd(cross);
    for (double c : cross_svd.sigma)
        rep.principal_angles.push_back(std::acos(std::clamp(c, 0.0, 1.0)));
    return rep;
}

namespace {

void append_double(std::string& out, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

void append_array(std::string& out, const std::vector<double>& v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        append_double(out, v[i]);
    }
    out += ']';
}

void append_optional(std::string& out, const std::optional<double>& v) {
    if (v)
        append_double(out, *v);
    else
        out += "null";
}

}  // namespace

std::string spectrum_report_to_json(const SpectrumReport& rep) {
    std::string out = "{";
    out += "\"cutoff_rank\":" + std::to_string(rep.cutoff_rank);
    out += ",\"dataset_size\":" + std::to_string(rep.dataset_size);
    out += ",\"coreset_size\":" + std::to_string(rep.coreset_size);
    out += ",\"sigma_full\":";
    append_array(out, rep.sigma_full);
    out += ",\"sigma_coreset\":";
    append_array(out, rep.sigma_coreset);
    out += ",\"sigma_weighted\":";
    append_array(out, rep.sigma_weighted);
    out += ",\"alignment_labels\":";
    append_double(out, rep.alignment_labels);
    out += ",\"alignment_true_labels\":";
    append_double(out, rep.alignment_true_labels);
    out += ",\"alignment_residual\":";
    append_optional(out, rep.alignment_residual);
    out += ",\"alignment_noise\":";
    append_optional(out, rep.alignment_noise);
    out += ",\"nuisance_ratio_full\":";
    append_double(out, rep.nuisance_ratio_full);
    out += ",\"nuisance_ratio_coreset\":";
    append_double(out, rep.nuisance_ratio_coreset);
    out += ",\"coreset_true_alignment\":";
    append_double(out, rep.coreset_true_alignment);
    out += ",\"coreset_noise_alignment\":";
    append_optional(out, rep.coreset_noise_alignment);
    out += ",\"label_noise_margin\":";
    append_double(out, rep.label_noise_margin);
    out += ",\"coreset_noise_fraction\":";
    append_double(out, rep.coreset_noise_fraction);
    out += ",\"alpha\":";
    append_double(out, rep.alpha);
    out += ",\"epsilon\":";
    append_double(out, rep.epsilon);
    out += ",\"beta\":";
    append_double(out, rep.beta);
    out += ",\"implied_eta\":";
    append_double(out, rep.implied_eta);
    out += ",\"sandwich_lower_ok\":";
    out += rep.sandwich_lower_ok ? "true" : "false";
    out += ",\"sandwich_upper_ok\":";
    out += rep.sandwich_upper_ok ? "true" : "false";
    out += ",\"degenerate_cutoff\":";
    out += rep.degenerate_cutoff ? "true" : "false";
    out += ",\"dropped_empty_cell\":";
    out += rep.dropped_empty_cell ? "true" : "false";
    out += ",\"principal_angles\":";
    append_array(out, rep.principal_angles);
    out += "}\n";
    return out;
}

void write_spectrum_report(const SpectrumReport& rep, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input("write_spectrum_report: cannot open " + path);
    const std::string body = spectrum_report_to_json(rep);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw invalid_input("write_spectrum_report: write failed for " + path);
}

}  // namespace crust
