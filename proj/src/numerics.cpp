#include "crust/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <thread>

namespace crust {

bool Matrix::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw invalid_input("matmul: inner dimensions differ");
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            double* crow = &c.data[i * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

namespace {

// One-sided Jacobi on the columns of a tall work matrix (m >= n). Rotations
// are accumulated into v. Column square-norms are kept incrementally using
// the exact 2x2 Gram updates and refreshed at every sweep to stop drift.
struct JacobiWork {
    std::size_t m, n;
    std::vector<double> w;  // column-major m x n
    std::vector<double> v;  // column-major n x n, accumulates right vectors

    double* col(std::size_t j) { return &w[j * m]; }
    double* vcol(std::size_t j) { return &v[j * n]; }
};

void jacobi_sweeps(JacobiWork& jw) {
    const std::size_t m = jw.m, n = jw.n;
    std::vector<double> norms(n);
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        for (std::size_t j = 0; j < n; ++j) {
            const double* c = jw.col(j);
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += c[i] * c[i];
            norms[j] = s;
        }
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double* cp = jw.col(p);
                double* cq = jw.col(q);
                double gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) gamma += cp[i] * cq[i];
                const double alpha = norms[p], beta = norms[q];
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t =
                    (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double a = cp[i], b = cq[i];
                    cp[i] = c * a - s * b;
                    cq[i] = s * a + c * b;
                }
                double* vp = jw.vcol(p);
                double* vq = jw.vcol(q);
                for (std::size_t i = 0; i < n; ++i) {
                    const double a = vp[i], b = vq[i];
                    vp[i] = c * a - s * b;
                    vq[i] = s * a + c * b;
                }
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        if (!rotated) break;
    }
}

// Orthonormal completion for columns whose singular value is (numerically)
// zero: greedily Gram-Schmidt canonical basis vectors against every other
// column. Still-empty columns contribute zero dots, so no bookkeeping is
// needed. Always succeeds because fewer than m columns are present.
void complete_basis(std::vector<double>& u, std::size_t m, std::size_t ncols,
                    const std::vector<std::size_t>& missing) {
    std::size_t next_canonical = 0;
    for (std::size_t jm : missing) {
        double* target = &u[jm * m];
        for (; next_canonical < m; ++next_canonical) {
            std::vector<double> cand(m, 0.0);
            cand[next_canonical] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t j = 0; j < ncols; ++j) {
                    if (j == jm) continue;
                    const double* cj = &u[j * m];
                    double dot = 0.0;
                    for (std::size_t i = 0; i < m; ++i) dot += cand[i] * cj[i];
                    for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * cj[i];
                }
            }
            double nrm = 0.0;
            for (double x : cand) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm > 0.5) {
                for (std::size_t i = 0; i < m; ++i) target[i] = cand[i] / nrm;
                ++next_canonical;
                break;
            }
        }
    }
}

SvdResult svd_tall(const Matrix& a) {
    const std::size_t m = a.rows, n = a.cols;
    JacobiWork jw;
    jw.m = m;
    jw.n = n;
    jw.w.assign(m * n, 0.0);
    jw.v.assign(n * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) jw.w[j * m + i] = a(i, j);
    for (std::size_t j = 0; j < n; ++j) jw.v[j * n + j] = 1.0;

    jacobi_sweeps(jw);

    std::vector<double> sig(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double* c = jw.col(j);
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += c[i] * c[i];
        sig[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sig[x] > sig[y]; });

    SvdResult r;
    r.sigma.resize(n);
    r.u = Matrix(m, n);
    r.vt = Matrix(n, n);
    // Build U column-major first, then scatter into the row-major Matrix.
    std::vector<double> ucols(m * n, 0.0);
    const double sig_max = sig[order[0]];
    const double zero_tol = sig_max * 1e-13;
    std::vector<std::size_t> zero_cols;
    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t src = order[jj];
        r.sigma[jj] = sig[src];
        if (sig[src] > zero_tol && sig[src] > 0.0) {
            const double* c = jw.col(src);
            double* uc = &ucols[jj * m];
            for (std::size_t i = 0; i < m; ++i) uc[i] = c[i] / sig[src];
        } else {
            zero_cols.push_back(jj);
        }
        for (std::size_t i = 0; i < n; ++i) r.vt(jj, i) = jw.v[src * n + i];
    }
    if (!zero_cols.empty()) complete_basis(ucols, m, n, zero_cols);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < m; ++i) r.u(i, j) = ucols[j * m + i];
    // Values below zero_tol are rotation noise; flushing them keeps
    // diag(sigma) consistent with the patched U directions.
    for (std::size_t jj : zero_cols) r.sigma[jj] = 0.0;
    return r;
}

}  // namespace

SvdResult svd(const Matrix& a) {
    if (a.rows == 0 || a.cols == 0) throw invalid_input("svd: empty matrix");
    if (!a.all_finite()) throw invalid_input("svd: non-finite entries");
    if (a.rows >= a.cols) return svd_tall(a);
    // Wide case: factor the transpose and swap the roles of U and V.
    SvdResult t = svd_tall(transpose(a));
    SvdResult r;
    r.sigma = std::move(t.sigma);
    r.u = transpose(t.vt);
    r.vt = transpose(t.u);
    return r;
}

namespace {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
    ++counter_;
    return splitmix64(splitmix64(key_) ^ splitmix64(counter_));
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw invalid_input("Rng::below: n must be positive");
    const std::uint64_t limit = n * (std::numeric_limits<std::uint64_t>::max() / n);
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r < limit) return r % n;
    }
}

double Rng::gaussian() {
    // Strictly interior uniform keeps the log finite with one draw.
    const double u1 = (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

Rng Rng::split(std::uint64_t label) const {
    return Rng(splitmix64(key_ ^ splitmix64(label ^ 0xa5a5a5a5a5a5a5a5ull)));
}

namespace {

// Marsaglia-Tsang for shape >= 1; the shape < 1 case boosts through
// Gamma(shape + 1) with the standard power-of-uniform correction.
double gamma_sample(Rng& rng, double shape) {
    if (shape < 1.0) {
        const double g = gamma_sample(rng, shape + 1.0);
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        return g * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        const double x = rng.gaussian();
        const double base = 1.0 + c * x;
        if (base <= 0.0) continue;
        const double v = base * base * base;
        const double u = rng.uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

}  // namespace

double beta_sample(Rng& rng, double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw invalid_input("beta_sample: alpha must be positive and finite");
    const double g1 = gamma_sample(rng, alpha);
    const double g2 = gamma_sample(rng, alpha);
    const double s = g1 + g2;
    if (s == 0.0) return 0.5;  // both underflowed; symmetric choice
    return g1 / s;
}

Matrix pairwise_sq_dists(const Matrix& features) {
    if (!features.all_finite()) throw invalid_input("pairwise_sq_dists: non-finite entries");
    const std::size_t n = features.rows, d = features.cols;
    Matrix out(n, n);
    parallel_for(n, [&](std::size_t i) {
        const double* ri = &features.data[i * d];
        for (std::size_t j = i + 1; j < n; ++j) {
            const double* rj = &features.data[j * d];
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = ri[k] - rj[k];
                s += diff * diff;
            }
            out(i, j) = s;
            out(j, i) = s;
        }
    });
    return out;
}

std::size_t thread_count() {
    static const std::size_t cached = [] {
        if (const char* env = std::getenv("CRUST_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v >= 1) return static_cast<std::size_t>(v);
        }
        const unsigned hc = std::thread::hardware_concurrency();
        return static_cast<std::size_t>(hc >= 1 ? hc : 1);
    }();
    return cached;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(thread_count(), n);
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace crust
