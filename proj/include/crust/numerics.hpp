#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "crust/errors.hpp"

namespace crust {

// Dense row-major matrix of doubles. Every public operation in this module
// leaves entries finite; callers feeding NaN/Inf get invalid_input.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // rows*cols entries, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool all_finite() const;
};

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);

// Thin SVD: a = u * diag(sigma) * vt with u column-orthonormal (rows x r),
// vt row-orthonormal (r x cols), r = min(rows, cols), sigma non-increasing.
struct SvdResult {
    Matrix u;
    std::vector<double> sigma;
    Matrix vt;
};

// One-sided Jacobi. Deterministic for identical input; reconstruction error
// ||U S V^T - A||_F <= 1e-9 * max(1, ||A||_F) and orthonormality to 1e-9.
SvdResult svd(const Matrix& a);

// Counter-based deterministic RNG (SplitMix64 over key + counter). Value
// semantics: copying forks the stream at its current position. split() builds
// an independent substream keyed by a label, so parallel consumers stay
// reproducible regardless of scheduling.
struct Rng {
    explicit Rng(std::uint64_t seed) : key_(seed) {}

    std::uint64_t next_u64();
    // Uniform on [0,1) with 53 random bits.
    double uniform();
    // Uniform integer in [0, n). n = 0 is invalid.
    std::uint64_t below(std::uint64_t n);
    // Standard normal via Box-Muller; consumes exactly two uniforms per call.
    double gaussian();
    Rng split(std::uint64_t label) const;

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Sample from Beta(alpha, alpha) on [0,1]. alpha <= 0 -> invalid_input.
double beta_sample(Rng& rng, double alpha);

// n x n matrix of squared Euclidean distances between rows of features.
// Symmetric, zero diagonal, nonnegative.
Matrix pairwise_sq_dists(const Matrix& features);

// Runs fn(i) for i in [0, n) across the worker pool. Workers own disjoint
// index ranges, so writes to per-index slots need no synchronization. Thread
// count comes from CRUST_THREADS (default: hardware concurrency).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

std::size_t thread_count();

}  // namespace crust
