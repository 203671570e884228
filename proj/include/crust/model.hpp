#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crust/data.hpp"
#include "crust/numerics.hpp"

namespace crust {

// Fully-connected scalar-output network: tanh on hidden layers, identity on
// the output. Outputs are NOT clamped to [-1, 1]; range violations are a
// diagnostic the trainer counts, because clamping would zero the very
// gradients the selection step feeds on.
struct MlpModel {
    std::vector<std::size_t> layer_dims;  // [d_0, d_1, ..., d_L = 1]
    std::vector<Matrix> weights;          // weights[l]: d_{l+1} x d_l

    std::size_t depth() const { return weights.size(); }
    std::size_t input_dim() const { return layer_dims.front(); }
    // Total parameter count m.
    std::size_t param_count() const;
};

struct PerExampleGrad {
    std::size_t index = 0;
    std::vector<double> grad;  // flat, length m; layer order, row-major per layer
    double residual = 0.0;     // r_i = f(W, x_i) - y_i
};

// Loss gradient w.r.t. the input of the last layer, one row per subset
// element; dimension d_{L-1}. For this architecture the chain stops at
// g_i = r_i * (W^L)^T.
struct GradientFeatures {
    Matrix g;                          // |subset| x d_{L-1}
    std::vector<double> residuals;     // aligned with rows
    std::vector<std::size_t> indices;  // dataset indices, aligned with rows
};

// Entries i.i.d. Gaussian(0, scale^2 / fan_in); deterministic per rng state.
// layer_dims must end in 1 and have at least one layer.
MlpModel init_mlp(const std::vector<std::size_t>& layer_dims, Rng& rng, double scale);

double forward(const MlpModel& model, const double* x);
double forward(const MlpModel& model, const Matrix& xs, std::size_t row);

// 1/2 sum of squared residuals over the subset. Empty subsets are worth 0;
// the flag (when given) reports that degenerate call.
double loss(const MlpModel& model, const NoisyDataset& ds, const std::vector<std::size_t>& subset,
            bool* empty_warning = nullptr);

PerExampleGrad per_example_gradient(const MlpModel& model, const double* x, double y,
                                    std::size_t index = 0);

// Row i = df(W, x_i)/dW flattened in the PerExampleGrad order. Refuses with
// resource_error when |subset| * m would exceed the memory budget.
Matrix jacobian_rows(const MlpModel& model, const NoisyDataset& ds,
                     const std::vector<std::size_t>& subset);

constexpr std::size_t jacobian_memory_budget_bytes = 1ull << 29;  // 512 MiB

GradientFeatures gradient_features(const MlpModel& model, const NoisyDataset& ds,
                                   const std::vector<std::size_t>& subset);

// argmin_c |f(W,x) - nu_c|, ties toward the lower class index.
std::size_t predict_class(const MlpModel& model, const double* x,
                          const std::vector<double>& class_values);
std::size_t predict_class_of_value(double f, const std::vector<double>& class_values);

// Text checkpoint: layer dims + activation header, then one line per weight
// matrix row. Exact round-trip (shortest round-trip decimals).
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace crust
