#include "crust/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace crust {

std::size_t MlpModel::param_count() const {
    std::size_t m = 0;
    for (const Matrix& w : weights) m += w.rows * w.cols;
    return m;
}

MlpModel init_mlp(const std::vector<std::size_t>& layer_dims, Rng& rng, double scale) {
    if (layer_dims.size() < 2) throw invalid_spec("init_mlp: need at least one layer");
    if (layer_dims.back() != 1) throw invalid_spec("init_mlp: output dimension must be 1");
    for (std::size_t d : layer_dims)
        if (d == 0) throw invalid_spec("init_mlp: zero-width layer");
    if (!(scale >= 0.0) || !std::isfinite(scale))
        throw invalid_spec("init_mlp: scale must be finite and nonnegative");
    MlpModel model;
    model.layer_dims = layer_dims;
    model.weights.reserve(layer_dims.size() - 1);
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        Matrix w(layer_dims[l + 1], layer_dims[l]);
        const double sd = scale / std::sqrt(static_cast<double>(layer_dims[l]));
        for (auto& v : w.data) v = sd * rng.gaussian();
        model.weights.push_back(std::move(w));
    }
    return model;
}

namespace {

// Forward pass keeping pre-activations. activations[l] = a^l (a^0 = x),
// preacts[l] = z^{l+1} = W^{l+1} a^l before the nonlinearity.
struct ForwardTrace {
    std::vector<std::vector<double>> activations;
    std::vector<std::vector<double>> preacts;
    double output = 0.0;
};

ForwardTrace forward_trace(const MlpModel& model, const double* x) {
    ForwardTrace t;
    const std::size_t L = model.depth();
    t.activations.resize(L + 1);
    t.preacts.resize(L);
    t.activations[0].assign(x, x + model.layer_dims[0]);
    for (std::size_t l = 0; l < L; ++l) {
        const Matrix& w = model.weights[l];
        std::vector<double>& z = t.preacts[l];
        z.assign(w.rows, 0.0);
        const std::vector<double>& a = t.activations[l];
        for (std::size_t i = 0; i < w.rows; ++i) {
            const double* wrow = &w.data[i * w.cols];
            double s = 0.0;
            for (std::size_t j = 0; j < w.cols; ++j) s += wrow[j] * a[j];
            z[i] = s;
        }
        std::vector<double>& out = t.activations[l + 1];
        out.resize(w.rows);
        if (l + 1 < L) {
            for (std::size_t i = 0; i < w.rows; ++i) out[i] = std::tanh(z[i]);
        } else {
            out = z;  // identity output
        }
    }
    t.output = t.activations[L][0];
    return t;
}

// Backprop of the scalar output seeded with `seed` (1 for df/dW, residual r
// for the loss gradient). Writes the flat gradient in layer order.
void backprop_into(const MlpModel& model, const ForwardTrace& t, double seed, double* flat) {
    const std::size_t L = model.depth();
    std::vector<double> delta = {seed};  // delta^L on the identity output
    // Walk backwards; compute the block for layer l, then push delta down.
    std::vector<std::size_t> offsets(L);
    std::size_t off = 0;
    for (std::size_t l = 0; l < L; ++l) {
        offsets[l] = off;
        off += model.weights[l].rows * model.weights[l].cols;
    }
    for (std::size_t l = L; l-- > 0;) {
        const Matrix& w = model.weights[l];
        const std::vector<double>& a = t.activations[l];
        double* block = flat + offsets[l];
        for (std::size_t i = 0; i < w.rows; ++i)
            for (std::size_t j = 0; j < w.cols; ++j) block[i * w.cols + j] = delta[i] * a[j];
        if (l == 0) break;
        std::vector<double> below(w.cols, 0.0);
        for (std::size_t i = 0; i < w.rows; ++i) {
            const double di = delta[i];
            const double* wrow = &w.data[i * w.cols];
            for (std::size_t j = 0; j < w.cols; ++j) below[j] += wrow[j] * di;
        }
        // tanh'(z) = 1 - tanh(z)^2, and activations[l] already holds tanh(z).
        for (std::size_t j = 0; j < w.cols; ++j) below[j] *= 1.0 - a[j] * a[j];
        delta = std::move(below);
    }
}

}  // namespace

double forward(const MlpModel& model, const double* x) {
    const std::size_t L = model.depth();
    std::vector<double> cur(x, x + model.layer_dims[0]);
    std::vector<double> nxt;
    for (std::size_t l = 0; l < L; ++l) {
        const Matrix& w = model.weights[l];
        nxt.assign(w.rows, 0.0);
        for (std::size_t i = 0; i < w.rows; ++i) {
            const double* wrow = &w.data[i * w.cols];
            double s = 0.0;
            for (std::size_t j = 0; j < w.cols; ++j) s += wrow[j] * cur[j];
            nxt[i] = l + 1 < L ? std::tanh(s) : s;
        }
        cur.swap(nxt);
    }
    return cur[0];
}

double forward(const MlpModel& model, const Matrix& xs, std::size_t row) {
    if (xs.cols != model.input_dim()) throw invalid_input("forward: dimension mismatch");
    return forward(model, &xs.data[row * xs.cols]);
}

double loss(const MlpModel& model, const NoisyDataset& ds, const std::vector<std::size_t>& subset,
            bool* empty_warning) {
    if (empty_warning) *empty_warning = subset.empty();
    double s = 0.0;
    for (std::size_t i : subset) {
        const double r = forward(model, ds.x, i) - ds.y_observed[i];
        s += r * r;
    }
    return 0.5 * s;
}

PerExampleGrad per_example_gradient(const MlpModel& model, const double* x, double y,
                                    std::size_t index) {
    ForwardTrace t = forward_trace(model, x);
    PerExampleGrad g;
    g.index = index;
    g.residual = t.output - y;
    g.grad.assign(model.param_count(), 0.0);
    backprop_into(model, t, g.residual, g.grad.data());
    return g;
}

Matrix jacobian_rows(const MlpModel& model, const NoisyDataset& ds,
                     const std::vector<std::size_t>& subset) {
    const std::size_t m = model.param_count();
    if (subset.size() * m * sizeof(double) > jacobian_memory_budget_bytes)
        throw resource_error("jacobian_rows: |subset| x m exceeds the memory budget");
    if (ds.dim() != model.input_dim()) throw invalid_input("jacobian_rows: dimension mismatch");
    Matrix j(subset.size(), m);
    parallel_for(subset.size(), [&](std::size_t k) {
        ForwardTrace t = forward_trace(model, &ds.x.data[subset[k] * ds.dim()]);
        backprop_into(model, t, 1.0, &j.data[k * m]);
    });
    return j;
}

GradientFeatures gradient_features(const MlpModel& model, const NoisyDataset& ds,
                                   const std::vector<std::size_t>& subset) {
    if (ds.dim() != model.input_dim())
        throw invalid_input("gradient_features: dimension mismatch");
    const Matrix& wl = model.weights.back();  // 1 x d_{L-1}
    GradientFeatures out;
    out.g = Matrix(subset.size(), wl.cols);
    out.residuals.resize(subset.size());
    out.indices = subset;
    parallel_for(subset.size(), [&](std::size_t k) {
        const std::size_t i = subset[k];
        const double r = forward(model, ds.x, i) - ds.y_observed[i];
        out.residuals[k] = r;
        double* row = &out.g.data[k * wl.cols];
        for (std::size_t j = 0; j < wl.cols; ++j) row[j] = r * wl.data[j];
    });
    return out;
}

std::size_t predict_class_of_value(double f, const std::vector<double>& class_values) {
    if (class_values.empty()) throw invalid_spec("predict_class: empty class_values");
    std::size_t best = 0;
    double best_dist = std::abs(f - class_values[0]);
    for (std::size_t c = 1; c < class_values.size(); ++c) {
        const double dist = std::abs(f - class_values[c]);
        if (dist < best_dist) {
            best = c;
            best_dist = dist;
        }
    }
    return best;
}

std::size_t predict_class(const MlpModel& model, const double* x,
                          const std::vector<double>& class_values) {
    return predict_class_of_value(forward(model, x), class_values);
}

namespace {

void format_double(std::string& out, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

}  // namespace

void save_model(const MlpModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input("save_model: cannot open " + path);
    std::string body = "layers=";
    for (std::size_t i = 0; i < model.layer_dims.size(); ++i) {
        if (i) body += ',';
        body += std::to_string(model.layer_dims[i]);
    }
    body += "\nactivation=tanh\n";
    for (const Matrix& w : model.weights) {
        for (std::size_t i = 0; i < w.rows; ++i) {
            for (std::size_t j = 0; j < w.cols; ++j) {
                if (j) body += ',';
                format_double(body, w(i, j));
            }
            body += '\n';
        }
    }
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw invalid_input("save_model: write failed for " + path);
}

MlpModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input("load_model: cannot open " + path);
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() {
        if (!std::getline(in, line)) throw parse_error("unexpected end of file", line_no + 1, 1);
        ++line_no;
    };
    next_line();
    if (line.rfind("layers=", 0) != 0) throw parse_error("expected layers=", line_no, 1);
    MlpModel model;
    {
        const char* p = line.data() + 7;
        const char* end = line.data() + line.size();
        while (true) {
            std::size_t v = 0;
            const char* comma = std::find(p, end, ',');
            const auto res = std::from_chars(p, comma, v);
            if (res.ec != std::errc() || res.ptr != comma || v == 0)
                throw parse_error("malformed layer dim", line_no,
                                  static_cast<std::size_t>(p - line.data()) + 1);
            model.layer_dims.push_back(v);
            if (comma == end) break;
            p = comma + 1;
        }
    }
    if (model.layer_dims.size() < 2 || model.layer_dims.back() != 1)
        throw parse_error("invalid architecture", line_no, 8);
    next_line();
    if (line != "activation=tanh") throw parse_error("expected activation=tanh", line_no, 1);
    for (std::size_t l = 0; l + 1 < model.layer_dims.size(); ++l) {
        Matrix w(model.layer_dims[l + 1], model.layer_dims[l]);
        for (std::size_t i = 0; i < w.rows; ++i) {
            next_line();
            const char* p = line.data();
            const char* end = line.data() + line.size();
            for (std::size_t j = 0; j < w.cols; ++j) {
                const char* comma = std::find(p, end, ',');
                if (j + 1 < w.cols && comma == end)
                    throw parse_error("expected " + std::to_string(w.cols) + " entries", line_no,
                                      static_cast<std::size_t>(p - line.data()) + 1);
                if (j + 1 == w.cols && comma != end)
                    throw parse_error("trailing entries", line_no,
                                      static_cast<std::size_t>(comma - line.data()) + 1);
                double v = 0.0;
                const auto res = std::from_chars(p, comma, v);
                if (res.ec != std::errc() || res.ptr != comma)
                    throw parse_error("malformed weight", line_no,
                                      static_cast<std::size_t>(p - line.data()) + 1);
                w(i, j) = v;
                p = comma == end ? end : comma + 1;
            }
        }
        model.weights.push_back(std::move(w));
    }
    return model;
}

}  // namespace crust
