#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "crust/model.hpp"
#include "crust/oracle.hpp"

using namespace crust;

namespace {

// Max absolute deviation normalized by the largest reference entry. Robust
// where individual components pass through zero.
double max_rel_err(const std::vector<double>& got, const std::vector<double>& want) {
    REQUIRE(got.size() == want.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        num = std::max(num, std::abs(got[i] - want[i]));
        den = std::max(den, std::abs(want[i]));
    }
    return num / std::max(den, 1e-12);
}

// Minimal dataset: given inputs and labels, classes from the sorted distinct
// label values.
NoisyDataset make_dataset(Matrix x, std::vector<double> y,
                          std::vector<double> class_values) {
    NoisyDataset ds;
    ds.x = std::move(x);
    ds.y_observed = y;
    ds.y_true = std::move(y);
    ds.class_values = std::move(class_values);
    ds.label_margin = ds.class_values.size() > 1
                          ? ds.class_values[1] - ds.class_values[0]
                          : 2.0;
    ds.noise_flags.assign(ds.y_observed.size(), false);
    return ds;
}

NoisyDataset random_dataset(std::size_t n, std::size_t d, Rng& rng) {
    Matrix x(n, d);
    for (auto& v : x.data) v = rng.gaussian();
    std::vector<double> y(n);
    for (auto& v : y) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return make_dataset(std::move(x), std::move(y), {-1.0, 1.0});
}

// Hidden-stack activations a^{L-1} for one example, by hand.
std::vector<double> last_layer_input(const MlpModel& model, const double* x) {
    std::vector<double> a(x, x + model.input_dim());
    for (std::size_t l = 0; l + 1 < model.depth(); ++l) {
        const Matrix& w = model.weights[l];
        std::vector<double> next(w.rows);
        for (std::size_t i = 0; i < w.rows; ++i) {
            double z = 0.0;
            for (std::size_t j = 0; j < w.cols; ++j) z += w(i, j) * a[j];
            next[i] = std::tanh(z);
        }
        a = std::move(next);
    }
    return a;
}

const std::vector<std::vector<std::size_t>> kArchMatrix = {
    {6, 4, 1}, {6, 16, 1}, {6, 4, 4, 1}, {6, 16, 16, 1}};

}  // namespace

TEST_CASE("init rejects bad architectures and honors scale") {
    Rng rng(1);
    CHECK_THROWS_AS(init_mlp({4, 8, 2}, rng, 1.0), invalid_spec);
    CHECK_THROWS_AS(init_mlp({4}, rng, 1.0), invalid_spec);
    CHECK_THROWS_AS(init_mlp({4, 0, 1}, rng, 1.0), invalid_spec);
    CHECK_THROWS_AS(init_mlp({4, 8, 1}, rng, -1.0), invalid_spec);

    MlpModel zero = init_mlp({4, 8, 1}, rng, 0.0);
    for (const Matrix& w : zero.weights)
        for (double v : w.data) CHECK(v == 0.0);
    const double x[4] = {1.0, -2.0, 3.0, 0.5};
    CHECK(forward(zero, x) == 0.0);
    CHECK(zero.param_count() == 4 * 8 + 8);
}

TEST_CASE("init is deterministic per seed") {
    Rng a(9), b(9);
    MlpModel ma = init_mlp({5, 7, 1}, a, 0.8);
    MlpModel mb = init_mlp({5, 7, 1}, b, 0.8);
    for (std::size_t l = 0; l < ma.weights.size(); ++l)
        CHECK(ma.weights[l].data == mb.weights[l].data);
}

TEST_CASE("init weight variance tracks scale^2/fan_in") {
    // [4,8,1], scale=1: layer-0 variance should be near 1/4, layer-1 near
    // 1/8; average over 10 inits and allow 20%.
    double sum_sq0 = 0.0, sum_sq1 = 0.0;
    std::size_t n0 = 0, n1 = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        MlpModel m = init_mlp({4, 8, 1}, rng, 1.0);
        for (double v : m.weights[0].data) sum_sq0 += v * v;
        for (double v : m.weights[1].data) sum_sq1 += v * v;
        n0 += m.weights[0].data.size();
        n1 += m.weights[1].data.size();
    }
    CHECK(sum_sq0 / static_cast<double>(n0) == doctest::Approx(0.25).epsilon(0.2));
    CHECK(sum_sq1 / static_cast<double>(n1) == doctest::Approx(0.125).epsilon(0.2));
}

TEST_CASE("single-layer forward is the linear model") {
    MlpModel m;
    m.layer_dims = {3, 1};
    Matrix w(1, 3);
    w(0, 0) = 0.5;
    w(0, 1) = -1.0;
    w(0, 2) = 2.0;
    m.weights = {w};
    const double x[3] = {2.0, 3.0, 1.0};
    CHECK(forward(m, x) == doctest::Approx(0.5 * 2 - 3 + 2).epsilon(1e-15));
}

TEST_CASE("forward is equivariant to consistent input permutations") {
    Rng rng(4);
    MlpModel m = init_mlp({5, 8, 1}, rng, 1.0);
    std::vector<double> x = {0.3, -1.2, 0.7, 2.0, -0.4};
    const double base = forward(m, x.data());

    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    std::vector<double> px(5);
    MlpModel pm = m;
    for (std::size_t j = 0; j < 5; ++j) {
        px[j] = x[perm[j]];
        for (std::size_t i = 0; i < pm.weights[0].rows; ++i)
            pm.weights[0](i, j) = m.weights[0](i, perm[j]);
    }
    CHECK(forward(pm, px.data()) == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("forward matrix overload checks dimensions") {
    Rng rng(5);
    MlpModel m = init_mlp({4, 3, 1}, rng, 1.0);
    Matrix xs(2, 5);
    CHECK_THROWS_AS(forward(m, xs, 0), invalid_input);
}

TEST_CASE("loss matches the closed forms and flags empty subsets") {
    Rng rng(2);
    MlpModel zero = init_mlp({3, 4, 1}, rng, 0.0);
    Matrix x(10, 3);
    for (auto& v : x.data) v = rng.gaussian();
    NoisyDataset ds = make_dataset(std::move(x), std::vector<double>(10, 1.0), {-1.0, 1.0});

    std::vector<std::size_t> all(10);
    for (std::size_t i = 0; i < 10; ++i) all[i] = i;
    bool empty = true;
    CHECK(loss(zero, ds, all, &empty) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK_FALSE(empty);

    CHECK(loss(zero, ds, {}, &empty) == 0.0);
    CHECK(empty);

    // Independent recomputation on a random model.
    MlpModel m = init_mlp({3, 4, 1}, rng, 1.0);
    double expect = 0.0;
    for (std::size_t i : all) {
        const double r = forward(m, ds.x, i) - ds.y_observed[i];
        expect += 0.5 * r * r;
    }
    CHECK(loss(m, ds, all) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("zero residual gives a zero gradient") {
    MlpModel m;
    m.layer_dims = {2, 1};
    Matrix w(1, 2);
    w(0, 0) = 1.0;
    w(0, 1) = 2.0;
    m.weights = {w};
    const double x[2] = {3.0, -1.0};
    PerExampleGrad g = per_example_gradient(m, x, 1.0);  // f = 1, y = 1
    CHECK(g.residual == 0.0);
    for (double v : g.grad) CHECK(v == 0.0);
}

TEST_CASE("linear-model gradient is residual times input") {
    MlpModel m;
    m.layer_dims = {3, 1};
    Matrix w(1, 3);
    w(0, 0) = 0.5;
    w(0, 1) = -0.5;
    w(0, 2) = 1.5;
    m.weights = {w};
    const double x[3] = {1.0, 2.0, -1.0};
    const double y = 0.25;
    PerExampleGrad g = per_example_gradient(m, x, y);
    const double r = (0.5 - 1.0 - 1.5) - y;
    CHECK(g.residual == doctest::Approx(r).epsilon(1e-15));
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(g.grad[j] == doctest::Approx(r * x[j]).epsilon(1e-15));
}

TEST_CASE("gradients match central finite differences across the architecture matrix") {
    for (const auto& dims : kArchMatrix) {
        CAPTURE(dims[1]);
        CAPTURE(dims.size());
        Rng rng(17 + dims.size() * 100 + dims[1]);
        MlpModel m = init_mlp(dims, rng, 1.0);
        for (int trial = 0; trial < 3; ++trial) {
            std::vector<double> x(dims[0]);
            for (auto& v : x) v = rng.gaussian();
            const double y = rng.uniform() < 0.5 ? -1.0 : 1.0;
            PerExampleGrad g = per_example_gradient(m, x.data(), y);
            std::vector<double> fd = oracle::finite_difference_gradient(m, x.data(), y, 1e-6);
            CHECK(max_rel_err(g.grad, fd) <= 1e-5);
        }
    }
}

TEST_CASE("jacobian rows: linear closed form, gradient consistency, FD, budget") {
    Rng rng(23);

    // Linear model: the Jacobian row is the input itself.
    MlpModel lin;
    lin.layer_dims = {4, 1};
    lin.weights = {Matrix(1, 4)};
    for (auto& v : lin.weights[0].data) v = rng.gaussian();
    NoisyDataset lds = random_dataset(6, 4, rng);
    Matrix lj = jacobian_rows(lin, lds, {0, 3, 5});
    for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t i = std::vector<std::size_t>{0, 3, 5}[k];
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(lj(k, j) == doctest::Approx(lds.x(i, j)).epsilon(1e-15));
    }

    for (const auto& dims : kArchMatrix) {
        Rng arch_rng(31 + dims.size() * 10 + dims[1]);
        MlpModel m = init_mlp(dims, arch_rng, 1.0);
        NoisyDataset ds = random_dataset(5, dims[0], arch_rng);
        std::vector<std::size_t> subset = {0, 1, 2, 3, 4};
        Matrix j = jacobian_rows(m, ds, subset);
        REQUIRE(j.rows == 5);
        REQUIRE(j.cols == m.param_count());
        for (std::size_t k = 0; k < subset.size(); ++k) {
            // Row times residual reproduces the loss gradient.
            PerExampleGrad g =
                per_example_gradient(m, &ds.x.data[subset[k] * ds.dim()], ds.y_observed[subset[k]]);
            for (std::size_t p = 0; p < j.cols; ++p)
                CHECK(std::abs(j(k, p) * g.residual - g.grad[p]) <= 1e-12);
            // Row matches finite differences of f.
            std::vector<double> fd = oracle::finite_difference_jacobian_row(
                m, &ds.x.data[subset[k] * ds.dim()], 1e-6);
            std::vector<double> row(j.data.begin() + static_cast<std::ptrdiff_t>(k * j.cols),
                                    j.data.begin() + static_cast<std::ptrdiff_t>((k + 1) * j.cols));
            CHECK(max_rel_err(row, fd) <= 1e-5);
        }
    }

    // Budget refusal: |subset| * m * 8 bytes past 512 MiB. The check fires
    // before any allocation, so oversubscribing via repeats is safe.
    Rng brng(3);
    MlpModel big = init_mlp({10, 32, 1}, brng, 1.0);  // m = 352
    NoisyDataset bds = random_dataset(4, 10, brng);
    std::vector<std::size_t> repeats(200000, 1);
    CHECK_THROWS_AS(jacobian_rows(big, bds, repeats), resource_error);
}

TEST_CASE("gradient features: closed form, FD oracle, block reassembly") {
    for (const auto& dims : kArchMatrix) {
        Rng rng(47 + dims.size() * 10 + dims[1]);
        MlpModel m = init_mlp(dims, rng, 1.0);
        NoisyDataset ds = random_dataset(6, dims[0], rng);
        std::vector<std::size_t> subset = {1, 2, 4};
        GradientFeatures gf = gradient_features(m, ds, subset);
        REQUIRE(gf.g.rows == 3);
        REQUIRE(gf.g.cols == dims[dims.size() - 2]);
        REQUIRE(gf.indices == subset);

        const Matrix& wl = m.weights.back();
        for (std::size_t k = 0; k < subset.size(); ++k) {
            const std::size_t i = subset[k];
            const double r = forward(m, ds.x, i) - ds.y_observed[i];
            CHECK(gf.residuals[k] == doctest::Approx(r).epsilon(1e-14));
            // Identity output head: the feature is the residual-scaled last
            // weight row.
            for (std::size_t j = 0; j < gf.g.cols; ++j)
                CHECK(gf.g(k, j) == doctest::Approx(r * wl(0, j)).epsilon(1e-13));
            // Finite differences w.r.t. the last layer's input vector.
            std::vector<double> fd = oracle::finite_difference_feature_gradient(
                m, &ds.x.data[i * ds.dim()], ds.y_observed[i], 1e-6);
            std::vector<double> row(gf.g.data.begin() + static_cast<std::ptrdiff_t>(k * gf.g.cols),
                                    gf.g.data.begin() +
                                        static_cast<std::ptrdiff_t>((k + 1) * gf.g.cols));
            CHECK(max_rel_err(row, fd) <= 1e-5);

            // Reassembly: recover the residual from the feature (it is
            // exactly parallel to the last weight row), pair it with the
            // cached activation, and the last-layer parameter block of the
            // full gradient must come back to 1e-12.
            double dot = 0.0, nrm = 0.0;
            for (std::size_t j = 0; j < gf.g.cols; ++j) {
                dot += gf.g(k, j) * wl(0, j);
                nrm += wl(0, j) * wl(0, j);
            }
            const double recovered_r = dot / nrm;
            std::vector<double> a = last_layer_input(m, &ds.x.data[i * ds.dim()]);
            PerExampleGrad full =
                per_example_gradient(m, &ds.x.data[i * ds.dim()], ds.y_observed[i]);
            const std::size_t last_off = full.grad.size() - wl.cols;
            for (std::size_t j = 0; j < wl.cols; ++j)
                CHECK(std::abs(recovered_r * a[j] - full.grad[last_off + j]) <= 1e-12);
        }
    }

    // Zero residuals produce zero features.
    MlpModel m;
    m.layer_dims = {2, 1};
    m.weights = {Matrix(1, 2)};
    m.weights[0](0, 0) = 1.0;
    m.weights[0](0, 1) = -1.0;
    Matrix x(1, 2);
    x(0, 0) = 1.0;
    x(0, 1) = 0.0;
    NoisyDataset ds = make_dataset(std::move(x), {1.0}, {-1.0, 1.0});  // f = 1 = y
    GradientFeatures gf = gradient_features(m, ds, {0});
    CHECK(gf.residuals[0] == 0.0);
    for (double v : gf.g.data) CHECK(v == 0.0);
}

TEST_CASE("predict_class picks the nearest class value, ties to the lower index") {
    CHECK(predict_class_of_value(0.9, {-1.0, 1.0}) == 1);
    CHECK(predict_class_of_value(0.0, {-1.0, 1.0}) == 0);
    CHECK(predict_class_of_value(-0.4, {-1.0, -0.2, 0.6}) == 1);

    // Scalar-scan oracle over random values.
    Rng rng(8);
    const std::vector<double> values = {-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0};
    for (int t = 0; t < 200; ++t) {
        const double f = 3.0 * (rng.uniform() - 0.5);
        std::size_t best = 0;
        for (std::size_t c = 1; c < values.size(); ++c)
            if (std::abs(f - values[c]) < std::abs(f - values[best])) best = c;
        CHECK(predict_class_of_value(f, values) == best);
    }

    Rng mrng(12);
    MlpModel m = init_mlp({3, 5, 1}, mrng, 1.0);
    const double x[3] = {0.2, -0.7, 1.1};
    CHECK(predict_class(m, x, values) == predict_class_of_value(forward(m, x), values));
}

TEST_CASE("checkpoint round-trips exactly and rejects malformed files") {
    Rng rng(77);
    MlpModel m = init_mlp({4, 6, 3, 1}, rng, 1.3);
    const std::string path = "test_model_ckpt.txt";
    save_model(m, path);
    MlpModel back = load_model(path);
    CHECK(back.layer_dims == m.layer_dims);
    REQUIRE(back.weights.size() == m.weights.size());
    for (std::size_t l = 0; l < m.weights.size(); ++l)
        CHECK(back.weights[l].data == m.weights[l].data);
    std::remove(path.c_str());

    const std::string bad = "test_model_bad.txt";
    {
        std::FILE* f = std::fopen(bad.c_str(), "wb");
        std::fputs("layers=2,2,1\nactivation=tanh\n1.0,nope\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_model(bad), parse_error);
    std::remove(bad.c_str());
}
