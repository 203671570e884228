#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crust/config.hpp"
#include "crust/coreset.hpp"
#include "crust/data.hpp"
#include "crust/errors.hpp"
#include "crust/mixup.hpp"
#include "crust/model.hpp"
#include "crust/numerics.hpp"
#include "crust/oracle.hpp"
#include "crust/spectrum.hpp"
#include "crust/trainer.hpp"

namespace {

using namespace crust;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

const char* mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::crust: return "crust";
        case TrainMode::plain_erm: return "plain_erm";
        case TrainMode::coreset_no_mixup: return "coreset_no_mixup";
        case TrainMode::coreset_observed_labels: return "coreset_observed_labels";
        case TrainMode::coreset_observed_labels_mixup: return "coreset_observed_labels_mixup";
    }
    return "?";
}

// "_tag" goes before the extension so metrics.jsonl -> metrics_pred_mixup.jsonl.
std::string tagged(const std::string& path, const std::string& tag) {
    if (tag.empty()) return path;
    const std::size_t slash = path.find_last_of("/\\");
    const std::size_t dot = path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return path + "_" + tag;
    return path.substr(0, dot) + "_" + tag + path.substr(dot);
}

std::string join_out(const std::string& out_dir, const std::string& path) {
    if (out_dir.empty() || std::filesystem::path(path).is_absolute()) return path;
    return (std::filesystem::path(out_dir) / path).string();
}

struct Prepared {
    NoisyDataset train;
    NoisyDataset test;
};

// Generation and the held-out split share one population so the test set is
// drawn from the same clusters; noise touches the training half only.
Prepared prepare_data(const DataConfig& dc) {
    NoisyDataset full;
    if (dc.source == "synthetic") {
        SyntheticSpec spec;
        spec.n = dc.n + dc.test;
        spec.d = dc.d;
        spec.num_clusters = dc.clusters;
        spec.num_classes = dc.classes;
        spec.cluster_separation = dc.separation;
        spec.within_cluster_std = dc.std_dev;
        spec.seed = dc.seed;
        full = generate_clusterable(spec);
    } else {
        if (!std::filesystem::exists(dc.path))
            throw invalid_input("dataset file does not exist: " + dc.path);
        full = load_dataset(dc.path);
        if (dc.test >= full.size())
            throw invalid_spec("config: data.test must leave at least one training example");
    }
    auto [train, test] = split_dataset(full, full.size() - dc.test);
    if (dc.noise > 0.0) {
        Rng noise_rng = Rng(dc.seed).split(0x6e6f6973);
        train = dc.noise_kind == "symmetric"
                    ? inject_symmetric_noise(train, dc.noise, noise_rng)
                    : inject_asymmetric_noise(train, dc.noise, dc.pairs, noise_rng);
    }
    return {std::move(train), std::move(test)};
}

MlpModel build_model(const ModelConfig& mc, std::size_t input_dim) {
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), mc.hidden.begin(), mc.hidden.end());
    dims.push_back(1);
    Rng rng = Rng(mc.seed).split(0x696e6974);
    return init_mlp(dims, rng, mc.init_scale);
}

void write_summary(const std::string& path, const RunConfig& cfg, std::uint64_t config_hash,
                   std::uint64_t dataset_hash, const std::string& variant,
                   const TrainResult& res) {
    const EpochMetrics& last = res.metrics.back();
    const std::size_t half = res.metrics.size() / 2;
    double late = 0.0;
    for (std::size_t i = half; i < res.metrics.size(); ++i)
        late += res.metrics[i].coreset_label_accuracy;
    late /= static_cast<double>(res.metrics.size() - half);

    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["mode"] = mode_name(cfg.train.mode);
    if (!variant.empty()) j["variant"] = variant;
    j["config_hash"] = hex16(config_hash);
    j["dataset_hash"] = hex16(dataset_hash);
    j["seed"] = cfg.train.seed;
    j["epochs"] = cfg.train.epochs;
    j["final_train_accuracy"] = last.train_accuracy;
    j["final_test_accuracy"] = last.test_accuracy;
    j["final_coreset_label_accuracy"] = last.coreset_label_accuracy;
    j["final_training_loss"] = last.training_loss;
    j["mean_late_coreset_label_accuracy"] = late;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input("cannot write " + path);
    out << j.dump() << '\n';
}

void execute_run(const RunConfig& cfg, std::uint64_t config_hash, const std::string& out_dir,
                 const std::string& variant) {
    Prepared data = prepare_data(cfg.data);
    const std::uint64_t dataset_hash = dataset_content_hash(data.train);
    MlpModel model = build_model(cfg.model, data.train.dim());
    TrainResult res = train(std::move(model), data.train, data.test, cfg.train);

    auto path_for = [&](const std::string& base) { return join_out(out_dir, tagged(base, variant)); };

    const std::string metrics_path = path_for(cfg.output.metrics);
    write_metrics(res.metrics, metrics_path);
    write_summary(path_for(cfg.output.summary), cfg, config_hash, dataset_hash, variant, res);
    if (!cfg.output.checkpoint.empty()) save_model(res.model, path_for(cfg.output.checkpoint));
    if (!cfg.output.coreset.empty()) save_coreset(res.last.combined, path_for(cfg.output.coreset));

    if (cfg.spectrum.enabled) {
        Coreset cs = res.last.combined;
        if (cs.selected.empty()) {
            // No selection state (plain ERM, or warmup covered every epoch):
            // select once against the final model so the report still exists.
            TrainConfig sel_cfg = cfg.train;
            sel_cfg.mode = TrainMode::crust;
            sel_cfg.warmup_epochs = 0;
            Rng sel_rng = Rng(cfg.train.seed).split(0x73706563);
            cs = select_coreset(res.model, data.train, sel_cfg, sel_rng).combined;
        }
        SpectrumReport report = spectrum_report(res.model, data.train, cs, cfg.spectrum.cutoff);
        write_spectrum_report(report, path_for(cfg.spectrum.path));
    }

    const std::string label = variant.empty() ? std::string("run") : "run " + variant;
    std::cout << label << ": final test accuracy " << res.metrics.back().test_accuracy
              << ", metrics at " << metrics_path << "\n";
}

int cmd_run(const std::string& config_path, const std::optional<std::uint64_t>& seed,
            const std::string& out_dir) {
    const std::string text = read_file(config_path);
    RunConfig cfg = parse_config(text);
    if (seed) cfg.train.seed = *seed;
    cfg.validate();
    const std::uint64_t config_hash = fnv1a_hash(text);
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    if (!cfg.ablation_grid) {
        execute_run(cfg, config_hash, out_dir, "");
        return 0;
    }
    const std::pair<const char*, TrainMode> grid[] = {
        {"label_none", TrainMode::coreset_observed_labels},
        {"label_mixup", TrainMode::coreset_observed_labels_mixup},
        {"pred_none", TrainMode::coreset_no_mixup},
        {"pred_mixup", TrainMode::crust},
    };
    for (const auto& [tag, mode] : grid) {
        RunConfig cell = cfg;
        cell.train.mode = mode;
        execute_run(cell, config_hash, out_dir, tag);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// verify: the oracle-backed property suite, one PASS/FAIL line per property.

double max_rel_err(const std::vector<double>& got, const std::vector<double>& want) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        num = std::max(num, std::abs(got[i] - want[i]));
        den = std::max(den, std::abs(want[i]));
    }
    return num / std::max(den, 1e-12);
}

DissimilarityMatrix random_instance(Rng& rng, std::size_t n, std::size_t dim) {
    Matrix f(n, dim);
    for (double& v : f.data) v = rng.gaussian();
    return DissimilarityMatrix::from_features(f);
}

bool check_greedy_ratio() {
    Rng rng(101);
    const double ratio = 1.0 - 1.0 / std::exp(1.0);
    for (int t = 0; t < 40; ++t) {
        const std::size_t n = 5 + rng.below(8);
        const std::size_t k = std::min<std::size_t>(n, 1 + rng.below(4));
        DissimilarityMatrix dm = random_instance(rng, n, 3);
        Coreset cs = greedy_select(dm, k);
        auto [opt_set, opt_value] = oracle::exhaustive_facility_location(dm, k);
        if (cs.objective_value < ratio * opt_value - 1e-12) return false;
    }
    return true;
}

bool check_lazy_matches_naive() {
    Rng rng(102);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 4 + rng.below(37);
        const std::size_t k = std::min<std::size_t>(n, 1 + rng.below(8));
        DissimilarityMatrix dm = random_instance(rng, n, 4);
        Coreset naive = greedy_select(dm, k);
        Coreset lazy = lazy_greedy_select(dm, k);
        if (naive.selected != lazy.selected) return false;
    }
    return true;
}

bool check_submodularity() {
    Rng rng(103);
    for (int t = 0; t < 2000; ++t) {
        const std::size_t n = 12;
        DissimilarityMatrix dm = random_instance(rng, n, 3);
        std::vector<std::size_t> small, large, rest;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.below(2)) {
                large.push_back(i);
                if (rng.below(2)) small.push_back(i);
            } else {
                rest.push_back(i);
            }
        }
        if (rest.empty()) continue;
        const std::size_t e = rest[rng.below(rest.size())];
        const double fs = facility_location_value(dm, small);
        const double ft = facility_location_value(dm, large);
        auto with = [e](std::vector<std::size_t> s) {
            s.push_back(e);
            return s;
        };
        const double fse = facility_location_value(dm, with(small));
        const double fte = facility_location_value(dm, with(large));
        if ((fse - fs) < (fte - ft) - 1e-12) return false;  // diminishing returns
        if (fte < ft - 1e-12) return false;                 // monotone in e
        if (fs > ft + 1e-12) return false;                  // monotone in S <= T
    }
    return true;
}

// Shared fixture for the three gradient properties: two architectures, a
// small clusterable dataset each.
struct GradientFixture {
    MlpModel model;
    NoisyDataset ds;
};

std::vector<GradientFixture> gradient_fixtures() {
    const std::vector<std::vector<std::size_t>> archs = {{4, 8, 1}, {5, 6, 6, 1}};
    std::vector<GradientFixture> out;
    for (std::size_t a = 0; a < archs.size(); ++a) {
        SyntheticSpec spec;
        spec.n = 6;
        spec.d = archs[a].front();
        spec.num_clusters = 2;
        spec.num_classes = 2;
        spec.cluster_separation = 3.0;
        spec.within_cluster_std = 0.5;
        spec.seed = 7 + a;
        Rng rng(200 + a);
        out.push_back({init_mlp(archs[a], rng, 1.0), generate_clusterable(spec)});
    }
    return out;
}

bool check_per_example_gradients(bool perturb) {
    for (const GradientFixture& fx : gradient_fixtures()) {
        for (std::size_t i = 0; i < fx.ds.size(); ++i) {
            const double* x = &fx.ds.x.data[i * fx.ds.dim()];
            PerExampleGrad g = per_example_gradient(fx.model, x, fx.ds.y_observed[i], i);
            if (perturb) g.grad[0] += 1e-3;
            std::vector<double> fd =
                oracle::finite_difference_gradient(fx.model, x, fx.ds.y_observed[i], 1e-6);
            if (max_rel_err(g.grad, fd) > 1e-5) return false;
        }
    }
    return true;
}

bool check_jacobian_rows() {
    for (const GradientFixture& fx : gradient_fixtures()) {
        std::vector<std::size_t> all(fx.ds.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        Matrix j = jacobian_rows(fx.model, fx.ds, all);
        for (std::size_t i = 0; i < fx.ds.size(); ++i) {
            std::vector<double> row(j.data.begin() + static_cast<std::ptrdiff_t>(i * j.cols),
                                    j.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * j.cols));
            std::vector<double> fd = oracle::finite_difference_jacobian_row(
                fx.model, &fx.ds.x.data[i * fx.ds.dim()], 1e-6);
            if (max_rel_err(row, fd) > 1e-5) return false;
        }
    }
    return true;
}

bool check_feature_gradients() {
    for (const GradientFixture& fx : gradient_fixtures()) {
        std::vector<std::size_t> all(fx.ds.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        GradientFeatures gf = gradient_features(fx.model, fx.ds, all);
        for (std::size_t i = 0; i < fx.ds.size(); ++i) {
            std::vector<double> row(gf.g.data.begin() + static_cast<std::ptrdiff_t>(i * gf.g.cols),
                                    gf.g.data.begin() +
                                        static_cast<std::ptrdiff_t>((i + 1) * gf.g.cols));
            std::vector<double> fd = oracle::finite_difference_feature_gradient(
                fx.model, &fx.ds.x.data[i * fx.ds.dim()], fx.ds.y_observed[i], 1e-6);
            if (max_rel_err(row, fd) > 1e-5) return false;
        }
    }
    return true;
}

bool check_svd_reconstruction() {
    Rng rng(104);
    for (int t = 0; t < 50; ++t) {
        const std::size_t rows = 1 + rng.below(60);
        const std::size_t cols = 1 + rng.below(60);
        Matrix a(rows, cols);
        for (double& v : a.data) v = rng.gaussian();
        SvdResult s = svd(a);
        Matrix sv(s.sigma.size(), s.vt.cols);
        for (std::size_t i = 0; i < s.sigma.size(); ++i)
            for (std::size_t j = 0; j < s.vt.cols; ++j) sv(i, j) = s.sigma[i] * s.vt(i, j);
        Matrix recon = matmul(s.u, sv);
        double err = 0.0;
        for (std::size_t i = 0; i < recon.data.size(); ++i)
            err += (recon.data[i] - a.data[i]) * (recon.data[i] - a.data[i]);
        if (std::sqrt(err) > 1e-9 * std::max(1.0, frobenius_norm(a))) return false;

        Matrix utu = matmul(transpose(s.u), s.u);
        Matrix vvt = matmul(s.vt, transpose(s.vt));
        for (std::size_t i = 0; i < utu.rows; ++i)
            for (std::size_t j = 0; j < utu.cols; ++j)
                if (std::abs(utu(i, j) - (i == j ? 1.0 : 0.0)) > 1e-9) return false;
        for (std::size_t i = 0; i < vvt.rows; ++i)
            for (std::size_t j = 0; j < vvt.cols; ++j)
                if (std::abs(vvt(i, j) - (i == j ? 1.0 : 0.0)) > 1e-9) return false;
        for (std::size_t i = 0; i + 1 < s.sigma.size(); ++i)
            if (s.sigma[i] < s.sigma[i + 1]) return false;
        if (!s.sigma.empty() && s.sigma.back() < 0.0) return false;
    }
    return true;
}

bool check_mixing_exactness() {
    Rng rng(105);
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 3 + rng.below(8);
        NoisyDataset ds;
        ds.x = Matrix(n, 3);
        for (double& v : ds.x.data) v = rng.gaussian();
        const double label = rng.below(2) ? 1.0 : -1.0;
        ds.y_observed.assign(n, label);
        ds.y_true.assign(n, label);
        ds.class_values = {-1.0, 1.0};
        ds.label_margin = 2.0;
        ds.noise_flags.assign(n, false);

        std::vector<std::size_t> members(n);
        std::iota(members.begin(), members.end(), std::size_t{0});
        Rng mix_rng = rng.split(static_cast<std::uint64_t>(t));
        MixedBatch mb =
            mix_cluster(ds, rng.below(n), members, std::min<std::size_t>(4, n - 1), 0.4, mix_rng);
        for (double y : mb.labels)
            if (y != label) return false;  // shared-label clusters mix exactly
    }
    return true;
}

int cmd_verify(bool perturb) {
    const std::pair<const char*, bool> results[] = {
        {"greedy_approximation_ratio", check_greedy_ratio()},
        {"lazy_matches_naive", check_lazy_matches_naive()},
        {"submodularity_monotonicity", check_submodularity()},
        {"per_example_gradients", check_per_example_gradients(perturb)},
        {"jacobian_rows", check_jacobian_rows()},
        {"feature_gradients", check_feature_gradients()},
        {"svd_reconstruction", check_svd_reconstruction()},
        {"mixing_exactness", check_mixing_exactness()},
    };
    bool all_ok = true;
    for (const auto& [name, ok] : results) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
        all_ok = all_ok && ok;
    }
    return all_ok ? 0 : 1;
}

int cmd_spectrum(const std::string& checkpoint, const std::string& data_path, std::size_t K,
                 double fraction, const std::string& out_path) {
    MlpModel model = load_model(checkpoint);
    NoisyDataset ds = load_dataset(data_path);
    TrainConfig sel_cfg;
    sel_cfg.mode = TrainMode::crust;
    sel_cfg.coreset_fraction = fraction;
    sel_cfg.learning_rate = 1.0;  // selection never steps; validate needs it positive
    Rng rng(0);
    Coreset cs = select_coreset(model, ds, sel_cfg, rng).combined;
    SpectrumReport report = spectrum_report(model, ds, cs, K);
    write_spectrum_report(report, out_path);
    std::cout << "wrote spectrum report to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "crust: coreset selection for robust training on noisy labels.\n"
        "Thread count comes from CRUST_THREADS (default: hardware concurrency)."};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    CLI::App* run = app.add_subcommand("run", "execute a training manifest");
    run->add_option("--config", config_path, "manifest file")->required();
    run->add_option("--seed", seed, "override train.seed");
    run->add_option("--out", out_dir, "directory for outputs (created if missing)");

    bool perturb = false;
    CLI::App* verify = app.add_subcommand("verify", "run the oracle-backed property suite");
    verify->add_flag("--perturb-gradient", perturb,
                     "fault-injection hook: corrupt one gradient component");

    std::string checkpoint_path, data_path, spectrum_out = "spectrum.json";
    std::size_t cutoff = 0;
    double fraction = 0.5;
    CLI::App* spectrum =
        app.add_subcommand("spectrum", "analyze a checkpoint's Jacobian spectrum");
    spectrum->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    spectrum->add_option("--data", data_path, "dataset file")->required();
    spectrum->add_option("--K", cutoff, "information-space cutoff rank")->required();
    spectrum->add_option("--fraction", fraction, "coreset fraction for the report");
    spectrum->add_option("--out", spectrum_out, "report path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, seed, out_dir);
        if (verify->parsed()) return cmd_verify(perturb);
        return cmd_spectrum(checkpoint_path, data_path, cutoff, fraction, spectrum_out);
    } catch (const parse_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const invalid_spec& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const invalid_input& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const divergence_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
