#include "crust/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "crust/errors.hpp"

namespace crust {

void TrainConfig::validate() const {
    if (epochs < 1) throw invalid_spec("config: epochs must be at least 1");
    if (steps_per_epoch < 1) throw invalid_spec("config: steps_per_epoch must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw invalid_spec("config: learning_rate must be positive and finite");
    if (!(coreset_fraction > 0.0) || coreset_fraction > 1.0)
        throw invalid_spec("config: coreset_fraction must be in (0, 1]");
    if (sample_count < 1) throw invalid_spec("config: sample_count must be at least 1");
    if (!(mixup_alpha > 0.0)) throw invalid_spec("config: mixup_alpha must be positive");
    if (greedy_variant == GreedyVariant::stochastic && stochastic_sample_size < 1)
        throw invalid_spec("config: stochastic greedy needs a positive sample size");
    for (const LrPoint& p : lr_schedule) {
        // Multipliers stay in (0, 1] so the effective rate never increases.
        if (!(p.multiplier > 0.0) || p.multiplier > 1.0)
            throw invalid_spec("config: lr multipliers must be in (0, 1]");
    }
    if (forced_lambda && (!(*forced_lambda >= 0.0) || *forced_lambda > 1.0))
        throw invalid_spec("config: forced_lambda must be in [0, 1]");
}

namespace {

double effective_lr(const TrainConfig& cfg, std::size_t epoch) {
    double eta = cfg.learning_rate;
    for (const LrPoint& p : cfg.lr_schedule)
        if (p.epoch <= epoch) eta *= p.multiplier;
    return eta;
}

struct Batch {
    Matrix inputs;
    std::vector<double> labels;
    std::vector<double> weights;
};

// Sum_i w_i * grad L_i into flat, sequentially in row order; returns the
// weighted loss of the batch at the current parameters.
double weighted_gradient(const MlpModel& model, const Batch& b, std::vector<double>& flat) {
    flat.assign(model.param_count(), 0.0);
    double loss_sum = 0.0;
    const std::size_t d = b.inputs.cols;
    for (std::size_t r = 0; r < b.inputs.rows; ++r) {
        PerExampleGrad g = per_example_gradient(model, &b.inputs.data[r * d], b.labels[r]);
        const double w = b.weights[r];
        loss_sum += w * 0.5 * g.residual * g.residual;
        for (std::size_t p = 0; p < flat.size(); ++p) flat[p] += w * g.grad[p];
    }
    return loss_sum;
}

void apply_update(MlpModel& model, const std::vector<double>& flat, double eta) {
    std::size_t off = 0;
    for (Matrix& w : model.weights) {
        for (double& v : w.data) v -= eta * flat[off++];
    }
}

// Per-class selection budgets: proportional with a floor of one medoid per
// populated class, reconciled to the global budget by taking from /
// giving to the largest classes first. The floor wins over the global
// budget when they conflict (more populated classes than budget).
std::vector<std::size_t> class_budgets(const std::vector<std::vector<std::size_t>>& groups,
                                       std::size_t n, double fraction) {
    const std::size_t total =
        std::min<std::size_t>(n, std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                     fraction * static_cast<double>(n)))));
    const std::size_t C = groups.size();
    std::vector<std::size_t> k(C, 0);
    std::size_t sum = 0;
    for (std::size_t c = 0; c < C; ++c) {
        const std::size_t n_c = groups[c].size();
        if (n_c == 0) continue;
        const double share = static_cast<double>(total) * static_cast<double>(n_c) /
                             static_cast<double>(n);
        k[c] = std::min<std::size_t>(
            n_c, std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(share))));
        sum += k[c];
    }
    while (sum > total) {
        std::size_t pick = C;
        for (std::size_t c = 0; c < C; ++c) {
            if (k[c] < 2) continue;
            if (pick == C || groups[c].size() > groups[pick].size()) pick = c;
        }
        if (pick == C) break;  // every class at its floor; keep the floor
        --k[pick];
        --sum;
    }
    while (sum < total) {
        std::size_t pick = C;
        for (std::size_t c = 0; c < C; ++c) {
            if (k[c] >= groups[c].size()) continue;
            if (pick == C || groups[c].size() > groups[pick].size()) pick = c;
        }
        if (pick == C) break;  // unreachable: total <= n = sum of capacities
        ++k[pick];
        ++sum;
    }
    return k;
}

Coreset run_variant(const DissimilarityMatrix& dm, std::size_t k, const TrainConfig& cfg,
                    Rng& rng) {
    switch (cfg.greedy_variant) {
        case GreedyVariant::naive:
            return greedy_select(dm, k);
        case GreedyVariant::lazy:
            return lazy_greedy_select(dm, k);
        case GreedyVariant::stochastic:
            return stochastic_greedy_select(dm, k, cfg.stochastic_sample_size, rng);
    }
    throw invalid_spec("config: unknown greedy variant");
}

double cleanliness(const NoisyDataset& ds) {
    if (ds.size() == 0) return 0.0;
    std::size_t clean = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (!ds.noise_flags[i]) ++clean;
    return static_cast<double>(clean) / static_cast<double>(ds.size());
}

void append_batch(Batch& dst, const MixedBatch& src) {
    dst.inputs.data.insert(dst.inputs.data.end(), src.inputs.data.begin(), src.inputs.data.end());
    dst.inputs.rows += src.inputs.rows;
    dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
    dst.weights.insert(dst.weights.end(), src.weights.begin(), src.weights.end());
}

}  // namespace

double evaluate(const MlpModel& model, const NoisyDataset& ds, LabelSource source) {
    const std::size_t n = ds.size();
    if (n == 0) return 0.0;
    const std::vector<double>& labels =
        source == LabelSource::observed ? ds.y_observed : ds.y_true;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t pred =
            predict_class_of_value(forward(model, ds.x, i), ds.class_values);
        if (pred == predict_class_of_value(labels[i], ds.class_values)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

SelectionResult select_coreset(const MlpModel& model, const NoisyDataset& ds,
                               const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    if (ds.dim() != model.input_dim())
        throw invalid_input("select_coreset: dimension mismatch");
    const std::size_t n = ds.size();
    const std::size_t C = ds.num_classes();
    const bool by_label = cfg.mode == TrainMode::coreset_observed_labels ||
                          cfg.mode == TrainMode::coreset_observed_labels_mixup;

    // One model snapshot serves both the class assignment and the features;
    // nothing updates the model until selection is complete.
    std::vector<std::vector<std::size_t>> groups(C);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c =
            by_label ? predict_class_of_value(ds.y_observed[i], ds.class_values)
                     : predict_class(model, &ds.x.data[i * ds.dim()], ds.class_values);
        groups[c].push_back(i);
    }
    const std::vector<std::size_t> budgets = class_budgets(groups, n, cfg.coreset_fraction);

    SelectionResult out;
    out.combined.assignment.assign(n, 0);
    for (std::size_t c = 0; c < C; ++c) {
        if (budgets[c] == 0) continue;
        const std::vector<std::size_t>& subset = groups[c];
        GradientFeatures gf = gradient_features(model, ds, subset);
        DissimilarityMatrix dm = DissimilarityMatrix::from_features(gf.g);
        Rng class_rng = rng.split(c);
        Coreset cs = run_variant(dm, budgets[c], cfg, class_rng);

        for (std::size_t j = 0; j < cs.selected.size(); ++j) {
            out.combined.selected.push_back(subset[cs.selected[j]]);
            out.combined.weights.push_back(cs.weights[j]);
        }
        for (std::size_t i = 0; i < subset.size(); ++i)
            out.combined.assignment[subset[i]] = subset[cs.assignment[i]];
        out.combined.objective_value += cs.objective_value;

        out.class_ids.push_back(c);
        out.class_indices.push_back(subset);
        out.per_class.push_back(std::move(cs));
    }
    return out;
}

EpochOutcome crust_epoch(MlpModel& model, const NoisyDataset& ds, const TrainConfig& cfg,
                         std::size_t epoch, Rng& rng) {
    cfg.validate();
    if (ds.dim() != model.input_dim()) throw invalid_input("crust_epoch: dimension mismatch");
    const std::size_t n = ds.size();
    const double eta = effective_lr(cfg, epoch);

    EpochOutcome out;
    out.metrics.epoch = epoch;

    const bool selecting = cfg.mode != TrainMode::plain_erm && epoch >= cfg.warmup_epochs;
    const bool mixing =
        cfg.mode == TrainMode::crust || cfg.mode == TrainMode::coreset_observed_labels_mixup;

    Batch batch;
    batch.inputs.cols = ds.dim();

    if (!selecting) {
        batch.inputs = ds.x;
        batch.labels = ds.y_observed;
        batch.weights.assign(n, 1.0);
        out.metrics.coreset_label_accuracy = cleanliness(ds);
    } else {
        Rng select_rng = rng.split(1);
        Rng mix_rng = rng.split(2);
        SelectionResult sel = select_coreset(model, ds, cfg, select_rng);

        for (std::size_t entry = 0; entry < sel.per_class.size(); ++entry) {
            const std::vector<std::size_t>& subset = sel.class_indices[entry];
            const Coreset& cs = sel.per_class[entry];
            if (mixing) {
                Rng cluster_rng = mix_rng.split(sel.class_ids[entry]);
                MixedBatch mb =
                    mix_all(ds, cs, cfg.sample_count, cfg.mixup_alpha, cluster_rng, &subset,
                            cfg.forced_lambda ? &*cfg.forced_lambda : nullptr);
                append_batch(batch, mb);
            } else {
                // Raw medoids, each standing in for its whole cluster.
                for (std::size_t j = 0; j < cs.selected.size(); ++j) {
                    const std::size_t row = subset[cs.selected[j]];
                    const double* x = &ds.x.data[row * ds.dim()];
                    batch.inputs.data.insert(batch.inputs.data.end(), x, x + ds.dim());
                    ++batch.inputs.rows;
                    batch.labels.push_back(ds.y_observed[row]);
                    batch.weights.push_back(cs.weights[j]);
                }
            }
        }

        std::size_t clean_selected = 0;
        for (std::size_t row : sel.combined.selected)
            if (!ds.noise_flags[row]) ++clean_selected;
        out.metrics.coreset_label_accuracy =
            sel.combined.selected.empty()
                ? 0.0
                : static_cast<double>(clean_selected) /
                      static_cast<double>(sel.combined.selected.size());

        out.class_indices = std::move(sel.class_indices);
        out.per_class = std::move(sel.per_class);
        out.combined = std::move(sel.combined);
    }

    std::vector<double> flat;
    for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
        const double batch_loss = weighted_gradient(model, batch, flat);
        out.metrics.training_loss = batch_loss;
        if (!(batch_loss <= divergence_loss_limit))
            throw divergence_error("training diverged: weighted loss " +
                                       std::to_string(batch_loss) + " at epoch " +
                                       std::to_string(epoch),
                                   batch_loss);
        apply_update(model, flat, eta);
    }

    std::size_t correct = 0, violations = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = forward(model, ds.x, i);
        if (std::abs(f) > 1.0) ++violations;
        if (predict_class_of_value(f, ds.class_values) ==
            predict_class_of_value(ds.y_observed[i], ds.class_values))
            ++correct;
    }
    out.metrics.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    out.metrics.output_range_violations = violations;
    return out;
}

TrainResult train(MlpModel model, const NoisyDataset& ds_train, const NoisyDataset& ds_test,
                  const TrainConfig& cfg,
                  const std::function<void(std::size_t, const MlpModel&, const EpochMetrics&)>&
                      on_epoch) {
    cfg.validate();
    Rng run_rng(cfg.seed);
    TrainResult result;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng epoch_rng = run_rng.split(epoch);
        EpochOutcome out = crust_epoch(model, ds_train, cfg, epoch, epoch_rng);
        out.metrics.test_accuracy = evaluate(model, ds_test, LabelSource::true_labels);
        result.metrics.push_back(out.metrics);
        if (on_epoch) on_epoch(epoch, model, out.metrics);
        if (epoch + 1 == cfg.epochs) result.last = std::move(out);
    }
    result.model = std::move(model);
    return result;
}

namespace {

void append_double(std::string& out, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

}  // namespace

std::string metrics_to_json_lines(const std::vector<EpochMetrics>& metrics) {
    std::string out;
    for (const EpochMetrics& m : metrics) {
        out += "{\"epoch\":" + std::to_string(m.epoch);
        out += ",\"coreset_label_accuracy\":";
        append_double(out, m.coreset_label_accuracy);
        out += ",\"train_accuracy\":";
        append_double(out, m.train_accuracy);
        out += ",\"test_accuracy\":";
        append_double(out, m.test_accuracy);
        out += ",\"training_loss\":";
        append_double(out, m.training_loss);
        out += ",\"output_range_violations\":" + std::to_string(m.output_range_violations);
        out += "}\n";
    }
    return out;
}

void write_metrics(const std::vector<EpochMetrics>& metrics, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input("write_metrics: cannot open " + path);
    const std::string body = metrics_to_json_lines(metrics);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw invalid_input("write_metrics: write failed for " + path);
}

}  // namespace crust
