#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "crust/coreset.hpp"
#include "crust/data.hpp"
#include "crust/mixup.hpp"
#include "crust/model.hpp"

namespace crust {

enum class GreedyVariant { naive, lazy, stochastic };

// crust = select by predicted class + mixup. The *_observed_labels variants
// group by the (noisy) observed labels instead of predictions; the
// *_no_mixup / plain variants train on raw rows. Together they form the
// ablation grid {pred, label} x {mixup, none} plus the ERM baseline.
enum class TrainMode {
    crust,
    plain_erm,
    coreset_no_mixup,
    coreset_observed_labels,
    coreset_observed_labels_mixup,
};

struct LrPoint {
    std::size_t epoch = 0;
    double multiplier = 1.0;  // applied from this epoch on
};

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t steps_per_epoch = 1;
    double learning_rate = 0.0;
    std::vector<LrPoint> lr_schedule;
    double coreset_fraction = 1.0;  // k / n
    std::size_t sample_count = 1;   // |R_j|
    double mixup_alpha = 1.0;
    GreedyVariant greedy_variant = GreedyVariant::lazy;
    std::size_t stochastic_sample_size = 0;  // required iff greedy_variant == stochastic
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::crust;
    std::size_t warmup_epochs = 0;  // plain full-batch epochs before the first selection

    // Test hook: pins every mixup lambda (0 collapses rows onto medoids).
    std::optional<double> forced_lambda;

    void validate() const;  // throws invalid_spec with the offending field
};

struct EpochMetrics {
    std::size_t epoch = 0;
    // Fraction of selected rows whose observed label matches the truth; for
    // epochs without a selection (plain ERM, warmup) the whole dataset
    // counts as selected, so this reports dataset cleanliness.
    double coreset_label_accuracy = 0.0;
    double train_accuracy = 0.0;  // vs observed labels (the training target)
    double test_accuracy = 0.0;   // vs true labels; filled by train()
    double training_loss = 0.0;   // weighted loss of the last step's batch
    std::size_t output_range_violations = 0;  // |f(x)| > 1 over the train set
};

// Everything one epoch produced beyond the model update. class_indices[c]
// maps the class-local coreset's ground positions to dataset rows. combined
// stitches the per-class selections into one dataset-indexed coreset
// (selection order: class-major). Selection-free epochs leave all three
// empty.
struct EpochOutcome {
    EpochMetrics metrics;
    std::vector<std::vector<std::size_t>> class_indices;
    std::vector<Coreset> per_class;
    Coreset combined;
};

// Selection stage alone: group by class (predicted or observed per the
// mode), split the budget, run the configured greedy per class, and stitch
// the combined dataset-indexed coreset. class_ids names the class behind
// each per_class entry (classes with an empty group are skipped).
struct SelectionResult {
    Coreset combined;
    std::vector<std::size_t> class_ids;
    std::vector<std::vector<std::size_t>> class_indices;
    std::vector<Coreset> per_class;
};

SelectionResult select_coreset(const MlpModel& model, const NoisyDataset& ds,
                               const TrainConfig& cfg, Rng& rng);

// One selection epoch in the configured mode: classify, select per class,
// mix, and apply steps_per_epoch weighted gradient-descent updates in place.
// epoch drives the lr schedule and the warmup cutoff.
EpochOutcome crust_epoch(MlpModel& model, const NoisyDataset& ds, const TrainConfig& cfg,
                         std::size_t epoch, Rng& rng);

struct TrainResult {
    MlpModel model;
    std::vector<EpochMetrics> metrics;
    EpochOutcome last;  // selection state of the final epoch
};

// Full training loop; deterministic per cfg.seed. on_epoch (when given) runs
// after each epoch's metrics are final, e.g. for checkpointing. Throws
// divergence_error when the training loss passes 1e6.
TrainResult train(MlpModel model, const NoisyDataset& ds_train, const NoisyDataset& ds_test,
                  const TrainConfig& cfg,
                  const std::function<void(std::size_t, const MlpModel&, const EpochMetrics&)>&
                      on_epoch = nullptr);

enum class LabelSource { observed, true_labels };

// Fraction of rows whose predicted class matches the nearest-class-value
// reading of the chosen label column.
double evaluate(const MlpModel& model, const NoisyDataset& ds, LabelSource source);

constexpr double divergence_loss_limit = 1e6;

// One JSON object per line, in epoch order; shortest round-trip doubles so
// identical runs serialize identically.
void write_metrics(const std::vector<EpochMetrics>& metrics, const std::string& path);
std::string metrics_to_json_lines(const std::vector<EpochMetrics>& metrics);

}  // namespace crust
