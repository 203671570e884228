#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crust/trainer.hpp"

namespace crust {

// Experiment manifest: an INI-style file with nested sections and a
// versioned schema. Parsing is total — every key is either consumed or
// rejected with its line number — so a manifest that loads is a manifest
// that runs.
struct DataConfig {
    std::string source = "synthetic";  // "synthetic" or "file"
    std::string path;                  // dataset file when source = file
    std::size_t n = 0;                 // training examples (synthetic)
    std::size_t test = 0;              // held-out examples
    std::size_t d = 0;
    std::size_t clusters = 0;
    std::size_t classes = 0;
    double separation = 0.0;
    double std_dev = 1.0;
    double noise = 0.0;                // injected on the training split only
    std::string noise_kind = "symmetric";
    std::vector<std::size_t> pairs;    // asymmetric confusion map
    std::uint64_t seed = 0;
};

struct ModelConfig {
    std::vector<std::size_t> hidden = {32};  // hidden layer widths
    double init_scale = 1.0;
    std::uint64_t seed = 0;
};

struct OutputConfig {
    std::string metrics = "metrics.jsonl";
    std::string summary = "summary.json";
    std::string checkpoint;  // empty = do not write
    std::string coreset;     // empty = do not write
};

struct SpectrumSection {
    bool enabled = false;
    std::size_t cutoff = 0;  // K
    std::string path = "spectrum.json";
};

struct RunConfig {
    int schema_version = 0;
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    // mode = ablation_grid expands into the four selection variants of the
    // label/prediction x mixup/plain grid, one summary per cell.
    bool ablation_grid = false;
    OutputConfig output;
    SpectrumSection spectrum;

    // Semantic checks beyond syntax; throws invalid_spec naming the field.
    void validate() const;
};

// Throws parse_error (with line/column) on malformed syntax, unknown or
// duplicate keys, and unparsable values.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// FNV-1a over the raw manifest bytes; the summary's config identity.
std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace crust
