#include "crust/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "crust/errors.hpp"

namespace crust {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& what, const std::string& value, std::size_t line,
                            std::size_t col) {
    throw parse_error("config: expected " + what + ", got '" + value + "'", line, col);
}

std::uint64_t to_u64(const std::string& v, std::size_t line, std::size_t col) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        bad_value("an unsigned integer", v, line, col);
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        bad_value("an unsigned integer", v, line, col);
    }
}

std::size_t to_size(const std::string& v, std::size_t line, std::size_t col) {
    return static_cast<std::size_t>(to_u64(v, line, col));
}

double to_double(const std::string& v, std::size_t line, std::size_t col) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        bad_value("a number", v, line, col);
    }
    if (used != v.size()) bad_value("a number", v, line, col);
    return out;
}

bool to_bool(const std::string& v, std::size_t line, std::size_t col) {
    if (v == "true") return true;
    if (v == "false") return false;
    bad_value("true or false", v, line, col);
}

template <typename T, typename Parse>
std::vector<T> to_list(const std::string& v, std::size_t line, std::size_t col, Parse parse) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse(trim(item), line, col));
    if (out.empty()) bad_value("a comma-separated list", v, line, col);
    return out;
}

TrainMode to_mode(const std::string& v, std::size_t line, std::size_t col, bool& grid) {
    grid = false;
    if (v == "crust") return TrainMode::crust;
    if (v == "plain_erm") return TrainMode::plain_erm;
    if (v == "coreset_no_mixup") return TrainMode::coreset_no_mixup;
    if (v == "coreset_observed_labels") return TrainMode::coreset_observed_labels;
    if (v == "coreset_observed_labels_mixup") return TrainMode::coreset_observed_labels_mixup;
    if (v == "ablation_grid") {
        grid = true;
        return TrainMode::crust;
    }
    bad_value("a training mode", v, line, col);
}

GreedyVariant to_variant(const std::string& v, std::size_t line, std::size_t col) {
    if (v == "naive") return GreedyVariant::naive;
    if (v == "lazy") return GreedyVariant::lazy;
    if (v == "stochastic") return GreedyVariant::stochastic;
    bad_value("a greedy variant", v, line, col);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::vector<std::size_t> lr_epochs;
    std::vector<double> lr_multipliers;
    std::size_t lr_epochs_line = 0;

    std::string section;
    std::set<std::string> seen;
    std::istringstream stream(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(stream, raw)) {
        ++line_no;
        const std::size_t hash = raw.find('#');
        std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                throw parse_error("config: unterminated section header", line_no, 1);
            section = trim(line.substr(1, line.size() - 2));
            if (section != "data" && section != "model" && section != "train" &&
                section != "output" && section != "spectrum")
                throw parse_error("config: unknown section [" + section + "]", line_no, 1);
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw parse_error("config: expected 'key = value'", line_no, 1);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw parse_error("config: empty key", line_no, 1);
        // Column of the value text in the raw line, for error reports.
        const std::size_t vcol = value.empty() ? raw.size() + 1 : raw.find(value) + 1;
        if (value.empty() && !(section == "output"))
            throw parse_error("config: empty value for " + key, line_no, vcol);

        const std::string qualified = section + "." + key;
        if (!seen.insert(qualified).second)
            throw parse_error("config: duplicate key " + qualified, line_no, 1);

        if (section.empty()) {
            if (key == "schema_version")
                cfg.schema_version = static_cast<int>(to_size(value, line_no, vcol));
            else
                throw parse_error("config: unknown top-level key " + key, line_no, 1);
        } else if (section == "data") {
            if (key == "source")
                cfg.data.source = value;
            else if (key == "path")
                cfg.data.path = value;
            else if (key == "n")
                cfg.data.n = to_size(value, line_no, vcol);
            else if (key == "test")
                cfg.data.test = to_size(value, line_no, vcol);
            else if (key == "d")
                cfg.data.d = to_size(value, line_no, vcol);
            else if (key == "clusters")
                cfg.data.clusters = to_size(value, line_no, vcol);
            else if (key == "classes")
                cfg.data.classes = to_size(value, line_no, vcol);
            else if (key == "separation")
                cfg.data.separation = to_double(value, line_no, vcol);
            else if (key == "std")
                cfg.data.std_dev = to_double(value, line_no, vcol);
            else if (key == "noise")
                cfg.data.noise = to_double(value, line_no, vcol);
            else if (key == "noise_kind")
                cfg.data.noise_kind = value;
            else if (key == "pairs")
                cfg.data.pairs = to_list<std::size_t>(value, line_no, vcol, to_size);
            else if (key == "seed")
                cfg.data.seed = to_u64(value, line_no, vcol);
            else
                throw parse_error("config: unknown key data." + key, line_no, 1);
        } else if (section == "model") {
            if (key == "hidden")
                cfg.model.hidden = to_list<std::size_t>(value, line_no, vcol, to_size);
            else if (key == "init_scale")
                cfg.model.init_scale = to_double(value, line_no, vcol);
            else if (key == "seed")
                cfg.model.seed = to_u64(value, line_no, vcol);
            else
                throw parse_error("config: unknown key model." + key, line_no, 1);
        } else if (section == "train") {
            if (key == "mode")
                cfg.train.mode = to_mode(value, line_no, vcol, cfg.ablation_grid);
            else if (key == "epochs")
                cfg.train.epochs = to_size(value, line_no, vcol);
            else if (key == "steps_per_epoch")
                cfg.train.steps_per_epoch = to_size(value, line_no, vcol);
            else if (key == "learning_rate")
                cfg.train.learning_rate = to_double(value, line_no, vcol);
            else if (key == "lr_epochs") {
                lr_epochs = to_list<std::size_t>(value, line_no, vcol, to_size);
                lr_epochs_line = line_no;
            } else if (key == "lr_multipliers")
                lr_multipliers = to_list<double>(value, line_no, vcol, to_double);
            else if (key == "coreset_fraction")
                cfg.train.coreset_fraction = to_double(value, line_no, vcol);
            else if (key == "sample_count")
                cfg.train.sample_count = to_size(value, line_no, vcol);
            else if (key == "mixup_alpha")
                cfg.train.mixup_alpha = to_double(value, line_no, vcol);
            else if (key == "greedy")
                cfg.train.greedy_variant = to_variant(value, line_no, vcol);
            else if (key == "stochastic_sample_size")
                cfg.train.stochastic_sample_size = to_size(value, line_no, vcol);
            else if (key == "warmup_epochs")
                cfg.train.warmup_epochs = to_size(value, line_no, vcol);
            else if (key == "seed")
                cfg.train.seed = to_u64(value, line_no, vcol);
            else
                throw parse_error("config: unknown key train." + key, line_no, 1);
        } else if (section == "output") {
            if (key == "metrics")
                cfg.output.metrics = value;
            else if (key == "summary")
                cfg.output.summary = value;
            else if (key == "checkpoint")
                cfg.output.checkpoint = value;
            else if (key == "coreset")
                cfg.output.coreset = value;
            else
                throw parse_error("config: unknown key output." + key, line_no, 1);
        } else {  // spectrum
            if (key == "enabled")
                cfg.spectrum.enabled = to_bool(value, line_no, vcol);
            else if (key == "K")
                cfg.spectrum.cutoff = to_size(value, line_no, vcol);
            else if (key == "path")
                cfg.spectrum.path = value;
            else
                throw parse_error("config: unknown key spectrum." + key, line_no, 1);
        }
    }

    if (lr_epochs.size() != lr_multipliers.size())
        throw parse_error("config: lr_epochs and lr_multipliers lengths differ",
                          lr_epochs_line ? lr_epochs_line : line_no, 1);
    for (std::size_t i = 0; i < lr_epochs.size(); ++i)
        cfg.train.lr_schedule.push_back({lr_epochs[i], lr_multipliers[i]});
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

void RunConfig::validate() const {
    if (schema_version != 1)
        throw invalid_spec("config: schema_version must be 1 (got " +
                           std::to_string(schema_version) + ")");

    if (data.source == "synthetic") {
        if (data.n < 1) throw invalid_spec("config: data.n must be at least 1");
        if (data.d < 1) throw invalid_spec("config: data.d must be at least 1");
        if (data.clusters < 1) throw invalid_spec("config: data.clusters must be at least 1");
        if (data.classes < 1) throw invalid_spec("config: data.classes must be at least 1");
        if (data.clusters < data.classes)
            throw invalid_spec("config: data.clusters must be >= data.classes");
        if (!(data.separation > 0.0))
            throw invalid_spec("config: data.separation must be positive");
        if (!(data.std_dev > 0.0)) throw invalid_spec("config: data.std must be positive");
        if (!data.path.empty())
            throw invalid_spec("config: data.path is only for source = file");
    } else if (data.source == "file") {
        if (data.path.empty()) throw invalid_spec("config: data.path is required for file source");
    } else {
        throw invalid_spec("config: data.source must be synthetic or file (got " + data.source +
                           ")");
    }
    if (!(data.noise >= 0.0) || data.noise >= 1.0)
        throw invalid_spec("config: data.noise must be in [0, 1)");
    if (data.noise_kind != "symmetric" && data.noise_kind != "asymmetric")
        throw invalid_spec("config: data.noise_kind must be symmetric or asymmetric");
    if (data.noise_kind == "asymmetric") {
        if (data.pairs.size() != data.classes)
            throw invalid_spec("config: data.pairs needs one entry per class");
        for (std::size_t c = 0; c < data.pairs.size(); ++c) {
            if (data.pairs[c] >= data.classes)
                throw invalid_spec("config: data.pairs entries must be class indices");
            if (data.pairs[c] == c)
                throw invalid_spec("config: data.pairs must not map a class to itself");
        }
    } else if (!data.pairs.empty()) {
        throw invalid_spec("config: data.pairs is only for asymmetric noise");
    }

    for (std::size_t h : model.hidden)
        if (h < 1) throw invalid_spec("config: model.hidden widths must be at least 1");
    if (!(model.init_scale > 0.0) || !std::isfinite(model.init_scale))
        throw invalid_spec("config: model.init_scale must be positive and finite");

    train.validate();

    if (output.metrics.empty()) throw invalid_spec("config: output.metrics must be set");
    if (output.summary.empty()) throw invalid_spec("config: output.summary must be set");

    if (spectrum.enabled && spectrum.cutoff < 1)
        throw invalid_spec("config: spectrum.K must be at least 1 when enabled");
}

std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace crust
