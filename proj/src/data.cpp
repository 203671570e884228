#include "crust/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace crust {

double NoisyDataset::realized_noise_fraction() const {
    if (noise_flags.empty()) return 0.0;
    std::size_t flips = 0;
    for (bool f : noise_flags) flips += f ? 1 : 0;
    return static_cast<double>(flips) / static_cast<double>(noise_flags.size());
}

void NoisyDataset::validate() const {
    const std::size_t n = x.rows;
    if (y_observed.size() != n || y_true.size() != n || noise_flags.size() != n)
        throw invalid_spec("dataset: field lengths disagree with x rows");
    if (class_values.size() < 2) throw invalid_spec("dataset: need at least two class values");
    for (std::size_t c = 1; c < class_values.size(); ++c)
        if (!(class_values[c - 1] < class_values[c]))
            throw invalid_spec("dataset: class_values must be strictly increasing");
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < class_values.size(); ++r)
        for (std::size_t s = r + 1; s < class_values.size(); ++s)
            min_gap = std::min(min_gap, std::abs(class_values[r] - class_values[s]));
    if (label_margin > min_gap + 1e-15)
        throw invalid_spec("dataset: label_margin exceeds smallest class gap");
    auto is_class_value = [&](double y) {
        return std::find(class_values.begin(), class_values.end(), y) != class_values.end();
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_class_value(y_observed[i]) || !is_class_value(y_true[i]))
            throw invalid_spec("dataset: label outside class_values");
        if (noise_flags[i] != (y_observed[i] != y_true[i]))
            throw invalid_spec("dataset: noise_flags inconsistent");
    }
}

NoisyDataset generate_clusterable(const SyntheticSpec& spec) {
    if (spec.n == 0 || spec.d == 0) throw invalid_spec("generate: n and d must be positive");
    if (spec.num_classes < 2) throw invalid_spec("generate: need at least two classes");
    if (spec.num_clusters < spec.num_classes)
        throw invalid_spec("generate: K must be >= C");
    if (spec.num_clusters > spec.n) throw invalid_spec("generate: K exceeds n");
    if (!(spec.cluster_separation > 0.0))
        throw invalid_spec("generate: cluster_separation must be positive");
    if (spec.within_cluster_std < 0.0)
        throw invalid_spec("generate: within_cluster_std must be nonnegative");

    const std::size_t n = spec.n, d = spec.d, K = spec.num_clusters, C = spec.num_classes;
    Rng center_rng = Rng(spec.seed).split(0x63656e74);  // "cent"
    Rng point_rng = Rng(spec.seed).split(0x706f696e);   // "poin"
    Rng shuffle_rng = Rng(spec.seed).split(0x73687566);  // "shuf"

    // Centers drawn from N(0, sep^2 I), rejection-sampled until pairwise
    // separated. With sep-scaled draws the expected gap is sep*sqrt(2d), so
    // rejections are rare for any d >= 2.
    std::vector<std::vector<double>> centers;
    const int max_attempts = 10000 * static_cast<int>(K);
    int attempts = 0;
    while (centers.size() < K) {
        if (++attempts > max_attempts)
            throw invalid_spec("generate: could not place separated cluster centers");
        std::vector<double> cand(d);
        for (auto& v : cand) v = spec.cluster_separation * center_rng.gaussian();
        bool ok = true;
        for (const auto& c : centers) {
            double sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = cand[j] - c[j];
                sq += diff * diff;
            }
            if (sq < spec.cluster_separation * spec.cluster_separation) {
                ok = false;
                break;
            }
        }
        if (ok) centers.push_back(std::move(cand));
    }

    std::vector<double> class_values(C);
    for (std::size_t c = 0; c < C; ++c)
        class_values[c] = C == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(c) / (C - 1);

    NoisyDataset ds;
    ds.x = Matrix(n, d);
    ds.y_observed.resize(n);
    ds.y_true.resize(n);
    ds.class_values = class_values;
    ds.label_margin = 2.0 / static_cast<double>(C - 1);
    ds.noise_flags.assign(n, false);

    std::size_t row = 0;
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t count = n / K + (k < n % K ? 1 : 0);
        const double nu = class_values[k % C];
        for (std::size_t i = 0; i < count; ++i, ++row) {
            for (std::size_t j = 0; j < d; ++j)
                ds.x(row, j) = centers[k][j] + spec.within_cluster_std * point_rng.gaussian();
            ds.y_true[row] = nu;
            ds.y_observed[row] = nu;
        }
    }

    // Fisher-Yates so prefixes mix clusters.
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = shuffle_rng.below(i + 1);
        if (i == j) continue;
        for (std::size_t col = 0; col < d; ++col) std::swap(ds.x(i, col), ds.x(j, col));
        std::swap(ds.y_true[i], ds.y_true[j]);
        std::swap(ds.y_observed[i], ds.y_observed[j]);
    }
    return ds;
}

namespace {

NoisyDataset inject_noise(const NoisyDataset& ds, double ratio, Rng& rng,
                          const std::vector<std::size_t>* pair_map) {
    if (!(ratio >= 0.0) || ratio >= 1.0)
        throw invalid_spec("inject: ratio must be in [0, 1)");
    const std::size_t C = ds.class_values.size();
    if (pair_map) {
        if (pair_map->size() != C) throw invalid_spec("inject: pair_map size != C");
        for (std::size_t c = 0; c < C; ++c)
            if ((*pair_map)[c] == c || (*pair_map)[c] >= C)
                throw invalid_spec("inject: pair_map must send each class to a different class");
    }

    NoisyDataset out = ds;
    out.y_observed = out.y_true;
    std::fill(out.noise_flags.begin(), out.noise_flags.end(), false);

    for (std::size_t c = 0; c < C; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out.y_true[i] == ds.class_values[c]) members.push_back(i);
        const std::size_t flips =
            static_cast<std::size_t>(std::floor(ratio * static_cast<double>(members.size())));
        // Partial Fisher-Yates: first `flips` slots become the flip set.
        for (std::size_t t = 0; t < flips; ++t) {
            const std::size_t j = t + rng.below(members.size() - t);
            std::swap(members[t], members[j]);
            const std::size_t i = members[t];
            if (pair_map) {
                out.y_observed[i] = ds.class_values[(*pair_map)[c]];
            } else {
                // Uniform over the C-1 other classes.
                std::size_t alt = rng.below(C - 1);
                if (alt >= c) ++alt;
                out.y_observed[i] = ds.class_values[alt];
            }
            out.noise_flags[i] = true;
        }
    }
    return out;
}

}  // namespace

NoisyDataset inject_symmetric_noise(const NoisyDataset& ds, double ratio, Rng& rng) {
    return inject_noise(ds, ratio, rng, nullptr);
}

NoisyDataset inject_asymmetric_noise(const NoisyDataset& ds, double ratio,
                                     const std::vector<std::size_t>& pair_map, Rng& rng) {
    return inject_noise(ds, ratio, rng, &pair_map);
}

namespace {

void format_double(std::string& out, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

std::string serialize(const NoisyDataset& ds) {
    std::string out;
    out.reserve(ds.size() * (ds.dim() + 2) * 12);
    out += "n=" + std::to_string(ds.size()) + "\n";
    out += "d=" + std::to_string(ds.dim()) + "\n";
    out += "C=" + std::to_string(ds.num_classes()) + "\n";
    out += "class_values=";
    for (std::size_t c = 0; c < ds.class_values.size(); ++c) {
        if (c) out += ',';
        format_double(out, ds.class_values[c]);
    }
    out += "\nmargin=";
    format_double(out, ds.label_margin);
    out += '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            if (j) out += ',';
            format_double(out, ds.x(i, j));
        }
        out += ',';
        format_double(out, ds.y_observed[i]);
        out += ',';
        format_double(out, ds.y_true[i]);
        out += '\n';
    }
    return out;
}

struct LineReader {
    std::istream& in;
    std::size_t line_no = 0;
    std::string line;

    bool next() {
        if (!std::getline(in, line)) return false;
        ++line_no;
        return true;
    }
    [[noreturn]] void fail(const std::string& msg, std::size_t col) const {
        throw parse_error(msg, line_no, col);
    }
};

double parse_double_field(LineReader& r, const char* begin, const char* end, const char* line_start) {
    double v = 0.0;
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end)
        r.fail("malformed float", static_cast<std::size_t>(begin - line_start) + 1);
    return v;
}

std::size_t parse_header_count(LineReader& r, const std::string& key) {
    if (!r.next()) r.fail("unexpected end of file, wanted " + key, 1);
    const std::string prefix = key + "=";
    if (r.line.rfind(prefix, 0) != 0) r.fail("expected header " + prefix, 1);
    std::size_t v = 0;
    const char* b = r.line.data() + prefix.size();
    const char* e = r.line.data() + r.line.size();
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e) r.fail("malformed count", prefix.size() + 1);
    return v;
}

}  // namespace

void save_dataset(const NoisyDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input("save_dataset: cannot open " + path);
    const std::string body = serialize(ds);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw invalid_input("save_dataset: write failed for " + path);
}

NoisyDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input("load_dataset: cannot open " + path);
    LineReader r{in, 0, {}};

    const std::size_t n = parse_header_count(r, "n");
    const std::size_t d = parse_header_count(r, "d");
    const std::size_t C = parse_header_count(r, "C");

    if (!r.next()) r.fail("unexpected end of file, wanted class_values", 1);
    if (r.line.rfind("class_values=", 0) != 0) r.fail("expected header class_values=", 1);
    NoisyDataset ds;
    {
        const char* start = r.line.data();
        const char* p = start + 13;
        const char* end = start + r.line.size();
        while (true) {
            const char* comma = std::find(p, end, ',');
            ds.class_values.push_back(parse_double_field(r, p, comma, start));
            if (comma == end) break;
            p = comma + 1;
        }
    }
    if (ds.class_values.size() != C) r.fail("class_values count disagrees with C", 14);

    if (!r.next()) r.fail("unexpected end of file, wanted margin", 1);
    if (r.line.rfind("margin=", 0) != 0) r.fail("expected header margin=", 1);
    ds.label_margin =
        parse_double_field(r, r.line.data() + 7, r.line.data() + r.line.size(), r.line.data());

    ds.x = Matrix(n, d);
    ds.y_observed.resize(n);
    ds.y_true.resize(n);
    ds.noise_flags.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (!r.next()) r.fail("unexpected end of file in example block", 1);
        const char* start = r.line.data();
        const char* p = start;
        const char* end = start + r.line.size();
        for (std::size_t field = 0; field < d + 2; ++field) {
            const char* comma = std::find(p, end, ',');
            if (field + 1 < d + 2 && comma == end)
                r.fail("expected " + std::to_string(d + 2) + " fields",
                       static_cast<std::size_t>(p - start) + 1);
            if (field + 1 == d + 2 && comma != end)
                r.fail("trailing fields", static_cast<std::size_t>(comma - start) + 1);
            const double v = parse_double_field(r, p, comma, start);
            if (field < d) {
                ds.x(i, field) = v;
            } else {
                const bool known = std::find(ds.class_values.begin(), ds.class_values.end(), v) !=
                                   ds.class_values.end();
                if (!known)
                    r.fail("label not in class_values", static_cast<std::size_t>(p - start) + 1);
                (field == d ? ds.y_observed[i] : ds.y_true[i]) = v;
            }
            p = comma == end ? end : comma + 1;
        }
        ds.noise_flags[i] = ds.y_observed[i] != ds.y_true[i];
    }
    ds.validate();
    return ds;
}

std::pair<NoisyDataset, NoisyDataset> split_dataset(const NoisyDataset& ds, std::size_t n_head) {
    if (n_head > ds.size()) throw invalid_spec("split_dataset: n_head exceeds dataset size");
    auto take = [&](std::size_t lo, std::size_t hi) {
        NoisyDataset part;
        part.class_values = ds.class_values;
        part.label_margin = ds.label_margin;
        part.x = Matrix(hi - lo, ds.dim());
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t j = 0; j < ds.dim(); ++j) part.x(i - lo, j) = ds.x(i, j);
        part.y_observed.assign(ds.y_observed.begin() + lo, ds.y_observed.begin() + hi);
        part.y_true.assign(ds.y_true.begin() + lo, ds.y_true.begin() + hi);
        part.noise_flags.assign(ds.noise_flags.begin() + lo, ds.noise_flags.begin() + hi);
        return part;
    };
    return {take(0, n_head), take(n_head, ds.size())};
}

std::uint64_t dataset_content_hash(const NoisyDataset& ds) {
    const std::string body = serialize(ds);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char byte : body) {
        h ^= byte;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace crust
