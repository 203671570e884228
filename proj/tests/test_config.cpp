#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "crust/config.hpp"
#include "crust/errors.hpp"

using namespace crust;

namespace {

const char* kFullManifest = R"(# reference manifest
schema_version = 1

[data]
source = synthetic
n = 1000
test = 500
d = 10
clusters = 4
classes = 4
separation = 6.0
std = 1.0
noise = 0.5
noise_kind = symmetric
seed = 3

[model]
hidden = 32, 16
init_scale = 0.5
seed = 4

[train]
mode = crust
epochs = 40
steps_per_epoch = 2
learning_rate = 0.001
lr_epochs = 20, 30
lr_multipliers = 0.5, 0.5
coreset_fraction = 0.5
sample_count = 1
mixup_alpha = 1.0
greedy = lazy
warmup_epochs = 1
seed = 5

[output]
metrics = metrics.jsonl
summary = summary.json
checkpoint = model.txt
coreset = coreset.txt

[spectrum]
enabled = true
K = 4
path = spectrum.json
)";

RunConfig parse_valid(const std::string& text) {
    RunConfig cfg = parse_config(text);
    cfg.validate();
    return cfg;
}

}  // namespace

TEST_CASE("a full manifest parses into every field") {
    RunConfig cfg = parse_valid(kFullManifest);
    CHECK(cfg.schema_version == 1);
    CHECK(cfg.data.source == "synthetic");
    CHECK(cfg.data.n == 1000);
    CHECK(cfg.data.test == 500);
    CHECK(cfg.data.d == 10);
    CHECK(cfg.data.clusters == 4);
    CHECK(cfg.data.classes == 4);
    CHECK(cfg.data.separation == 6.0);
    CHECK(cfg.data.std_dev == 1.0);
    CHECK(cfg.data.noise == 0.5);
    CHECK(cfg.data.noise_kind == "symmetric");
    CHECK(cfg.data.seed == 3);
    CHECK(cfg.model.hidden == std::vector<std::size_t>{32, 16});
    CHECK(cfg.model.init_scale == 0.5);
    CHECK(cfg.model.seed == 4);
    CHECK(cfg.train.mode == TrainMode::crust);
    CHECK_FALSE(cfg.ablation_grid);
    CHECK(cfg.train.epochs == 40);
    CHECK(cfg.train.steps_per_epoch == 2);
    CHECK(cfg.train.learning_rate == 0.001);
    REQUIRE(cfg.train.lr_schedule.size() == 2);
    CHECK(cfg.train.lr_schedule[0].epoch == 20);
    CHECK(cfg.train.lr_schedule[0].multiplier == 0.5);
    CHECK(cfg.train.lr_schedule[1].epoch == 30);
    CHECK(cfg.train.coreset_fraction == 0.5);
    CHECK(cfg.train.sample_count == 1);
    CHECK(cfg.train.mixup_alpha == 1.0);
    CHECK(cfg.train.greedy_variant == GreedyVariant::lazy);
    CHECK(cfg.train.warmup_epochs == 1);
    CHECK(cfg.train.seed == 5);
    CHECK(cfg.output.metrics == "metrics.jsonl");
    CHECK(cfg.output.summary == "summary.json");
    CHECK(cfg.output.checkpoint == "model.txt");
    CHECK(cfg.output.coreset == "coreset.txt");
    CHECK(cfg.spectrum.enabled);
    CHECK(cfg.spectrum.cutoff == 4);
    CHECK(cfg.spectrum.path == "spectrum.json");
}

TEST_CASE("omitted optional keys keep their defaults") {
    RunConfig cfg = parse_valid(
        "schema_version = 1\n"
        "[data]\n"
        "n = 100\ntest = 20\nd = 3\nclusters = 2\nclasses = 2\nseparation = 5.0\n"
        "[train]\n"
        "learning_rate = 0.01\n");
    CHECK(cfg.data.source == "synthetic");
    CHECK(cfg.data.noise == 0.0);
    CHECK(cfg.data.std_dev == 1.0);
    CHECK(cfg.model.hidden == std::vector<std::size_t>{32});
    CHECK(cfg.train.mode == TrainMode::crust);
    CHECK(cfg.train.epochs == 1);
    CHECK(cfg.train.coreset_fraction == 1.0);
    CHECK(cfg.train.greedy_variant == GreedyVariant::lazy);
    CHECK(cfg.output.metrics == "metrics.jsonl");
    CHECK(cfg.output.checkpoint.empty());
    CHECK_FALSE(cfg.spectrum.enabled);
}

TEST_CASE("unknown keys and sections are rejected with their line") {
    try {
        parse_config("schema_version = 1\n[data]\nbogus = 3\n");
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(e.line == 3);
        CHECK(std::string(e.what()).find("data.bogus") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("[nonsense]\n"), parse_error);
    CHECK_THROWS_AS(parse_config("stray = 1\n"), parse_error);
    CHECK_THROWS_AS(parse_config("[train\n"), parse_error);  // unterminated header
}

TEST_CASE("duplicate keys are rejected") {
    CHECK_THROWS_AS(parse_config("schema_version = 1\nschema_version = 1\n"), parse_error);
    CHECK_THROWS_AS(parse_config("[data]\nn = 1\nn = 2\n"), parse_error);
}

TEST_CASE("malformed values report line and column") {
    try {
        parse_config("[data]\nn = twelve\n");
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(e.line == 2);
        CHECK(e.column == 5);  // 'twelve' starts at column 5
    }
    CHECK_THROWS_AS(parse_config("[data]\nseparation = 1.2.3\n"), parse_error);
    CHECK_THROWS_AS(parse_config("[spectrum]\nenabled = yes\n"), parse_error);
    CHECK_THROWS_AS(parse_config("[train]\nmode = sideways\n"), parse_error);
    CHECK_THROWS_AS(parse_config("[train]\ngreedy = eager\n"), parse_error);
    CHECK_THROWS_AS(parse_config("[data]\nn\n"), parse_error);  // missing '='
    CHECK_THROWS_AS(parse_config("[data]\nn =\n"), parse_error);  // empty value
}

TEST_CASE("schedule lists must pair up") {
    CHECK_THROWS_AS(
        parse_config("[train]\nlr_epochs = 10, 20\nlr_multipliers = 0.5\n"), parse_error);
}

TEST_CASE("semantic validation names the offending field") {
    const std::string head = "schema_version = 1\n";
    const std::string data_keys =
        "n = 100\ntest = 10\nd = 3\nclusters = 2\nclasses = 2\nseparation = 5.0\n";
    const std::string tail = "[train]\nlearning_rate = 0.01\n";
    // data_extra is spliced into [data]; suffix goes after [train].
    auto manifest = [&](const std::string& data_extra, const std::string& suffix = "") {
        return head + "[data]\n" + data_keys + data_extra + tail + suffix;
    };

    CHECK_NOTHROW(parse_valid(manifest("")));

    auto expect_reject = [](const std::string& text, const char* field) {
        try {
            RunConfig cfg = parse_config(text);
            cfg.validate();
            FAIL_CHECK("expected invalid_spec for ", field);
        } catch (const invalid_spec& e) {
            CHECK(std::string(e.what()).find(field) != std::string::npos);
        }
    };

    expect_reject("schema_version = 2\n[data]\n" + data_keys + tail, "schema_version");
    expect_reject("[data]\n" + data_keys + tail, "schema_version");  // missing entirely
    expect_reject(head + "[data]\nn = 0\ntest = 1\nd = 3\nclusters = 2\nclasses = 2\n"
                         "separation = 5.0\n" + tail,
                  "data.n");
    expect_reject(head + "[data]\nsource = file\n" + tail, "data.path");
    expect_reject(head + "[data]\nsource = carrier_pigeon\npath = x\n" + tail, "data.source");
    expect_reject(manifest("noise = 1.0\n"), "data.noise");
    expect_reject(manifest("noise_kind = salty\n"), "data.noise_kind");
    expect_reject(manifest("noise_kind = asymmetric\n"), "data.pairs");
    expect_reject(manifest("noise_kind = asymmetric\npairs = 0, 1\n"), "data.pairs");
    expect_reject(manifest("pairs = 1, 0\n"), "data.pairs");  // symmetric + pairs
    expect_reject(manifest("", "[model]\ninit_scale = 0\n"), "model.init_scale");
    expect_reject(manifest("", "[model]\nhidden = 0\n"), "model.hidden");
    expect_reject(manifest("", "[spectrum]\nenabled = true\n"), "spectrum.K");
    expect_reject(manifest("", "[output]\nmetrics =\n"), "output.metrics");

    // Trainer-level validation still applies through config.
    CHECK_THROWS_AS(
        parse_valid("schema_version = 1\n[data]\nn = 10\ntest = 2\nd = 2\nclusters = 2\n"
                    "classes = 2\nseparation = 5.0\n[train]\nlearning_rate = 0.01\n"
                    "coreset_fraction = 1.5\n"),
        invalid_spec);
}

TEST_CASE("asymmetric pairs parse and validate") {
    RunConfig cfg = parse_valid(
        "schema_version = 1\n"
        "[data]\n"
        "n = 100\ntest = 10\nd = 3\nclusters = 4\nclasses = 4\nseparation = 5.0\n"
        "noise = 0.2\nnoise_kind = asymmetric\npairs = 1, 0, 3, 2\n"
        "[train]\nlearning_rate = 0.01\n");
    CHECK(cfg.data.pairs == std::vector<std::size_t>{1, 0, 3, 2});
}

TEST_CASE("ablation grid mode sets the flag") {
    RunConfig cfg = parse_valid(
        "schema_version = 1\n"
        "[data]\n"
        "n = 100\ntest = 10\nd = 3\nclusters = 2\nclasses = 2\nseparation = 5.0\n"
        "[train]\nmode = ablation_grid\nlearning_rate = 0.01\n");
    CHECK(cfg.ablation_grid);
}

TEST_CASE("comments and spacing are ignored") {
    RunConfig cfg = parse_valid(
        "  # leading comment\n"
        "schema_version = 1   # trailing\n"
        "\n"
        "[data]   \n"
        "  n = 100  \n"
        "test = 10\nd = 3\nclusters = 2\nclasses = 2\nseparation = 5.0\n"
        "[train]\nlearning_rate = 0.01\n");
    CHECK(cfg.data.n == 100);
}

TEST_CASE("load_config reads a file and reports a missing one") {
    const std::string path = "config_test_manifest.ini";
    {
        std::ofstream out(path);
        out << kFullManifest;
    }
    RunConfig cfg = load_config(path);
    cfg.validate();
    CHECK(cfg.data.n == 1000);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_config("no_such_manifest.ini"), invalid_input);
}

TEST_CASE("fnv1a matches the reference vectors") {
    CHECK(fnv1a_hash("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a_hash("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a_hash("foobar") == 0x85944171f73967e8ull);
}
