#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "mvlstm/data.hpp"
#include "mvlstm/rng.hpp"
#include "oracles.hpp"

using namespace mvlstm;

namespace {

std::vector<ModeRequest> default_requests() {
    return {{ModeKind::additive_bias, true},
            {ModeKind::additive_bias, false},
            {ModeKind::channel_gain, false},
            {ModeKind::linear_transform, false}};
}

GeneratorConfig small_config(double noise = 0.05) {
    GeneratorConfig cfg;
    cfg.input_dim = 6;
    cfg.num_frames = 16;
    cfg.num_classes = 3;
    cfg.samples_per_class_mode = 4;
    cfg.noise_sigma = noise;
    const auto reqs = default_requests();
    cfg.modes = generate_modes(reqs, cfg.input_dim, 77);
    return cfg;
}

bool bitwise_equal(const Dataset& a, const Dataset& b) {
    if (a.samples.size() != b.samples.size()) return false;
    for (std::size_t n = 0; n < a.samples.size(); ++n) {
        const auto& x = a.samples[n];
        const auto& y = b.samples[n];
        if (x.label != y.label || x.mode_id != y.mode_id || x.seed != y.seed) return false;
        if (x.frames != y.frames) return false;
    }
    return true;
}

std::filesystem::path temp_stem(const char* tag) {
    return std::filesystem::temp_directory_path() / (std::string("mvlstm_test_") + tag);
}

}  // namespace

TEST_CASE("generate_dataset is deterministic per seed") {
    const GeneratorConfig cfg = small_config();
    const Dataset a = generate_dataset(cfg, 123);
    const Dataset b = generate_dataset(cfg, 123);
    CHECK(bitwise_equal(a, b));
    const Dataset c = generate_dataset(cfg, 124);
    CHECK_FALSE(bitwise_equal(a, c));
}

TEST_CASE("additive mode shifts the identity twin by exactly the bias (noise 0)") {
    const GeneratorConfig cfg = small_config(0.0);
    const Dataset ds = generate_dataset(cfg, 9);
    const ModeSpec& additive = cfg.modes[1];
    REQUIRE(additive.kind == ModeKind::additive_bias);

    for (const SequenceSample& s : ds.samples) {
        if (s.mode_id != additive.mode_id) continue;
        // identity twin: same subject and class, mode 0
        const SequenceSample* twin = nullptr;
        for (const SequenceSample& t : ds.samples)
            if (t.seed == s.seed && t.label == s.label && t.mode_id == 0) twin = &t;
        REQUIRE(twin != nullptr);
        for (std::size_t t = 0; t < s.frames.size(); ++t)
            for (std::size_t j = 0; j < s.frames[t].size(); ++j)
                CHECK(s.frames[t][j] - twin->frames[t][j] ==
                      doctest::Approx(additive.bias[j]).epsilon(1e-12));
    }
}

TEST_CASE("class k concentrates spectral power at bin k+1 (DFT oracle)") {
    const GeneratorConfig cfg = small_config();
    const Dataset ds = generate_dataset(cfg, 31);
    for (const SequenceSample& s : ds.samples) {
        if (s.mode_id != 0) continue;  // identity-mode samples only
        for (std::size_t j = 0; j < cfg.input_dim; ++j) {
            oracle::Vec channel(cfg.num_frames);
            for (std::size_t t = 0; t < cfg.num_frames; ++t) channel[t] = s.frames[t][j];
            CHECK(oracle::dominant_bin(channel) == s.label + 1);
        }
    }
}

TEST_CASE("per (class, mode) counts are balanced") {
    const GeneratorConfig cfg = small_config();
    const Dataset ds = generate_dataset(cfg, 5);
    std::map<std::pair<std::size_t, std::uint32_t>, std::size_t> counts;
    for (const SequenceSample& s : ds.samples) counts[{s.label, s.mode_id}] += 1;
    CHECK(counts.size() == cfg.num_classes * cfg.modes.size());
    for (const auto& [key, n] : counts) CHECK(n == cfg.samples_per_class_mode);
    for (std::size_t k = 0; k < cfg.num_classes; ++k)
        for (std::size_t m = 0; m < cfg.modes.size(); ++m)
            CHECK(ds.manifest.counts[k][m] == cfg.samples_per_class_mode);
}

TEST_CASE("orthogonal modes preserve frame norms at zero noise") {
    const GeneratorConfig cfg = small_config(0.0);
    const Dataset ds = generate_dataset(cfg, 17);
    const ModeSpec& rotation = cfg.modes[3];
    REQUIRE(rotation.kind == ModeKind::linear_transform);

    for (const SequenceSample& s : ds.samples) {
        if (s.mode_id != rotation.mode_id) continue;
        const SequenceSample* twin = nullptr;
        for (const SequenceSample& t : ds.samples)
            if (t.seed == s.seed && t.label == s.label && t.mode_id == 0) twin = &t;
        REQUIRE(twin != nullptr);
        for (std::size_t t = 0; t < s.frames.size(); ++t) {
            const double moded = std::sqrt(dot(s.frames[t], s.frames[t]));
            const double base = std::sqrt(dot(twin->frames[t], twin->frames[t]));
            CHECK(std::abs(moded - base) / std::max(base, 1.0) < 1e-9);
        }
    }
}

TEST_CASE("inverting the mode transform recovers the identity twin within 4 sigma") {
    GeneratorConfig cfg = small_config(0.05);
    cfg.samples_per_class_mode = 2;
    std::size_t pass = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Dataset ds = generate_dataset(cfg, seed);
        std::map<std::pair<std::uint64_t, std::size_t>, const SequenceSample*> identity_twin;
        for (const SequenceSample& s : ds.samples)
            if (s.mode_id == 0) identity_twin[{s.seed, s.label}] = &s;
        for (const SequenceSample& s : ds.samples) {
            if (s.mode_id == 0) continue;
            const ModeSpec& mode = cfg.modes[s.mode_id];
            const SequenceSample* twin = identity_twin.at({s.seed, s.label});
            double worst = 0.0;
            for (std::size_t t = 0; t < s.frames.size(); ++t) {
                Vector recovered = s.frames[t];
                invert_mode(mode, recovered);
                worst = std::max(worst, max_abs_diff(recovered, twin->frames[t]));
            }
            ++total;
            if (worst <= 4.0 * cfg.noise_sigma) ++pass;
        }
    }
    CHECK(static_cast<double>(pass) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("make_static_sequence replicates the tau frame") {
    const GeneratorConfig cfg = small_config();
    const Dataset ds = generate_dataset(cfg, 3);
    const SequenceSample& s = ds.samples[0];

    const auto thirty = make_static_sequence(s, 0, 30);
    CHECK(thirty.size() == 30);
    for (const Vector& f : thirty) CHECK(f == s.frames[0]);

    const auto one = make_static_sequence(s, 5, 1);
    CHECK(one.size() == 1);
    CHECK(one[0] == s.frames[5]);

    CHECK_THROWS_AS(make_static_sequence(s, cfg.num_frames, 10), std::out_of_range);
    CHECK_THROWS_AS(make_static_sequence(s, 0, 0), std::invalid_argument);
}

TEST_CASE("split_by_mode keeps base seeds disjoint between train and test") {
    const GeneratorConfig cfg = small_config();
    const Dataset ds = generate_dataset(cfg, 11);
    const std::vector<std::uint32_t> seen{0};
    const std::vector<std::uint32_t> unseen{1, 2, 3};
    const ModeSplit split = split_by_mode(ds.samples, seen, unseen, SplitConfig{4, 1});

    std::set<std::uint64_t> train_seeds, test_seeds;
    for (const auto& s : split.train) {
        CHECK(s.mode_id == 0);
        train_seeds.insert(s.seed);
    }
    for (const auto& s : split.seen_test) test_seeds.insert(s.seed);
    for (const auto& [mode, vec] : split.unseen_tests)
        for (const auto& s : vec) {
            CHECK(s.mode_id == mode);
            test_seeds.insert(s.seed);
        }
    for (std::uint64_t s : train_seeds) CHECK(test_seeds.count(s) == 0);
    CHECK(split.unseen_tests.size() == 3);
    CHECK(split.empty_unseen_modes.empty());
}

TEST_CASE("fold rotation covers every sample exactly once in test") {
    GeneratorConfig cfg = small_config();
    cfg.samples_per_class_mode = 10;
    const Dataset ds = generate_dataset(cfg, 13);
    const std::vector<std::uint32_t> seen{0};
    const std::vector<std::uint32_t> unseen{1, 2, 3};

    std::map<std::tuple<std::uint64_t, std::size_t, std::uint32_t>, std::size_t> test_hits;
    const std::size_t folds = 10;
    for (std::size_t fold = 0; fold < folds; ++fold) {
        const ModeSplit split = split_by_mode(ds.samples, seen, unseen, SplitConfig{folds, fold});
        for (const auto& s : split.seen_test) test_hits[{s.seed, s.label, s.mode_id}] += 1;
        for (const auto& [mode, vec] : split.unseen_tests)
            for (const auto& s : vec) test_hits[{s.seed, s.label, s.mode_id}] += 1;
    }
    CHECK(test_hits.size() == ds.samples.size());
    for (const auto& [key, hits] : test_hits) CHECK(hits == 1);
}

TEST_CASE("split_by_mode flags unseen modes with no samples and rejects bad sets") {
    const GeneratorConfig cfg = small_config();
    const Dataset ds = generate_dataset(cfg, 19);
    std::vector<SequenceSample> only_mode0;
    for (const auto& s : ds.samples)
        if (s.mode_id == 0) only_mode0.push_back(s);

    const std::vector<std::uint32_t> seen{0};
    const std::vector<std::uint32_t> unseen{1, 2, 3};
    const ModeSplit split = split_by_mode(only_mode0, seen, unseen, SplitConfig{4, 0});
    CHECK(split.empty_unseen_modes == std::vector<std::uint32_t>{1, 2, 3});
    for (const auto& [mode, vec] : split.unseen_tests) CHECK(vec.empty());

    const std::vector<std::uint32_t> overlap{0, 1};
    CHECK_THROWS_AS(split_by_mode(ds.samples, seen, overlap, SplitConfig{4, 0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(split_by_mode(ds.samples, std::vector<std::uint32_t>{}, unseen,
                                  SplitConfig{4, 0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(split_by_mode(ds.samples, seen, unseen, SplitConfig{4, 7}),
                    std::invalid_argument);
}

TEST_CASE("generate_dataset validates its inputs") {
    GeneratorConfig cfg = small_config();
    cfg.num_classes = 1;
    CHECK_THROWS_AS(generate_dataset(cfg, 1), std::invalid_argument);

    cfg = small_config();
    cfg.num_frames = 3;
    CHECK_THROWS_AS(generate_dataset(cfg, 1), std::invalid_argument);

    cfg = small_config();
    cfg.modes.clear();
    CHECK_THROWS_AS(generate_dataset(cfg, 1), std::invalid_argument);

    cfg = small_config();
    cfg.modes[3].transform(0, 0) += 0.5;  // break orthogonality
    CHECK_THROWS_AS(generate_dataset(cfg, 1), std::invalid_argument);
}

TEST_CASE("dataset round trip is bit-exact and counts agree") {
    const GeneratorConfig cfg = small_config();
    const Dataset ds = generate_dataset(cfg, 23);
    const auto stem = temp_stem("roundtrip");
    save_dataset(ds, stem);
    const Dataset back = load_dataset(stem);

    CHECK(bitwise_equal(ds, back));
    CHECK(back.manifest.master_seed == ds.manifest.master_seed);
    CHECK(back.manifest.config.noise_sigma == ds.manifest.config.noise_sigma);
    CHECK(back.manifest.counts == ds.manifest.counts);
    CHECK(back.manifest.config.modes.size() == ds.manifest.config.modes.size());
    // regenerated metadata matches the original generation metadata
    for (std::size_t n = 0; n < ds.samples.size(); ++n) {
        CHECK(back.samples[n].base_frequency == ds.samples[n].base_frequency);
        CHECK(back.samples[n].base_phase == ds.samples[n].base_phase);
    }
    std::filesystem::remove(std::filesystem::path(stem) += ".frames");
    std::filesystem::remove(std::filesystem::path(stem) += ".manifest");
}

TEST_CASE("a flipped byte in the frames file is rejected") {
    const GeneratorConfig cfg = small_config();
    const Dataset ds = generate_dataset(cfg, 29);
    const auto stem = temp_stem("tamper");
    save_dataset(ds, stem);

    std::filesystem::path frames = stem;
    frames += ".frames";
    {
        std::fstream f(frames, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(64);
        char byte = 0;
        f.seekg(64);
        f.read(&byte, 1);
        byte = static_cast<char>(byte ^ 0x40);
        f.seekp(64);
        f.write(&byte, 1);
    }
    CHECK_THROWS_AS(load_dataset(stem), std::runtime_error);
    std::filesystem::remove(frames);
    std::filesystem::remove(std::filesystem::path(stem) += ".manifest");
}

TEST_CASE("mode helpers: names, kinds, validation") {
    CHECK(to_string(ModeKind::channel_gain) == "channel_gain");
    CHECK(mode_kind_from_string("linear_transform") == ModeKind::linear_transform);
    CHECK_THROWS_AS(mode_kind_from_string("warp"), std::invalid_argument);

    const auto modes = generate_modes(default_requests(), 6, 5);
    REQUIRE(modes.size() == 4);
    CHECK(modes[0].name == "identity");
    CHECK(modes[0].bias == Vector(6, 0.0));
    CHECK(modes[1].name == "additive_1");
    CHECK(modes[2].name == "gain_1");
    CHECK(modes[3].name == "rotation_1");
    for (const auto& m : modes) validate_mode(m, 6);
    CHECK_THROWS_AS(validate_mode(modes[1], 7), std::invalid_argument);
}
