#include <doctest.h>

#include <cmath>
#include <vector>

#include "nammkit/analysis.hpp"

using namespace nammkit;

namespace {

Genome random_genome(ArchId arch, RngState& rng, double scale = 0.3) {
    Genome g;
    g.arch = arch;
    g.params.resize(param_count(arch));
    for (double& v : g.params) v = scale * rng_next_normal(rng);
    return g;
}

Matrix random_features(std::size_t n, RngState& rng) {
    Matrix m(n, kFeatureDim);
    for (double& v : m.data) v = rng_next_normal(rng);
    return m;
}

}  // namespace

TEST_CASE("mlp scorer has no cross-token sensitivity") {
    RngState rng{401};
    const Genome g = random_genome(ArchId::Mlp, rng);
    const Matrix x = random_features(5, rng);
    const SensitivityReport rep = score_sensitivity(g, x);
    REQUIRE(rep.cross.rows == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            if (i != j) CHECK(rep.cross.at(i, j) == 0.0);
        }
    }
}

TEST_CASE("bam scorer never looks at strictly older tokens") {
    RngState rng{409};
    const Genome g = random_genome(ArchId::Bam, rng);
    const Matrix x = random_features(5, rng);
    const SensitivityReport rep = score_sensitivity(g, x);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            CHECK(rep.cross.at(i, j) == 0.0);  // j < i masked out
        }
        // Self-sensitivity is generically nonzero.
        CHECK(rep.cross.at(i, i) > 0.0);
    }
}

TEST_CASE("finite differences match an analytic linear scorer") {
    // MLP with zero hidden weights reduces to s = wfinal . v + bfinal, so the
    // self gradient is wfinal exactly.
    Genome g;
    g.arch = ArchId::Mlp;
    g.params.assign(param_count(ArchId::Mlp), 0.0);
    RngState rng{419};
    std::vector<double> wfinal(kFeatureDim);
    const std::size_t final_off = param_count(ArchId::Mlp) - kFeatureDim - 1;
    for (std::size_t k = 0; k < kFeatureDim; ++k) {
        wfinal[k] = rng_next_normal(rng);
        g.params[final_off + k] = wfinal[k];
    }
    const Matrix x = random_features(3, rng);
    const SensitivityReport rep = score_sensitivity(g, x);
    for (std::size_t i = 0; i < 3; ++i) {
        double dir = 0.0;
        for (std::size_t k = 0; k < kFeatureDim; ++k) {
            CHECK(std::fabs(rep.self_abs.at(i, k) - std::fabs(wfinal[k])) < 1e-7);
            dir += wfinal[k] * x.at(i, k);
        }
        CHECK(std::fabs(rep.directional[i] - dir) < 1e-6);
    }
}

TEST_CASE("pearson correlation basics") {
    CHECK(std::fabs(pearson({1, 2, 3, 4}, {2, 4, 6, 8}) - 1.0) < 1e-12);
    CHECK(std::fabs(pearson({1, 2, 3, 4}, {8, 6, 4, 2}) + 1.0) < 1e-12);
    CHECK(std::isnan(pearson({1, 1, 1}, {2, 3, 4})));  // constant series
    CHECK(std::isnan(pearson({1}, {2})));              // too short
    const double r = pearson({1, 2, 3, 4, 5}, {1, 3, 2, 5, 4});
    CHECK(r > 0.0);
    CHECK(r < 1.0);
}

TEST_CASE("layer profile on full retention") {
    std::vector<RunRecord> recs;
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t l = 0; l < 2; ++l) {
            RunRecord r;
            r.task = "passkey";
            r.sample = s;
            r.layer = l;
            r.head = 0;
            r.retained = 100;
            r.appended = 100;
            r.mean_oldness = 50.0;
            r.prompt_length = 100;
            recs.push_back(r);
        }
    }
    const LayerTaskProfile p = layer_task_profile(recs);
    REQUIRE(p.rows.size() == 2);
    for (const ProfileRow& row : p.rows) {
        CHECK(row.task == "passkey");
        CHECK(row.norm_size == 1.0);
        CHECK(std::fabs(row.norm_oldness - 0.5) < 1e-12);
    }
    // Retained fraction is constant: correlation undefined.
    CHECK(std::isnan(p.size_length_correlation));
}

TEST_CASE("layer profile hand-computed means") {
    std::vector<RunRecord> recs;
    auto add = [&](std::size_t sample, std::size_t layer, std::size_t retained,
                   double oldness, std::size_t plen) {
        RunRecord r;
        r.task = "copy";
        r.sample = sample;
        r.layer = layer;
        r.head = 0;
        r.retained = retained;
        r.appended = 100;
        r.mean_oldness = oldness;
        r.prompt_length = plen;
        recs.push_back(r);
    };
    add(0, 0, 80, 10.0, 100);
    add(0, 1, 60, 30.0, 100);
    add(1, 0, 40, 20.0, 200);
    add(1, 1, 20, 50.0, 200);
    const LayerTaskProfile p = layer_task_profile(recs);
    REQUIRE(p.rows.size() == 2);
    // Layer 0: mean(0.8, 0.4) = 0.6; oldness mean(10, 20) = 15 over mean prompt
    // length 150.
    CHECK(std::fabs(p.rows[0].norm_size - 0.6) < 1e-12);
    CHECK(std::fabs(p.rows[0].norm_oldness - 15.0 / 150.0) < 1e-12);
    CHECK(std::fabs(p.rows[1].norm_size - 0.4) < 1e-12);
    CHECK(std::fabs(p.rows[1].norm_oldness - 40.0 / 150.0) < 1e-12);
    // Sample 0 keeps 0.7 of 100 tokens, sample 1 keeps 0.3 of 200: perfectly
    // anti-correlated over two points.
    CHECK(std::fabs(p.size_length_correlation + 1.0) < 1e-12);
}

TEST_CASE("dump_retained maps cache rows back to sample tokens") {
    PromptSample sample;
    sample.tokens = {10, 11, 12, 13, 14, 15};
    sample.answer_start = 5;
    sample.answer_end = 6;

    KVCache cache(1, 1, 2);
    Matrix keys(6, 2), values(6, 2);
    for (std::size_t i = 0; i < 6; ++i) {
        keys.at(i, 0) = double(i);
        values.at(i, 0) = double(i);
    }
    append(cache, 0, 0, keys, values, 6);
    apply_retention(cache, 0, 0, {true, false, true, false, true, true});

    const auto recs = dump_retained(cache, sample);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].layer == 0);
    CHECK(recs[0].head == 0);
    CHECK(recs[0].positions == std::vector<std::size_t>{0, 2, 4, 5});
    CHECK(recs[0].token_ids == std::vector<Token>{10, 12, 14, 15});
}
