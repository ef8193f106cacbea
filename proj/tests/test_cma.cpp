#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "nammkit/cma.hpp"

using namespace nammkit;

namespace {

double sphere_fitness(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return -s;  // maximize
}

double sq_norm(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
}

// Runs the optimizer on the shifted sphere and returns the generation count
// needed to bring ||mean||^2 below tol (or max_gens if never reached).
std::size_t solve_sphere(std::uint64_t seed, std::size_t max_gens, double tol) {
    CmaState st = cma_init(10, 0.65, 32, std::vector<double>(10, 3.0));
    RngState rng{seed};
    for (std::size_t g = 0; g < max_gens; ++g) {
        const auto cands = cma_ask(st, rng);
        std::vector<double> fit(cands.size());
        for (std::size_t i = 0; i < cands.size(); ++i) fit[i] = sphere_fitness(cands[i]);
        cma_tell(st, cands, fit);
        if (sq_norm(st.mean) < tol) return g + 1;
    }
    return max_gens;
}

}  // namespace

TEST_CASE("derived constants follow the defaults") {
    const CmaState st = cma_init(10);
    CHECK(st.popsize == 32);
    CHECK(st.mu == 16);
    REQUIRE(st.weights.size() == 16);
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < st.weights.size(); ++i) {
        CHECK(st.weights[i] > st.weights[i + 1]);  // log weights decrease
        sum += st.weights[i];
    }
    sum += st.weights.back();
    CHECK(std::fabs(sum - 1.0) < 1e-12);
    // mu_eff = 1 / sum w_i^2, bounded between 1 and mu.
    double sq = 0.0;
    for (double w : st.weights) sq += w * w;
    CHECK(std::fabs(st.mu_eff - 1.0 / sq) < 1e-9);
    CHECK(st.mu_eff > 1.0);
    CHECK(st.mu_eff < 16.0);
    CHECK(st.sigma == 0.65);
    CHECK(st.c_m == 1.0);
    // Identity covariance at init.
    for (std::size_t i = 0; i < 10; ++i) {
        for (std::size_t j = 0; j < 10; ++j) {
            CHECK(st.cov.at(i, j) == (i == j ? 1.0 : 0.0));
        }
    }
}

TEST_CASE("sphere function converges from a shifted start") {
    // Three seeds, all must hit ||mean||^2 < 1e-6 well within 300 generations.
    for (std::uint64_t seed : {1ull, 17ull, 902ull}) {
        CHECK(solve_sphere(seed, 300, 1e-6) < 300);
    }
}

TEST_CASE("ask produces popsize finite candidates of the right dimension") {
    CmaState st = cma_init(5, 0.3, 12);
    RngState rng{5};
    const auto cands = cma_ask(st, rng);
    REQUIRE(cands.size() == 12);
    for (const auto& c : cands) {
        REQUIRE(c.size() == 5);
        for (double v : c) CHECK(std::isfinite(v));
    }
}

TEST_CASE("NaN fitness ranks worst") {
    // Two optimizers fed identical candidates; in one, the best candidate's
    // fitness is replaced by NaN. The updated means must differ, and the NaN
    // run must match a run where that candidate got -inf-like (worst) rank.
    CmaState a = cma_init(4, 0.5, 8);
    CmaState b = cma_init(4, 0.5, 8);
    RngState r1{11}, r2{11};
    const auto ca = cma_ask(a, r1);
    const auto cb = cma_ask(b, r2);
    REQUIRE(ca == cb);

    std::vector<double> fa(8), fb(8);
    for (std::size_t i = 0; i < 8; ++i) fa[i] = fb[i] = sphere_fitness(ca[i]);
    std::size_t best = 0;
    for (std::size_t i = 1; i < 8; ++i) {
        if (fa[i] > fa[best]) best = i;
    }
    fa[best] = std::numeric_limits<double>::quiet_NaN();
    fb[best] = -1e300;  // explicit worst
    cma_tell(a, ca, fa);
    cma_tell(b, cb, fb);
    CHECK(a.mean == b.mean);
    for (std::size_t i = 0; i < a.cov.data.size(); ++i) {
        CHECK(a.cov.data[i] == b.cov.data[i]);
    }
}

TEST_CASE("equal fitness ties break by candidate index") {
    CmaState a = cma_init(3, 0.5, 6);
    CmaState b = cma_init(3, 0.5, 6);
    RngState r1{13}, r2{13};
    const auto ca = cma_ask(a, r1);
    const auto cb = cma_ask(b, r2);
    // All-equal fitness: selection must be the first mu candidates in order,
    // in both runs, so the updates agree exactly.
    cma_tell(a, ca, std::vector<double>(6, 1.0));
    cma_tell(b, cb, std::vector<double>(6, 1.0));
    CHECK(a.mean == b.mean);
    CHECK(a.sigma == b.sigma);
}

TEST_CASE("tell validates sizes") {
    CmaState st = cma_init(3, 0.5, 6);
    RngState rng{17};
    const auto cands = cma_ask(st, rng);
    CHECK_THROWS(cma_tell(st, cands, std::vector<double>(5, 0.0)));
}

TEST_CASE("save/load resumes bit-identically") {
    const std::string path = "test_cma_state.bin";
    CmaState live = cma_init(8, 0.65, 16, std::vector<double>(8, 2.0));
    RngState rng{23};
    for (int g = 0; g < 5; ++g) {
        const auto cands = cma_ask(live, rng);
        std::vector<double> fit(cands.size());
        for (std::size_t i = 0; i < cands.size(); ++i) fit[i] = sphere_fitness(cands[i]);
        cma_tell(live, cands, fit);
    }
    save_cma(live, path);
    CmaState loaded = load_cma(path);
    CHECK(loaded.dim == live.dim);
    CHECK(loaded.generation == live.generation);
    CHECK(loaded.mean == live.mean);
    CHECK(loaded.sigma == live.sigma);
    CHECK(loaded.cov.data == live.cov.data);
    CHECK(loaded.weights == live.weights);
    CHECK(loaded.mu_eff == live.mu_eff);

    // Continue both for 3 generations from the same RNG state; identical paths.
    RngState ra{31}, rb{31};
    for (int g = 0; g < 3; ++g) {
        const auto c1 = cma_ask(live, ra);
        const auto c2 = cma_ask(loaded, rb);
        REQUIRE(c1 == c2);
        std::vector<double> fit(c1.size());
        for (std::size_t i = 0; i < c1.size(); ++i) fit[i] = sphere_fitness(c1[i]);
        cma_tell(live, c1, fit);
        cma_tell(loaded, c2, fit);
    }
    CHECK(live.mean == loaded.mean);
    CHECK(live.sigma == loaded.sigma);
    std::remove(path.c_str());
}
