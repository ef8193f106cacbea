#include <doctest.h>

#include <cmath>
#include <vector>

#include "nammkit/numerics.hpp"

using namespace nammkit;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RngState& rng) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng_next_normal(rng);
    return m;
}

// Independent oracle: plain i-j-k triple loop, no blocking or reordering.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("matmul identity and zero") {
    RngState rng{7};
    const Matrix m = random_matrix(3, 5, rng);
    const Matrix im = matmul(Matrix::identity(3), m);
    for (std::size_t i = 0; i < m.data.size(); ++i) CHECK(im.data[i] == m.data[i]);

    const Matrix z = matmul(Matrix(4, 3), m);
    for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    RngState rng{11};
    const Matrix a = random_matrix(5, 7, rng);
    const Matrix b = random_matrix(7, 3, rng);
    const Matrix got = matmul(a, b);
    const Matrix want = matmul_oracle(a, b);
    REQUIRE(got.rows == 5);
    REQUIRE(got.cols == 3);
    for (std::size_t i = 0; i < got.data.size(); ++i) {
        CHECK(std::fabs(got.data[i] - want.data[i]) < 1e-12);
    }
}

TEST_CASE("matmul shape mismatch throws") {
    CHECK_THROWS(matmul(Matrix(2, 3), Matrix(4, 2)));
}

TEST_CASE("matmul associativity on random triples") {
    RngState rng{13};
    for (int rep = 0; rep < 5; ++rep) {
        const Matrix a = random_matrix(4, 6, rng);
        const Matrix b = random_matrix(6, 5, rng);
        const Matrix c = random_matrix(5, 3, rng);
        const Matrix left = matmul(matmul(a, b), c);
        const Matrix right = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < left.data.size(); ++i) {
            CHECK(std::fabs(left.data[i] - right.data[i]) < 1e-9);
        }
    }
}

TEST_CASE("masked_softmax examples") {
    Matrix logits(1, 2);
    BoolMatrix mask(1, 2);
    Matrix out = masked_softmax(logits, mask);
    CHECK(out.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

    logits.at(0, 0) = 3.7;
    mask.set(0, 1, false);
    out = masked_softmax(logits, mask);
    CHECK(out.at(0, 0) == 1.0);
    CHECK(out.at(0, 1) == 0.0);  // exactly zero, not just small
}

TEST_CASE("masked_softmax matches direct exp-normalize oracle") {
    Matrix logits(1, 3);
    logits.at(0, 0) = 1.0;
    logits.at(0, 1) = 2.0;
    logits.at(0, 2) = 3.0;
    const Matrix out = masked_softmax(logits, BoolMatrix(1, 3));
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(std::fabs(out.at(0, j) - std::exp(1.0 + double(j)) / z) < 1e-12);
    }
}

TEST_CASE("masked_softmax properties on random inputs") {
    RngState rng{17};
    for (int rep = 0; rep < 20; ++rep) {
        Matrix logits = random_matrix(6, 9, rng);
        for (double& v : logits.data) v *= 50.0;  // exercise the row-max stabilization
        BoolMatrix mask(6, 9);
        for (std::size_t i = 0; i < 6; ++i) {
            for (std::size_t j = 0; j < 9; ++j) {
                mask.set(i, j, (rng_next_u64(rng) & 1) != 0);
            }
            mask.set(i, i, true);  // keep every row feasible
        }
        const Matrix out = masked_softmax(logits, mask);
        for (std::size_t i = 0; i < 6; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 9; ++j) {
                if (!mask.at(i, j)) CHECK(out.at(i, j) == 0.0);
                CHECK(out.at(i, j) >= 0.0);
                sum += out.at(i, j);
            }
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("masked_softmax fully masked row throws") {
    CHECK_THROWS(masked_softmax(Matrix(1, 2), BoolMatrix(1, 2, false)));
}

TEST_CASE("rng golden values") {
    // Frozen reference outputs of the pinned SplitMix64 + Box-Muller stream;
    // any platform must reproduce them bit-for-bit.
    RngState a{42};
    CHECK(rng_next_u64(a) == 13679457532755275413ULL);
    RngState b{42};
    CHECK(rng_next_normal(b) == 0.88224890622226881);
    CHECK(rng_next_normal(b) == -0.45084987571886009);
    RngState c{123};
    CHECK(rng_next_uniform(c) == 0.70649122176370671);
}

TEST_CASE("rng equal seeds give equal streams") {
    RngState a{999}, b{999};
    for (int i = 0; i < 10000; ++i) CHECK(rng_next_u64(a) == rng_next_u64(b));
}

TEST_CASE("rng normal moments") {
    RngState rng{2024};
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = rng_next_normal(rng);
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("rng uniform range") {
    RngState rng{5};
    for (int i = 0; i < 10000; ++i) {
        const double u = rng_next_uniform(rng);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("sinusoidal embedding examples") {
    const auto zero = sinusoidal_embedding(0.0, 8, 1e4);
    REQUIRE(zero.size() == 8);
    for (std::size_t k = 0; k < 8; k += 2) {
        CHECK(zero[k] == 0.0);
        CHECK(zero[k + 1] == 1.0);
    }

    const double pi = std::acos(-1.0);
    const auto at_pi = sinusoidal_embedding(pi, 8, 1e4);
    CHECK(std::fabs(at_pi[0]) < 1e-12);  // sin(pi / base^0)

    const auto v = sinusoidal_embedding(3.5, 8, 1e4);
    for (std::size_t k = 0; k < 4; ++k) {
        const double angle = 3.5 / std::pow(1e4, double(2 * k) / 8.0);
        CHECK(std::fabs(v[2 * k] - std::sin(angle)) < 1e-12);
        CHECK(std::fabs(v[2 * k + 1] - std::cos(angle)) < 1e-12);
    }
}

TEST_CASE("sinusoidal embedding odd dim throws") {
    CHECK_THROWS(sinusoidal_embedding(1.0, 7, 1e4));
}
