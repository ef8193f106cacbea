#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace nammkit {

// Dense row-major real64 matrix. All heavy math in the project runs on
// real64; see the RNG below for the reproducibility contract.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    static Matrix identity(std::size_t n);
};

struct BoolMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> allowed;  // 1 = unmasked

    BoolMatrix() = default;
    BoolMatrix(std::size_t r, std::size_t c, bool fill = true)
        : rows(r), cols(c), allowed(r * c, fill ? 1 : 0) {}

    bool at(std::size_t i, std::size_t j) const { return allowed[i * cols + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v) { allowed[i * cols + j] = v ? 1 : 0; }
};

Matrix matmul(const Matrix& a, const Matrix& b);

// Row-wise softmax over unmasked entries. Masked entries come out as exact
// zeros; a fully masked row throws (in a causal LM every row has self-attention,
// so such a row indicates a bug upstream).
Matrix masked_softmax(const Matrix& logits, const BoolMatrix& mask);

// SplitMix64 uniform stream + Box-Muller normals. The algorithm is pinned so
// seeded runs reproduce bit-for-bit on any platform.
struct RngState {
    std::uint64_t state = 0;
};

std::uint64_t rng_next_u64(RngState& rng);
double rng_next_uniform(RngState& rng);  // [0, 1)
double rng_next_normal(RngState& rng);
// Per-worker streams: derive seed ^ worker_index.
inline RngState derive_rng(std::uint64_t seed, std::uint64_t stream) {
    return RngState{seed ^ stream};
}

// out[2k] = sin(value / base^(2k/dim)), out[2k+1] = cos(value / base^(2k/dim)).
std::vector<double> sinusoidal_embedding(double value, std::size_t dim, double base);

}  // namespace nammkit
