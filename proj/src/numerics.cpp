#include "nammkit/numerics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nammkit {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: shape mismatch (" + std::to_string(a.rows) + "x" +
                                    std::to_string(a.cols) + ") * (" + std::to_string(b.rows) +
                                    "x" + std::to_string(b.cols) + ")");
    }
    Matrix out(a.rows, b.cols);
    // ikj order keeps the inner loop contiguous in both b and out.
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* out_row = out.row(i);
        const double* a_row = a.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a_row[k];
            if (aik == 0.0) continue;
            const double* b_row = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) {
                out_row[j] += aik * b_row[j];
            }
        }
    }
    return out;
}

Matrix masked_softmax(const Matrix& logits, const BoolMatrix& mask) {
    if (logits.rows != mask.rows || logits.cols != mask.cols) {
        throw std::invalid_argument("masked_softmax: logits/mask shape mismatch");
    }
    Matrix out(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        double row_max = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols; ++j) {
            if (mask.at(i, j) && logits.at(i, j) > row_max) row_max = logits.at(i, j);
        }
        if (row_max == -std::numeric_limits<double>::infinity()) {
            throw std::invalid_argument("masked_softmax: fully masked row " + std::to_string(i));
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            if (mask.at(i, j)) {
                const double e = std::exp(logits.at(i, j) - row_max);
                out.at(i, j) = e;
                denom += e;
            }
        }
        for (std::size_t j = 0; j < logits.cols; ++j) {
            if (mask.at(i, j)) out.at(i, j) /= denom;
        }
    }
    return out;
}

std::uint64_t rng_next_u64(RngState& rng) {
    // SplitMix64 (Steele, Lea, Flood 2014).
    std::uint64_t z = (rng.state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double rng_next_uniform(RngState& rng) {
    return static_cast<double>(rng_next_u64(rng) >> 11) * 0x1.0p-53;
}

double rng_next_normal(RngState& rng) {
    // Box-Muller, cosine branch only; 1-u keeps the log argument in (0, 1].
    const double u1 = 1.0 - rng_next_uniform(rng);
    const double u2 = rng_next_uniform(rng);
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

std::vector<double> sinusoidal_embedding(double value, std::size_t dim, double base) {
    if (dim % 2 != 0) throw std::invalid_argument("sinusoidal_embedding: dim must be even");
    std::vector<double> out(dim);
    for (std::size_t k = 0; 2 * k < dim; ++k) {
        const double freq = std::pow(base, static_cast<double>(2 * k) / static_cast<double>(dim));
        out[2 * k] = std::sin(value / freq);
        out[2 * k + 1] = std::cos(value / freq);
    }
    return out;
}

}  // namespace nammkit
