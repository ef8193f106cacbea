#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "nammkit/spectrogram.hpp"

using namespace nammkit;

namespace {

// Independent naive DFT oracle: pad, window, O(n^2) complex transform.
std::vector<std::vector<std::complex<double>>> dft_oracle(const std::vector<double>& signal,
                                                          std::size_t n_w, std::size_t s_w) {
    const double pi = std::acos(-1.0);
    std::vector<double> padded(n_w - s_w, 0.0);
    padded.insert(padded.end(), signal.begin(), signal.end());
    std::vector<double> window(n_w);
    for (std::size_t k = 0; k < n_w; ++k) {
        window[k] = 0.5 * (1.0 - std::cos(2.0 * pi * double(k) / double(n_w - 1)));
    }
    const std::size_t n_frames = signal.size() / s_w;
    std::vector<std::vector<std::complex<double>>> out(n_frames);
    for (std::size_t t = 0; t < n_frames; ++t) {
        out[t].resize(n_w / 2 + 1);
        for (std::size_t bin = 0; bin <= n_w / 2; ++bin) {
            std::complex<double> acc = 0.0;
            for (std::size_t k = 0; k < n_w; ++k) {
                const double x = padded[t * s_w + k] * window[k];
                const double ang = -2.0 * pi * double(bin) * double(k) / double(n_w);
                acc += x * std::complex<double>(std::cos(ang), std::sin(ang));
            }
            out[t][bin] = acc;
        }
    }
    return out;
}

std::vector<double> random_signal(std::size_t n, RngState& rng) {
    std::vector<double> s(n);
    for (double& v : s) v = rng_next_normal(rng);
    return s;
}

}  // namespace

TEST_CASE("hann window endpoints, midpoint, sum") {
    const auto w32 = hann_window(32);
    CHECK(w32[0] == 0.0);
    const auto w33 = hann_window(33);
    CHECK(w33[16] == doctest::Approx(1.0).epsilon(1e-15));
    double sum = 0.0;
    for (double v : w32) sum += v;
    CHECK(sum == doctest::Approx(15.5).epsilon(1e-12));
    CHECK_THROWS(hann_window(1));
}

TEST_CASE("stft zero signal gives zero frames") {
    const auto frames = stft_magnitudes(std::vector<double>(512, 0.0), 32, 16);
    REQUIRE(frames.size() == 32);
    for (const auto& f : frames) {
        REQUIRE(f.size() == 17);
        for (double v : f) CHECK(v == 0.0);
    }
}

TEST_CASE("stft constant signal DC bin") {
    const auto frames = stft_magnitudes(std::vector<double>(512, 1.0), 32, 16);
    // Interior frames see all ones, so bin 0 equals the Hann window sum.
    for (std::size_t t = 1; t < frames.size(); ++t) {
        CHECK(frames[t][0] == doctest::Approx(15.5).epsilon(1e-12));
    }
    // First frame is half zero-padded: bin 0 is the sum of the window's back half.
    const auto w = hann_window(32);
    double half = 0.0;
    for (std::size_t k = 16; k < 32; ++k) half += w[k];
    CHECK(frames[0][0] == doctest::Approx(half).epsilon(1e-12));
}

TEST_CASE("stft matches naive DFT oracle on random signals") {
    RngState rng{31};
    for (int rep = 0; rep < 10; ++rep) {
        const auto sig = random_signal(512, rng);
        const auto got = stft_magnitudes(sig, 32, 16);
        const auto want = dft_oracle(sig, 32, 16);
        REQUIRE(got.size() == want.size());
        for (std::size_t t = 0; t < got.size(); ++t) {
            for (std::size_t b = 0; b < 17; ++b) {
                CHECK(std::fabs(got[t][b] - std::abs(want[t][b])) < 1e-9);
            }
        }
    }
}

TEST_CASE("stft linearity against the complex oracle") {
    RngState rng{37};
    const auto x = random_signal(256, rng);
    const auto y = random_signal(256, rng);
    const double a = 1.75, b = -0.4;
    std::vector<double> combo(256);
    for (std::size_t i = 0; i < 256; ++i) combo[i] = a * x[i] + b * y[i];
    const auto got = stft_magnitudes(combo, 32, 16);
    const auto fx = dft_oracle(x, 32, 16);
    const auto fy = dft_oracle(y, 32, 16);
    for (std::size_t t = 0; t < got.size(); ++t) {
        for (std::size_t bin = 0; bin < 17; ++bin) {
            const double want = std::abs(a * fx[t][bin] + b * fy[t][bin]);
            CHECK(std::fabs(got[t][bin] - want) < 1e-9);
        }
    }
}

TEST_CASE("stft hop-periodic sinusoid gives identical interior frames") {
    // Period 8 divides the hop (16), so every interior frame sees the same
    // waveform; shifting by whole periods changes nothing.
    const double pi = std::acos(-1.0);
    auto make = [&](double phase) {
        std::vector<double> s(512);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = std::sin(2.0 * pi * double(i) / 8.0 + phase);
        }
        return s;
    };
    const auto frames = stft_magnitudes(make(0.3), 32, 16);
    for (std::size_t t = 2; t < frames.size(); ++t) {
        for (std::size_t b = 0; b < 17; ++b) {
            CHECK(std::fabs(frames[t][b] - frames[1][b]) < 1e-9);
        }
    }
    const auto shifted = stft_magnitudes(make(0.3 + 2.0 * pi), 32, 16);
    for (std::size_t t = 1; t < frames.size(); ++t) {
        for (std::size_t b = 0; b < 17; ++b) {
            CHECK(std::fabs(frames[t][b] - shifted[t][b]) < 1e-9);
        }
    }
}

TEST_CASE("stft rejects bad lengths") {
    CHECK_THROWS(stft_magnitudes(std::vector<double>(100, 1.0), 32, 16));
    CHECK_THROWS(stft_magnitudes({}, 32, 16));
    CHECK_THROWS(stft_magnitudes(std::vector<double>(64, 1.0), 32, 8));
}

TEST_CASE("ema_reduce direct substitution") {
    EmaState prev;
    prev.reduced.assign(1, 0.0);
    const EmaState out = ema_reduce({{1.0}, {1.0}}, 0.5, prev);
    CHECK(out.reduced[0] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(out.chunk_count == 1);

    const EmaState ones = ema_reduce({{1.0}, {1.0}, {1.0}, {1.0}}, 1.0, prev);
    CHECK(ones.reduced[0] == 4.0);
}

TEST_CASE("ema_reduce empty frames returns prev") {
    EmaState prev;
    prev.reduced.assign(17, 2.5);
    prev.chunk_count = 3;
    const EmaState out = ema_reduce({}, 0.5, prev);
    CHECK(out.reduced == prev.reduced);
    CHECK(out.chunk_count == 3);
}

TEST_CASE("ema chunked equals single pass") {
    RngState rng{41};
    const double gamma = default_gamma();
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<SpectroFrame> frames(32, SpectroFrame(17));
        for (auto& f : frames) {
            for (double& v : f) v = rng_next_uniform(rng);
        }
        const std::size_t split = 1 + rng_next_u64(rng) % 31;
        const EmaState whole = ema_reduce(frames, gamma, EmaState{});
        const EmaState first = ema_reduce(
            {frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(split)}, gamma,
            EmaState{});
        const EmaState second = ema_reduce(
            {frames.begin() + static_cast<std::ptrdiff_t>(split), frames.end()}, gamma, first);
        for (std::size_t k = 0; k < 17; ++k) {
            CHECK(std::fabs(whole.reduced[k] - second.reduced[k]) < 1e-12);
        }
    }
}

TEST_CASE("calibrate_normalization definition and clamping") {
    // dim 0 has population std 2 -> scale 0.5
    std::vector<std::vector<double>> samples = {std::vector<double>(17, 0.0),
                                                std::vector<double>(17, 0.0)};
    samples[0][0] = 0.0;
    samples[1][0] = 4.0;  // mean 2, var 4
    const NormScales s = calibrate_normalization(samples);
    CHECK(s.scale[0] == doctest::Approx(0.5).epsilon(1e-12));

    // identical samples -> zero variance -> clamp ceiling 1/1e-6
    std::vector<std::vector<double>> same = {std::vector<double>(17, 3.0),
                                             std::vector<double>(17, 3.0)};
    const NormScales c = calibrate_normalization(same);
    for (double v : c.scale) CHECK(v == doctest::Approx(1e6).epsilon(1e-12));

    CHECK_THROWS(calibrate_normalization({std::vector<double>(17, 1.0)}));
}

TEST_CASE("calibrated features have unit variance") {
    RngState rng{43};
    std::vector<std::vector<double>> samples(64, std::vector<double>(17));
    for (auto& s : samples) {
        for (double& v : s) v = 3.0 * rng_next_normal(rng) + 1.0;
    }
    const NormScales scales = calibrate_normalization(samples);
    for (std::size_t k = 0; k < 17; ++k) {
        double mean = 0.0;
        for (const auto& s : samples) mean += s[k] * scales.scale[k];
        mean /= double(samples.size());
        double var = 0.0;
        for (const auto& s : samples) {
            const double d = s[k] * scales.scale[k] - mean;
            var += d * d;
        }
        var /= double(samples.size());
        CHECK(std::fabs(var - 1.0) < 1e-9);
    }
}

TEST_CASE("build_features zero column fresh token") {
    const auto [fv, ema] = build_features(std::vector<double>(32, 0.0), EmaState{}, 0,
                                          NormScales{}, default_gamma());
    for (std::size_t k = 0; k < kSpectralDim; ++k) CHECK(fv.v[k] == 0.0);
    for (std::size_t k = 0; k < kPositionalDim; k += 2) {
        CHECK(fv.v[kSpectralDim + k] == 0.0);
        CHECK(fv.v[kSpectralDim + k + 1] == 1.0);
    }
    CHECK(ema.chunk_count == 1);
}

TEST_CASE("build_features EMA accumulates across repeated chunks") {
    RngState rng{47};
    std::vector<double> column(32);
    for (double& v : column) v = rng_next_uniform(rng);
    const double gamma = default_gamma();
    const auto [fv1, ema1] = build_features(column, EmaState{}, 0, NormScales{}, gamma);
    const auto [fv2, ema2] = build_features(column, ema1, 32, NormScales{}, gamma);
    // Identical chunks: second reduction = first + gamma^nT * first.
    const double factor = 1.0 + std::pow(gamma, 2.0);  // nT = 32/16 = 2 frames
    for (std::size_t k = 0; k < kSpectralDim; ++k) {
        CHECK(fv2.v[k] == doctest::Approx(factor * fv1.v[k]).epsilon(1e-12));
    }
    CHECK(ema2.chunk_count == 2);
}

TEST_CASE("build_features equals composing the stand-alone stages") {
    RngState rng{53};
    std::vector<double> column(64);
    for (double& v : column) v = rng_next_uniform(rng);
    NormScales scales;
    for (std::size_t k = 0; k < kSpectralDim; ++k) scales.scale[k] = 0.1 + 0.05 * double(k);
    const double gamma = default_gamma();
    const std::size_t oldness = 96;

    const auto [fv, ema] = build_features(column, EmaState{}, oldness, scales, gamma);

    const auto frames = stft_magnitudes(column, 32, 16);
    const EmaState want_ema = ema_reduce(frames, gamma, EmaState{});
    const auto pos = sinusoidal_embedding(double(oldness), kPositionalDim, kPositionalBase);
    for (std::size_t k = 0; k < kSpectralDim; ++k) {
        CHECK(fv.v[k] == want_ema.reduced[k] * scales.scale[k]);
        CHECK(ema.reduced[k] == want_ema.reduced[k]);
    }
    for (std::size_t k = 0; k < kPositionalDim; ++k) {
        CHECK(fv.v[kSpectralDim + k] == pos[k]);
    }
}

TEST_CASE("positional block depends only on oldness") {
    RngState rng{59};
    std::vector<double> a(32), b(32);
    for (double& v : a) v = rng_next_uniform(rng);
    for (double& v : b) v = rng_next_uniform(rng);
    const auto [fa, ea] = build_features(a, EmaState{}, 7, NormScales{}, default_gamma());
    const auto [fb, eb] = build_features(b, EmaState{}, 7, NormScales{}, default_gamma());
    for (std::size_t k = kSpectralDim; k < kFeatureDim; ++k) CHECK(fa.v[k] == fb.v[k]);
    CHECK(kFeatureDim == 25);
}
