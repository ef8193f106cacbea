#include "nammkit/spectrogram.hpp"

#include <cmath>
#include <stdexcept>

namespace nammkit {

double default_gamma() { return std::pow(0.99, 16.0); }

std::vector<double> hann_window(std::size_t n_w) {
    if (n_w < 2) throw std::invalid_argument("hann_window: n_w must be >= 2");
    std::vector<double> w(n_w);
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (std::size_t k = 0; k < n_w; ++k) {
        w[k] = 0.5 * (1.0 - std::cos(two_pi * static_cast<double>(k) /
                                     static_cast<double>(n_w - 1)));
    }
    return w;
}

std::vector<SpectroFrame> stft_magnitudes(const std::vector<double>& signal, std::size_t n_w,
                                          std::size_t s_w) {
    if (signal.empty() || signal.size() % s_w != 0) {
        throw std::invalid_argument("stft_magnitudes: signal length must be a positive multiple of s_w");
    }
    if (n_w != 2 * s_w) {
        throw std::invalid_argument("stft_magnitudes: expected n_w = 2 * s_w");
    }
    const std::size_t n_frames = signal.size() / s_w;
    const std::size_t n_bins = n_w / 2 + 1;
    const std::size_t pad = n_w - s_w;
    const std::vector<double> window = hann_window(n_w);

    // Twiddle tables for the n_w-point DFT; n_w is tiny so a direct transform
    // is fine (and the tests keep an independent naive oracle anyway).
    constexpr double two_pi = 6.283185307179586476925286766559;
    std::vector<double> cos_tab(n_bins * n_w), sin_tab(n_bins * n_w);
    for (std::size_t n = 0; n < n_bins; ++n) {
        for (std::size_t k = 0; k < n_w; ++k) {
            const double ang = two_pi * static_cast<double>(n) * static_cast<double>(k) /
                               static_cast<double>(n_w);
            cos_tab[n * n_w + k] = std::cos(ang);
            sin_tab[n * n_w + k] = std::sin(ang);
        }
    }

    std::vector<SpectroFrame> frames(n_frames);
    std::vector<double> frame(n_w);
    for (std::size_t t = 0; t < n_frames; ++t) {
        // Frame t covers padded indices [t*s_w, t*s_w + n_w); padded index p
        // maps to signal index p - pad.
        for (std::size_t k = 0; k < n_w; ++k) {
            const std::size_t p = t * s_w + k;
            frame[k] = (p < pad) ? 0.0 : window[k] * signal[p - pad];
        }
        SpectroFrame mags(n_bins);
        for (std::size_t n = 0; n < n_bins; ++n) {
            double re = 0.0, im = 0.0;
            const double* ct = cos_tab.data() + n * n_w;
            const double* st = sin_tab.data() + n * n_w;
            for (std::size_t k = 0; k < n_w; ++k) {
                re += frame[k] * ct[k];
                im -= frame[k] * st[k];
            }
            mags[n] = std::hypot(re, im);
        }
        frames[t] = std::move(mags);
    }
    return frames;
}

EmaState ema_reduce(const std::vector<SpectroFrame>& frames, double gamma, const EmaState& prev) {
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw std::invalid_argument("ema_reduce: gamma must be in (0, 1]");
    }
    if (frames.empty()) return prev;
    const std::size_t dim = frames.front().size();
    EmaState out;
    out.reduced.assign(dim, 0.0);
    // Newest frame carries weight gamma^0 and weights decay into the past;
    // this is the only direction under which reducing a frame sequence in
    // chunks (carrying prev) equals a single pass.
    double g = 1.0;
    for (auto it = frames.rbegin(); it != frames.rend(); ++it) {
        if (it->size() != dim) throw std::invalid_argument("ema_reduce: inconsistent frame size");
        for (std::size_t k = 0; k < dim; ++k) out.reduced[k] += g * (*it)[k];
        g *= gamma;
    }
    // g is now gamma^nT; fold in the previous execution step's reduction.
    if (prev.reduced.size() == dim) {
        for (std::size_t k = 0; k < dim; ++k) out.reduced[k] += g * prev.reduced[k];
    }
    out.chunk_count = prev.chunk_count + 1;
    return out;
}

NormScales calibrate_normalization(const std::vector<std::vector<double>>& feature_samples) {
    if (feature_samples.size() < 2) {
        throw std::invalid_argument("calibrate_normalization: need >= 2 samples");
    }
    NormScales scales;
    const std::size_t n = feature_samples.size();
    for (std::size_t k = 0; k < kSpectralDim; ++k) {
        double mean = 0.0;
        for (const auto& s : feature_samples) mean += s.at(k);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& s : feature_samples) {
            const double d = s.at(k) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        double sd = std::sqrt(var);
        if (sd < 1e-6) sd = 1e-6;
        if (sd > 1e6) sd = 1e6;
        scales.scale[k] = 1.0 / sd;
    }
    return scales;
}

std::pair<FeatureVector, EmaState> build_features(const std::vector<double>& attn_column_chunk,
                                                  const EmaState& prev, std::size_t oldness,
                                                  const NormScales& scales, double gamma,
                                                  std::size_t n_w, std::size_t s_w) {
    const auto frames = stft_magnitudes(attn_column_chunk, n_w, s_w);
    EmaState ema = ema_reduce(frames, gamma, prev);

    FeatureVector fv;
    for (std::size_t k = 0; k < kSpectralDim; ++k) {
        fv.v[k] = ema.reduced[k] * scales.scale[k];
    }
    const auto pos = sinusoidal_embedding(static_cast<double>(oldness), kPositionalDim,
                                          kPositionalBase);
    for (std::size_t k = 0; k < kPositionalDim; ++k) fv.v[kSpectralDim + k] = pos[k];
    return {fv, ema};
}

}  // namespace nammkit
