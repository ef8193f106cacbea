#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "nammkit/numerics.hpp"

namespace nammkit {

// Defaults from the feature-extraction pipeline: window 32, stride 16,
// 17 magnitude bins (0..Nyquist), gamma = 0.99^16.
constexpr std::size_t kWindowSize = 32;
constexpr std::size_t kStride = 16;
constexpr std::size_t kSpectralDim = kWindowSize / 2 + 1;
constexpr std::size_t kPositionalDim = 8;
constexpr std::size_t kFeatureDim = kSpectralDim + kPositionalDim;
constexpr double kPositionalBase = 1.0e4;
double default_gamma();  // 0.99^16

// One STFT frame: magnitudes for bins 0..n_w/2.
using SpectroFrame = std::vector<double>;

// Per-token EMA carry-over across update steps (omega-prime).
struct EmaState {
    std::vector<double> reduced = std::vector<double>(kSpectralDim, 0.0);
    std::size_t chunk_count = 0;
};

// 17 normalized spectral values followed by the 8 positional-oldness values.
struct FeatureVector {
    std::array<double, kFeatureDim> v{};
};

struct NormScales {
    std::array<double, kSpectralDim> scale;
    NormScales() { scale.fill(1.0); }
};

std::vector<double> hann_window(std::size_t n_w);

// Windowed real DFT magnitudes over hop-aligned frames. The signal is
// left-padded with n_w - s_w zeros so a length-L signal yields exactly
// L / s_w time-causal frames.
std::vector<SpectroFrame> stft_magnitudes(const std::vector<double>& signal, std::size_t n_w,
                                          std::size_t s_w);

// reduced = sum_t gamma^(nT-t) frame_t + gamma^nT * prev.reduced (t = 1..nT,
// newest frame discounted least) so chunked reduction equals a single pass.
EmaState ema_reduce(const std::vector<SpectroFrame>& frames, double gamma, const EmaState& prev);

// scale[k] = 1 / population std of dimension k, std clamped to [1e-6, 1e6].
NormScales calibrate_normalization(const std::vector<std::vector<double>>& feature_samples);

// Full per-token pipeline: STFT -> EMA -> normalization -> positional concat.
std::pair<FeatureVector, EmaState> build_features(const std::vector<double>& attn_column_chunk,
                                                  const EmaState& prev, std::size_t oldness,
                                                  const NormScales& scales, double gamma,
                                                  std::size_t n_w = kWindowSize,
                                                  std::size_t s_w = kStride);

}  // namespace nammkit
