#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "nammkit/cache.hpp"
#include "nammkit/numerics.hpp"

namespace nammkit {

using Token = std::int32_t;

struct LmConfig {
    std::size_t vocab = 64;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 4;
    std::size_t d_ff = 256;
    std::size_t max_context = 2048;

    std::size_t d_head() const { return d_model / n_heads; }
    void validate() const;
};

// Decoder block: pre-RMS (scale only) -> attention -> residual,
// pre-RMS -> relu FFN -> residual. No biases.
struct LayerWeights {
    std::vector<double> attn_norm;  // d
    Matrix wq, wk, wv, wo;          // d x d
    std::vector<double> ffn_norm;   // d
    Matrix w1;                      // d x d_ff
    Matrix w2;                      // d_ff x d
};

struct LmWeights {
    LmConfig cfg;
    Matrix tok_emb;  // vocab x d
    Matrix pos_emb;  // max_context x d (learned absolute, keyed to original index)
    std::vector<LayerWeights> layers;
    std::vector<double> final_norm;  // d
    Matrix w_out;                    // d x vocab

    static LmWeights zeros(const LmConfig& cfg);
    static LmWeights init(const LmConfig& cfg, RngState& rng, double scale = 0.02);
};

// Visits every tensor in checkpoint order; used by Adam, the gradient check
// and serialization so they can never disagree about the layout.
void for_each_tensor(LmWeights& w, const std::function<void(std::vector<double>&)>& fn);
void for_each_tensor_pair(LmWeights& a, LmWeights& b,
                          const std::function<void(std::vector<double>&, std::vector<double>&)>& fn);
std::size_t lm_param_count(const LmConfig& cfg);

struct AdamState {
    LmWeights m;  // first moments, same shape as the weights
    LmWeights v;  // second moments
    std::size_t step = 0;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState init(const LmConfig& cfg, double lr = 3e-4);
};

struct TrainSample {
    std::vector<Token> tokens;
    // loss_mask[i] = 1 means position i is a prediction target (from prefix
    // 0..i-1); index 0 is never a target.
    std::vector<std::uint8_t> loss_mask;
};

// Masked next-token cross-entropy plus hand-derived reverse-mode gradients.
double lm_loss_and_grad(const LmWeights& w, const TrainSample& sample, LmWeights* grad);

double train_step(LmWeights& w, const std::vector<TrainSample>& batch, AdamState& adam,
                  std::size_t workers = 1);

// Central finite differences against the analytic gradients over a random
// coordinate subsample; returns the max relative error.
double grad_check(const LmWeights& w, const TrainSample& sample, double epsilon,
                  std::size_t n_coords, RngState& rng);

struct ForwardResult {
    Matrix logits;             // chunk_len x vocab
    std::vector<Matrix> attn;  // n_layers * n_heads, each chunk_len x n_keys
    const Matrix& attn_at(const LmConfig& cfg, std::size_t layer, std::size_t head) const {
        return attn[layer * cfg.n_heads + head];
    }
};

// Causal attention against the retained cache plus the current chunk; appends
// the chunk's K/V to the cache. `positions` are original token indices and
// `step` is the total number of queries processed after this chunk.
ForwardResult forward_chunk(const LmWeights& w, KVCache& cache, const std::vector<Token>& tokens,
                            const std::vector<std::size_t>& positions, std::size_t step);

void save_lm(const LmWeights& w, const std::string& path);
LmWeights load_lm(const std::string& path);

}  // namespace nammkit
