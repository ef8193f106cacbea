#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <vector>

#include "nammkit/memory_model.hpp"
#include "nammkit/numerics.hpp"
#include "nammkit/spectrogram.hpp"

namespace nammkit {

struct TokenMeta {
    std::size_t original_position = 0;
    std::size_t birth_step = 0;
    EmaState ema;
    // +inf sentinel until the first scoring pass.
    double last_score = std::numeric_limits<double>::infinity();
    double cum_attn = 0.0;  // running column sum over all attention seen (H2O)
};

struct HeadCache {
    Matrix keys;    // n x d_head
    Matrix values;  // n x d_head
    std::vector<TokenMeta> meta;
    std::size_t total_appended = 0;

    std::size_t size() const { return meta.size(); }
};

// One cache per sequence; eviction state is independent per (layer, head).
struct KVCache {
    std::size_t n_layers = 0;
    std::size_t n_heads = 0;
    std::size_t d_head = 0;
    std::vector<HeadCache> heads;

    KVCache() = default;
    KVCache(std::size_t layers, std::size_t heads_per_layer, std::size_t dim)
        : n_layers(layers), n_heads(heads_per_layer), d_head(dim),
          heads(layers * heads_per_layer) {}

    HeadCache& at(std::size_t layer, std::size_t head) { return heads[layer * n_heads + head]; }
    const HeadCache& at(std::size_t layer, std::size_t head) const {
        return heads[layer * n_heads + head];
    }
};

enum class PolicyKind { Full, Recency, L2, H2O, FastGenLite, Namm };

enum class FastGenStrategy { Full = 0, Recency = 1, TopAttention = 2, RecencyTopUnion = 3 };

struct EvictionPolicy {
    PolicyKind kind = PolicyKind::Full;
    std::size_t budget = 0;         // L2 / H2O / Recency
    std::size_t recent_window = 0;  // H2O
    double fastgen_threshold = 0.999;
    double recency_ratio = 0.3;
    double attention_ratio = 0.3;
    GenomePackage namm;             // genome + scales + threshold offset
    bool average_heads = false;     // ablation: one retained set per layer
};

struct HeadStats {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t retained = 0;
    std::size_t appended = 0;
    double mean_oldness = 0.0;
};

struct CacheStats {
    std::vector<HeadStats> per_head;
    double mean_retained_fraction() const;
};

void append(KVCache& cache, std::size_t layer, std::size_t head, const Matrix& key_rows,
            const Matrix& value_rows, std::size_t step);

// Adds this chunk's attention column sums to per-token accumulators (H2O).
void accumulate_attention(KVCache& cache, std::size_t layer, std::size_t head,
                          const Matrix& attn_chunk);

// Scores every token from its attention column (EMA carried in meta) without
// touching membership. Returns scores in cache order and the updated EMA
// states; namm_update applies them.
std::vector<double> namm_scores(const HeadCache& hc, const Matrix& attn_chunk,
                                const GenomePackage& pkg, double gamma, std::size_t step,
                                std::vector<EmaState>* out_ema);

// Algorithm step: feature -> score -> evict s + offset < 0. `step` must be a
// multiple of n_up. Returns evicted original positions.
std::vector<std::size_t> namm_update(KVCache& cache, std::size_t layer, std::size_t head,
                                     const Matrix& attn_chunk, const GenomePackage& pkg,
                                     double gamma, std::size_t step, std::size_t n_up);

// Applies an externally computed retained set (used by the head-averaged mode
// and trace replay). keep.size() must equal cache size.
std::vector<std::size_t> apply_retention(KVCache& cache, std::size_t layer, std::size_t head,
                                         const std::vector<bool>& keep);

// Evicts down to `budget` tokens by largest key-row L2 norm (low-norm keys are
// kept); ties evict the older token.
std::vector<std::size_t> l2_evict(KVCache& cache, std::size_t layer, std::size_t head,
                                  std::size_t budget);

// Keeps the recent_window newest tokens plus the heaviest cumulative-attention
// tokens up to budget; ties keep the newer token.
std::vector<std::size_t> h2o_evict(KVCache& cache, std::size_t layer, std::size_t head,
                                   std::size_t budget, std::size_t recent_window);

// Profiling step: among the strategies ordered by eviction count (most
// aggressive first), pick the first whose renormalized attention stays within
// mean per-query row-L2 error < 1 - T of the original; none -> Full.
FastGenStrategy fastgen_profile(const Matrix& attn, double recency_ratio, double attention_ratio,
                                double threshold);

std::vector<bool> fastgen_retained_set(const Matrix& attn, FastGenStrategy strategy,
                                       double recency_ratio, double attention_ratio);

std::vector<std::size_t> fastgen_apply(KVCache& cache, std::size_t layer, std::size_t head,
                                       FastGenStrategy strategy, double recency_ratio,
                                       double attention_ratio);

CacheStats stats(const KVCache& cache, std::size_t current_step);

// CSV columns: layer, head, token_position, birth_step, oldness, score, retained.
// Evicted tokens are gone from the cache, so rows cover the retained set.
void dump_retained_csv(const KVCache& cache, std::size_t current_step, std::ostream& os);

}  // namespace nammkit
