#pragma once

#include <cstddef>
#include <vector>

#include "nammkit/cache.hpp"
#include "nammkit/toy_lm.hpp"
#include "nammkit/trace.hpp"

namespace nammkit {

struct GenerateOptions {
    std::size_t n_up = 512;
    double gamma = 0.0;  // <= 0 means default_gamma()
    std::size_t max_new = 0;
    TraceWriter* trace = nullptr;    // chunk matrices, written before eviction
    bool record_retained = false;    // collect per-update retained sets
    bool keep_cache = false;         // move the final cache into the result
};

struct RetainedEvent {
    std::size_t step = 0;
    std::size_t layer = 0;
    std::size_t head = 0;
    std::vector<std::size_t> retained_positions;
};

struct GenerateResult {
    std::vector<Token> generated;
    CacheStats prompt_stats;  // captured after the prompt is consumed
    std::vector<RetainedEvent> retained_events;
    KVCache cache;
    std::size_t steps = 0;
};

// Greedy decoding with the eviction policy applied at every step multiple of
// n_up (baselines run at the same cadence so cache sizes compare like for
// like). Deterministic given weights + prompt + policy.
GenerateResult generate(const LmWeights& w, const EvictionPolicy& policy,
                        const std::vector<Token>& prompt, const GenerateOptions& opts);

// Offline replay of the NAMM feature/score/evict path over a recorded
// attention trace; no model execution.
struct ReplayEvent {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t step = 0;  // per-(layer, head) query count after this record
    std::vector<double> scores;
    std::vector<std::size_t> retained_positions;
};

struct ReplayResult {
    std::vector<ReplayEvent> events;
    std::vector<double> all_scores;
};

ReplayResult replay_trace(TraceReader& reader, const GenomePackage& pkg, double gamma,
                          std::size_t s_w = kStride);

}  // namespace nammkit
