#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nammkit/cache.hpp"
#include "nammkit/engine.hpp"
#include "nammkit/taskgen.hpp"
#include "nammkit/toy_lm.hpp"

namespace nammkit {

struct EvalConfig {
    std::size_t n_up = 512;
    double gamma = 0.0;  // <= 0 means default
    std::size_t workers = 1;
    std::string trace_path;       // non-empty: export one ATRC stream per sample
    bool record_retained = false;
};

struct SampleEval {
    double score = 0.0;
    double cache_fraction = 1.0;
    std::vector<Token> prediction;
    std::vector<RetainedEvent> retained_events;
    CacheStats stats;  // end-of-prompt per-head retention
};

struct TaskEvalResult {
    double mean_score = 0.0;
    double mean_cache_fraction = 1.0;
    std::vector<SampleEval> samples;
};

// Greedy-decodes each sample's answer span under the policy and scores it.
// Sample i's trace (if requested) goes to <trace_path>.<i>.
TaskEvalResult evaluate_policy(const LmWeights& w, const EvictionPolicy& policy,
                               const std::vector<PromptSample>& samples, const EvalConfig& cfg);

// Runs the feature pipeline under full retention (zero genome) and fits the
// per-dimension normalization scales on the collected EMA-reduced vectors.
NormScales calibrate_scales(const LmWeights& w, const std::vector<PromptSample>& samples,
                            const EvalConfig& cfg);

// fitness = mean over tasks of candidate mean / base mean; zero base means
// are floored at 1e-6 (flagged on stderr).
double normalized_fitness(const std::vector<double>& candidate_means,
                          const std::vector<double>& base_means);

}  // namespace nammkit
