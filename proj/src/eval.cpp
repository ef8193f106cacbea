#include "nammkit/eval.hpp"

#include <iostream>
#include <memory>
#include <stdexcept>

#include "nammkit/parallel.hpp"

namespace nammkit {

TaskEvalResult evaluate_policy(const LmWeights& w, const EvictionPolicy& policy,
                               const std::vector<PromptSample>& samples, const EvalConfig& cfg) {
    TaskEvalResult result;
    result.samples.resize(samples.size());
    parallel_for(samples.size(), cfg.workers, [&](std::size_t i) {
        const PromptSample& sample = samples[i];
        GenerateOptions opts;
        opts.n_up = cfg.n_up;
        opts.gamma = cfg.gamma;
        opts.max_new = sample.answer_end - sample.answer_start;
        opts.record_retained = cfg.record_retained;
        std::unique_ptr<TraceWriter> trace;
        if (!cfg.trace_path.empty()) {
            trace = std::make_unique<TraceWriter>(cfg.trace_path + "." + std::to_string(i),
                                                  w.cfg.n_layers, w.cfg.n_heads);
            opts.trace = trace.get();
        }
        GenerateResult gen = generate(w, policy, sample.prompt(), opts);
        if (trace) trace->close();
        SampleEval& out = result.samples[i];
        out.score = score_sample(gen.generated, sample);
        out.cache_fraction = gen.prompt_stats.mean_retained_fraction();
        out.prediction = std::move(gen.generated);
        out.retained_events = std::move(gen.retained_events);
        out.stats = std::move(gen.prompt_stats);
    });
    double score_sum = 0.0, frac_sum = 0.0;
    for (const SampleEval& s : result.samples) {
        score_sum += s.score;
        frac_sum += s.cache_fraction;
    }
    const double n = static_cast<double>(samples.size());
    if (!samples.empty()) {
        result.mean_score = score_sum / n;
        result.mean_cache_fraction = frac_sum / n;
    }
    return result;
}

NormScales calibrate_scales(const LmWeights& w, const std::vector<PromptSample>& samples,
                            const EvalConfig& cfg) {
    if (samples.empty()) throw std::invalid_argument("calibrate_scales: no samples");
    // Zero genome: every score is 0, nothing is evicted, but the EMA-reduced
    // spectra are still produced for every retained token.
    EvictionPolicy policy;
    policy.kind = PolicyKind::Namm;
    policy.namm.genome.arch = ArchId::Bam;
    policy.namm.genome.params.assign(param_count(ArchId::Bam), 0.0);

    std::vector<std::vector<std::vector<double>>> per_sample(samples.size());
    parallel_for(samples.size(), cfg.workers, [&](std::size_t i) {
        GenerateOptions opts;
        opts.n_up = cfg.n_up;
        opts.gamma = cfg.gamma;
        opts.max_new = 0;
        opts.keep_cache = true;
        GenerateResult gen = generate(w, policy, samples[i].prompt(), opts);
        for (const HeadCache& hc : gen.cache.heads) {
            for (const TokenMeta& meta : hc.meta) {
                if (meta.ema.chunk_count == 0) continue;  // never reached an update
                per_sample[i].push_back(meta.ema.reduced);
            }
        }
    });
    std::vector<std::vector<double>> collected;
    for (auto& chunk : per_sample) {
        collected.insert(collected.end(), chunk.begin(), chunk.end());
    }
    if (collected.empty()) {
        throw std::runtime_error("calibrate_scales: prompts shorter than one update interval");
    }
    return calibrate_normalization(collected);
}

double normalized_fitness(const std::vector<double>& candidate_means,
                          const std::vector<double>& base_means) {
    if (candidate_means.size() != base_means.size() || candidate_means.empty()) {
        throw std::invalid_argument("normalized_fitness: mismatched task counts");
    }
    double acc = 0.0;
    for (std::size_t t = 0; t < candidate_means.size(); ++t) {
        double base = base_means[t];
        if (base < 1e-6) {
            std::cerr << "fitness: base score " << base << " floored at 1e-6 for task index " << t
                      << "\n";
            base = 1e-6;
        }
        acc += candidate_means[t] / base;
    }
    return acc / static_cast<double>(candidate_means.size());
}

}  // namespace nammkit
