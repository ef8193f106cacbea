#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nammkit/cma.hpp"
#include "nammkit/eval.hpp"
#include "nammkit/memory_model.hpp"
#include "nammkit/taskgen.hpp"
#include "nammkit/toy_lm.hpp"

namespace nammkit {

struct PhaseSpec {
    std::vector<TaskConfig> tasks;  // later phases normally extend earlier ones
    std::size_t generations = 0;
};

struct EvolveConfig {
    ArchId arch = ArchId::Bam;
    std::vector<PhaseSpec> phases;
    std::size_t popsize = 32;
    double sigma0 = 0.65;
    double elite_ratio = 0.5;
    std::size_t batch_per_task = 64;  // fresh per-generation prompts, shared by candidates
    std::size_t eval_per_task = 32;   // fixed validation batch for the mean genome
    std::size_t calib_per_task = 8;   // prompts used to fit normalization scales
    // Generations whose mean-genome validation cache fraction exceeds this cap
    // are not eligible to become the best checkpoint (fitness is unaffected).
    double max_cache_fraction = 1.0;
    std::size_t n_up = 512;
    double gamma = 0.0;  // <= 0 means default
    double threshold_offset = 0.0;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string out_dir;  // empty: no artifacts, no resume
};

struct GenerationRecord {
    std::size_t phase = 0;
    std::size_t generation = 0;  // global index across phases
    double pop_mean = 0.0;
    double pop_std = 0.0;
    std::vector<double> mean_genome_task_scores;  // normalized, one per task
    double mean_cache_fraction = 1.0;
};

struct EvolveOutcome {
    GenomePackage best;
    double best_score = 0.0;          // normalized validation score of the best mean genome
    double best_cache_fraction = 1.0;
    std::vector<GenerationRecord> history;
};

// Incremental multi-phase evolution. Each phase starts CMA-ES from the best
// mean found so far; within a phase the best checkpoint is a running max over
// the per-generation mean-genome validation score. With out_dir set, the run
// persists curves.csv, cma_state.bin, best_genome.bin, manifest.json and a
// base-score cache, and resumes from the last persisted generation.
EvolveOutcome run_evolution(const LmWeights& lm, const EvolveConfig& cfg);

}  // namespace nammkit
