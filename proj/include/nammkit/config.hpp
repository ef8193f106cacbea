#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nammkit/evolve.hpp"
#include "nammkit/taskgen.hpp"
#include "nammkit/toy_lm.hpp"

namespace nammkit {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// JSON run configuration with sections {lm, tasks, policy, evolution, io}.
// Unknown keys are rejected; absent keys take the defaults below.
struct PolicyConfig {
    std::string kind = "full";  // full | recency | l2 | h2o | fastgen | namm
    std::size_t budget = 0;
    std::size_t recent_window = 0;
    double fastgen_threshold = 0.999;
    double recency_ratio = 0.3;
    double attention_ratio = 0.3;
    double threshold_offset = 0.0;
    bool average_heads = false;
    std::string genome_path;
    std::size_t n_up = 512;
    double gamma = 0.0;  // <= 0: default 0.99^16
};

struct EvolutionConfig {
    std::string arch = "bam";
    std::size_t popsize = 32;
    double sigma0 = 0.65;
    double elite_ratio = 0.5;
    std::size_t batch_per_task = 64;
    std::size_t eval_per_task = 32;
    std::size_t calib_per_task = 8;
    double max_cache_fraction = 1.0;  // best-checkpoint eligibility cap
    std::vector<std::size_t> phase_generations;  // one entry per phase
    std::vector<std::vector<std::string>> phase_tasks;
};

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch_size = 16;
    double lr = 3e-4;
    std::vector<std::size_t> lengths = {64, 128, 256};
    std::string task = "passkey";
    std::size_t key_length = 4;
    std::size_t n_duplicates = 3;
    std::size_t log_every = 50;
};

struct IoConfig {
    std::string out_dir = "out";
    std::string lm_checkpoint;
};

struct RunConfig {
    LmConfig lm;
    std::vector<TaskConfig> tasks;
    PolicyConfig policy;
    EvolutionConfig evolution;
    TrainConfig train;
    IoConfig io;
    std::uint64_t seed = 0;
    std::size_t eval_samples = 32;
    std::size_t workers = 0;  // 0: default_workers()
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& json_text);

EvictionPolicy build_policy(const PolicyConfig& pc);
EvolveConfig build_evolve_config(const RunConfig& rc);

}  // namespace nammkit
