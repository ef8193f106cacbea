#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "nammkit/taskgen.hpp"
#include "nammkit/toy_lm.hpp"

namespace nammkit {

struct TrainerConfig {
    LmConfig lm;
    TaskKind task = TaskKind::Passkey;
    std::vector<std::size_t> lengths = {64, 128, 256};
    std::size_t key_length = 4;
    std::size_t n_duplicates = 3;
    std::size_t steps = 2000;
    std::size_t batch_size = 16;
    double lr = 3e-4;
    double target_exact_match = 1.01;  // > 1 disables early stopping
    std::size_t eval_every = 100;      // also the log cadence
    std::size_t eval_samples = 32;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct TrainOutcome {
    LmWeights weights;
    double final_loss = 0.0;
    double final_exact_match = 0.0;
    std::size_t steps_run = 0;
};

// Masked next-token training on freshly sampled prompts (answer positions are
// the targets). Held-out accuracy uses greedy full-cache decoding on prompts
// from the training seed namespace with a distinct salt.
TrainOutcome train_lm(const TrainerConfig& cfg, std::ostream* log);

// Curriculum variant: continue optimizing from existing weights (fresh Adam
// state) instead of a fresh initialization.
TrainOutcome train_lm(const TrainerConfig& cfg, std::ostream* log, const LmWeights* start);

TrainSample to_train_sample(const PromptSample& s);

}  // namespace nammkit
