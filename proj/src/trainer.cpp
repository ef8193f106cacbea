#include "nammkit/trainer.hpp"

#include <ostream>
#include <stdexcept>

#include "nammkit/eval.hpp"

namespace nammkit {

namespace {

constexpr std::uint64_t kTrainBatchSalt = 0x544C4D5F42415443ULL;
constexpr std::uint64_t kHeldOutSalt = 0x544C4D5F48454C44ULL;

}  // namespace

TrainSample to_train_sample(const PromptSample& s) {
    TrainSample t;
    t.tokens = s.tokens;
    t.loss_mask.assign(s.tokens.size(), 0);
    for (std::size_t i = s.answer_start; i < s.answer_end; ++i) t.loss_mask[i] = 1;
    return t;
}

TrainOutcome train_lm(const TrainerConfig& cfg, std::ostream* log) {
    return train_lm(cfg, log, nullptr);
}

TrainOutcome train_lm(const TrainerConfig& cfg, std::ostream* log, const LmWeights* start) {
    if (cfg.lengths.empty()) throw std::invalid_argument("train_lm: no lengths");
    cfg.lm.validate();

    RngState init_rng = derive_rng(cfg.seed, 0x1);
    TrainOutcome out;
    out.weights = start ? *start : LmWeights::init(cfg.lm, init_rng);
    AdamState adam = AdamState::init(cfg.lm, cfg.lr);

    std::vector<PromptSample> heldout;
    {
        TaskConfig tc;
        tc.kind = cfg.task;
        tc.length = cfg.lengths.back();
        tc.key_length = cfg.key_length;
        tc.n_duplicates = cfg.n_duplicates;
        heldout = make_eval_set(tc, cfg.eval_samples, cfg.seed ^ kHeldOutSalt, kTrainNamespace);
    }
    EvalConfig ec;
    ec.workers = cfg.workers;

    auto heldout_em = [&]() {
        return evaluate_policy(out.weights, EvictionPolicy{}, heldout, ec).mean_score;
    };

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        RngState rng = derive_rng(cfg.seed ^ kTrainBatchSalt, step);
        std::vector<TrainSample> batch;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            TaskConfig tc;
            tc.kind = cfg.task;
            tc.length = cfg.lengths[rng_next_u64(rng) % cfg.lengths.size()];
            tc.key_length = cfg.key_length;
            tc.n_duplicates = cfg.n_duplicates;
            batch.push_back(to_train_sample(gen_sample(tc, rng)));
        }
        out.final_loss = train_step(out.weights, batch, adam, cfg.workers);
        out.steps_run = step + 1;

        if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.steps) {
            out.final_exact_match = heldout_em();
            if (log) {
                *log << "train-lm: step " << (step + 1) << " loss " << out.final_loss
                     << " heldout_em " << out.final_exact_match << std::endl;
            }
            if (out.final_exact_match >= cfg.target_exact_match) break;
        }
    }
    if (out.final_exact_match == 0.0 && cfg.steps > 0) out.final_exact_match = heldout_em();
    return out;
}

}  // namespace nammkit
