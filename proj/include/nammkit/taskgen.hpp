#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nammkit/numerics.hpp"
#include "nammkit/toy_lm.hpp"

namespace nammkit {

// Token id layout: ids 0..7 are reserved markers, filler comes from 8..63.
constexpr Token kKeyMarker = 1;
constexpr Token kQueryMarker = 2;
constexpr Token kFactMarker = 3;
constexpr Token kCopyBegin = 4;
constexpr Token kCopyEnd = 5;
constexpr Token kFillerLow = 8;
constexpr Token kFillerHigh = 63;  // inclusive

enum class TaskKind { Passkey, DedupQA, CopyDistractor };
enum class Metric { ExactMatch, TokenAccuracy };

struct PromptSample {
    std::vector<Token> tokens;       // prompt followed by the answer tokens
    std::size_t answer_start = 0;    // [answer_start, answer_end) within tokens
    std::size_t answer_end = 0;
    TaskKind task = TaskKind::Passkey;
    Metric metric = Metric::ExactMatch;

    std::vector<Token> prompt() const {
        return {tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(answer_start)};
    }
    std::vector<Token> answer() const {
        return {tokens.begin() + static_cast<std::ptrdiff_t>(answer_start),
                tokens.begin() + static_cast<std::ptrdiff_t>(answer_end)};
    }
};

struct TaskConfig {
    TaskKind kind = TaskKind::Passkey;
    std::size_t length = 256;      // total prompt length including framing
    std::size_t key_length = 4;    // Passkey / CopyDistractor span length
    std::size_t n_duplicates = 3;  // DedupQA
    std::uint64_t seed = 0;
};

PromptSample gen_passkey(const TaskConfig& cfg, RngState& rng);
PromptSample gen_dedup_qa(const TaskConfig& cfg, RngState& rng);
PromptSample gen_copy_distractor(const TaskConfig& cfg, RngState& rng);
PromptSample gen_sample(const TaskConfig& cfg, RngState& rng);

double score_sample(const std::vector<Token>& pred, const PromptSample& sample);

// Deterministic per-index seeds; train and eval draw from disjoint seed
// namespaces so evaluation prompts are held out by construction.
constexpr std::uint64_t kTrainNamespace = 0x745241494E534554ULL;
constexpr std::uint64_t kEvalNamespace = 0x4556414C53455421ULL;

std::vector<PromptSample> make_eval_set(const TaskConfig& cfg, std::size_t n, std::uint64_t seed,
                                        std::uint64_t seed_namespace = kEvalNamespace);

std::string task_name(TaskKind kind);
TaskKind task_from_name(const std::string& name);

}  // namespace nammkit
