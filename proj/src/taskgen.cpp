#include "nammkit/taskgen.hpp"

#include <algorithm>
#include <stdexcept>

namespace nammkit {

namespace {

Token rand_filler(RngState& rng, Token lo = kFillerLow, Token hi = kFillerHigh) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<Token>(rng_next_u64(rng) % span);
}

std::size_t rand_index(RngState& rng, std::size_t bound) {  // [0, bound)
    return static_cast<std::size_t>(rng_next_u64(rng) % bound);
}

std::size_t count_occurrences(const std::vector<Token>& haystack, const std::vector<Token>& needle,
                              std::size_t end) {
    std::size_t count = 0;
    if (needle.empty() || end < needle.size()) return 0;
    for (std::size_t i = 0; i + needle.size() <= end; ++i) {
        if (std::equal(needle.begin(), needle.end(), haystack.begin() + static_cast<std::ptrdiff_t>(i))) {
            ++count;
        }
    }
    return count;
}

}  // namespace

PromptSample gen_passkey(const TaskConfig& cfg, RngState& rng) {
    const std::size_t block = cfg.key_length + 1;  // marker + key
    if (cfg.length < block + 2) throw std::invalid_argument("gen_passkey: length too short");
    const std::size_t body_len = cfg.length - 1;  // trailing query marker

    PromptSample s;
    s.task = TaskKind::Passkey;
    s.metric = Metric::ExactMatch;
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<Token> key(cfg.key_length);
        for (Token& t : key) t = rand_filler(rng);
        const std::size_t offset = rand_index(rng, body_len - block + 1);
        std::vector<Token> body(body_len);
        for (Token& t : body) t = rand_filler(rng);
        body[offset] = kKeyMarker;
        std::copy(key.begin(), key.end(), body.begin() + static_cast<std::ptrdiff_t>(offset + 1));
        // The key sequence must be retrievable unambiguously; filler collisions
        // are rare, just redraw.
        if (count_occurrences(body, key, body.size()) != 1) continue;
        s.tokens = std::move(body);
        s.tokens.push_back(kQueryMarker);
        s.answer_start = s.tokens.size();
        s.tokens.insert(s.tokens.end(), key.begin(), key.end());
        s.answer_end = s.tokens.size();
        return s;
    }
    throw std::runtime_error("gen_passkey: could not place a unique key");
}

PromptSample gen_dedup_qa(const TaskConfig& cfg, RngState& rng) {
    if (cfg.n_duplicates < 2) throw std::invalid_argument("gen_dedup_qa: n_duplicates must be >= 2");
    const std::size_t body_len = cfg.length - 2;  // query marker + subject
    if (body_len < 3 * cfg.n_duplicates + 1) {
        throw std::invalid_argument("gen_dedup_qa: length too short");
    }
    const Token subject = rand_filler(rng);
    const Token value = rand_filler(rng);

    // Non-overlapping slots for the duplicated fact sentence.
    std::vector<std::size_t> offsets;
    for (int attempt = 0; attempt < 256; ++attempt) {
        offsets.clear();
        for (std::size_t i = 0; i < cfg.n_duplicates; ++i) {
            offsets.push_back(rand_index(rng, body_len - 2));
        }
        std::sort(offsets.begin(), offsets.end());
        bool ok = true;
        for (std::size_t i = 1; i < offsets.size(); ++i) {
            if (offsets[i] - offsets[i - 1] < 3) ok = false;
        }
        if (ok) break;
        offsets.clear();
    }
    if (offsets.empty()) throw std::runtime_error("gen_dedup_qa: could not place facts");

    PromptSample s;
    s.task = TaskKind::DedupQA;
    s.metric = Metric::ExactMatch;
    s.tokens.resize(body_len);
    for (Token& t : s.tokens) t = rand_filler(rng);
    for (std::size_t off : offsets) {
        s.tokens[off] = kFactMarker;
        s.tokens[off + 1] = subject;
        s.tokens[off + 2] = value;
    }
    s.tokens.push_back(kQueryMarker);
    s.tokens.push_back(subject);
    s.answer_start = s.tokens.size();
    s.tokens.push_back(value);
    s.answer_end = s.tokens.size();
    return s;
}

PromptSample gen_copy_distractor(const TaskConfig& cfg, RngState& rng) {
    const std::size_t framing = cfg.key_length + 3;  // begin + span + end ... query
    if (cfg.length < framing + 1) throw std::invalid_argument("gen_copy_distractor: length too short");

    PromptSample s;
    s.task = TaskKind::CopyDistractor;
    s.metric = Metric::TokenAccuracy;
    std::vector<Token> span(cfg.key_length);
    for (Token& t : span) t = rand_filler(rng, 8, 35);  // disjoint from distractors
    s.tokens.push_back(kCopyBegin);
    s.tokens.insert(s.tokens.end(), span.begin(), span.end());
    s.tokens.push_back(kCopyEnd);
    while (s.tokens.size() < cfg.length - 1) s.tokens.push_back(rand_filler(rng, 36, 63));
    s.tokens.push_back(kQueryMarker);
    s.answer_start = s.tokens.size();
    s.tokens.insert(s.tokens.end(), span.begin(), span.end());
    s.answer_end = s.tokens.size();
    return s;
}

PromptSample gen_sample(const TaskConfig& cfg, RngState& rng) {
    switch (cfg.kind) {
        case TaskKind::Passkey:
            return gen_passkey(cfg, rng);
        case TaskKind::DedupQA:
            return gen_dedup_qa(cfg, rng);
        case TaskKind::CopyDistractor:
            return gen_copy_distractor(cfg, rng);
    }
    throw std::invalid_argument("gen_sample: unknown task kind");
}

double score_sample(const std::vector<Token>& pred, const PromptSample& sample) {
    const auto answer = sample.answer();
    if (answer.empty()) return 0.0;
    if (sample.metric == Metric::ExactMatch) {
        if (pred.size() < answer.size()) return 0.0;
        return std::equal(answer.begin(), answer.end(), pred.begin()) ? 1.0 : 0.0;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < answer.size(); ++i) {
        if (i < pred.size() && pred[i] == answer[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(answer.size());
}

std::vector<PromptSample> make_eval_set(const TaskConfig& cfg, std::size_t n, std::uint64_t seed,
                                        std::uint64_t seed_namespace) {
    if (n < 1) throw std::invalid_argument("make_eval_set: n must be >= 1");
    std::vector<PromptSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RngState rng{(seed ^ seed_namespace) ^ (static_cast<std::uint64_t>(i) * 0x9E3779B97F4A7C15ULL)};
        rng_next_u64(rng);  // decorrelate nearby seeds
        out.push_back(gen_sample(cfg, rng));
    }
    return out;
}

std::string task_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::Passkey:
            return "passkey";
        case TaskKind::DedupQA:
            return "dedup_qa";
        case TaskKind::CopyDistractor:
            return "copy_distractor";
    }
    return "unknown";
}

TaskKind task_from_name(const std::string& name) {
    if (name == "passkey") return TaskKind::Passkey;
    if (name == "dedup_qa") return TaskKind::DedupQA;
    if (name == "copy_distractor") return TaskKind::CopyDistractor;
    throw std::invalid_argument("unknown task: " + name);
}

}  // namespace nammkit
