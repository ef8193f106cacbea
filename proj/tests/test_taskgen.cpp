#include <doctest.h>

#include <algorithm>
#include <vector>

#include "nammkit/taskgen.hpp"

using namespace nammkit;

namespace {

std::size_t find_marker(const std::vector<Token>& t, Token marker) {
    const auto it = std::find(t.begin(), t.end(), marker);
    REQUIRE(it != t.end());
    return std::size_t(it - t.begin());
}

std::size_t count_token(const std::vector<Token>& t, Token marker, std::size_t end) {
    return std::size_t(std::count(t.begin(), t.begin() + std::ptrdiff_t(end), marker));
}

}  // namespace

TEST_CASE("passkey layout and uniqueness") {
    TaskConfig cfg;
    cfg.kind = TaskKind::Passkey;
    cfg.length = 128;
    cfg.key_length = 4;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        RngState rng{seed};
        const PromptSample s = gen_passkey(cfg, rng);
        CHECK(s.answer_start == cfg.length);
        CHECK(s.answer_end == cfg.length + cfg.key_length);
        CHECK(s.tokens[cfg.length - 1] == kQueryMarker);
        CHECK(s.metric == Metric::ExactMatch);

        // Exactly one key marker, and the answer equals the tokens after it.
        CHECK(count_token(s.tokens, kKeyMarker, s.answer_start) == 1);
        const std::size_t at = find_marker(s.tokens, kKeyMarker);
        const auto answer = s.answer();
        for (std::size_t i = 0; i < cfg.key_length; ++i) {
            CHECK(s.tokens[at + 1 + i] == answer[i]);
            CHECK(answer[i] >= kFillerLow);
            CHECK(answer[i] <= kFillerHigh);
        }
        // The key sequence occurs only once in the body.
        std::size_t occurrences = 0;
        for (std::size_t i = 0; i + answer.size() <= s.answer_start - 1; ++i) {
            if (std::equal(answer.begin(), answer.end(), s.tokens.begin() + std::ptrdiff_t(i))) {
                ++occurrences;
            }
        }
        CHECK(occurrences == 1);
    }
}

TEST_CASE("passkey marker position is roughly uniform") {
    TaskConfig cfg;
    cfg.kind = TaskKind::Passkey;
    cfg.length = 128;
    cfg.key_length = 4;
    const std::size_t body_len = cfg.length - 1;
    const std::size_t max_offset = body_len - (cfg.key_length + 1);  // inclusive

    constexpr std::size_t kBuckets = 8;
    constexpr std::size_t kSamples = 2000;
    std::vector<std::size_t> counts(kBuckets, 0);
    for (std::uint64_t seed = 0; seed < kSamples; ++seed) {
        RngState rng{seed * 977 + 5};
        const PromptSample s = gen_passkey(cfg, rng);
        const std::size_t off = find_marker(s.tokens, kKeyMarker);
        CHECK(off <= max_offset);
        counts[off * kBuckets / (max_offset + 1)] += 1;
    }
    const double expect = double(kSamples) / double(kBuckets);
    double chi2 = 0.0;
    for (std::size_t c : counts) {
        const double d = double(c) - expect;
        chi2 += d * d / expect;
    }
    // df = 7; 40 is far beyond the 0.001 critical value (~24.3), so only a
    // grossly non-uniform generator fails here.
    CHECK(chi2 < 40.0);
}

TEST_CASE("dedup qa plants the fact exactly n times") {
    TaskConfig cfg;
    cfg.kind = TaskKind::DedupQA;
    cfg.length = 160;
    cfg.n_duplicates = 4;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        RngState rng{seed};
        const PromptSample s = gen_dedup_qa(cfg, rng);
        CHECK(s.tokens.size() == cfg.length + 1);  // prompt + one answer token
        CHECK(s.answer_start == cfg.length);
        CHECK(s.answer_end == cfg.length + 1);
        CHECK(s.tokens[cfg.length - 2] == kQueryMarker);

        const Token subject = s.tokens[cfg.length - 1];
        const Token value = s.tokens[cfg.length];
        CHECK(subject >= kFillerLow);
        CHECK(value >= kFillerLow);

        // Fact markers only appear at planted offsets (3 is reserved), and each
        // is followed by the same subject/value pair.
        CHECK(count_token(s.tokens, kFactMarker, s.answer_start) == cfg.n_duplicates);
        for (std::size_t i = 0; i + 2 < s.answer_start; ++i) {
            if (s.tokens[i] == kFactMarker) {
                CHECK(s.tokens[i + 1] == subject);
                CHECK(s.tokens[i + 2] == value);
            }
        }
    }
}

TEST_CASE("copy task span alphabet is disjoint from distractors") {
    TaskConfig cfg;
    cfg.kind = TaskKind::CopyDistractor;
    cfg.length = 96;
    cfg.key_length = 6;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        RngState rng{seed};
        const PromptSample s = gen_copy_distractor(cfg, rng);
        CHECK(s.metric == Metric::TokenAccuracy);
        CHECK(s.tokens[0] == kCopyBegin);
        CHECK(s.tokens[cfg.key_length + 1] == kCopyEnd);
        CHECK(s.tokens[cfg.length - 1] == kQueryMarker);
        const auto answer = s.answer();
        REQUIRE(answer.size() == cfg.key_length);
        for (std::size_t i = 0; i < cfg.key_length; ++i) {
            const Token t = s.tokens[1 + i];
            CHECK(t == answer[i]);
            CHECK(t >= 8);
            CHECK(t <= 35);
        }
        for (std::size_t i = cfg.key_length + 2; i + 1 < cfg.length - 1; ++i) {
            CHECK(s.tokens[i] >= 36);
            CHECK(s.tokens[i] <= 63);
        }
    }
}

TEST_CASE("generation is deterministic for a fixed seed") {
    for (TaskKind kind : {TaskKind::Passkey, TaskKind::DedupQA, TaskKind::CopyDistractor}) {
        TaskConfig cfg;
        cfg.kind = kind;
        cfg.length = 128;
        RngState a{99}, b{99};
        const PromptSample s1 = gen_sample(cfg, a);
        const PromptSample s2 = gen_sample(cfg, b);
        CHECK(s1.tokens == s2.tokens);
        CHECK(s1.answer_start == s2.answer_start);
        CHECK(s1.answer_end == s2.answer_end);
    }
}

TEST_CASE("score_sample exact match and token accuracy") {
    PromptSample s;
    s.tokens = {10, 11, kQueryMarker, 20, 21};
    s.answer_start = 3;
    s.answer_end = 5;
    s.metric = Metric::ExactMatch;
    CHECK(score_sample({20, 21}, s) == 1.0);
    CHECK(score_sample({20, 21, 30}, s) == 1.0);  // extra tokens beyond the answer ignored
    CHECK(score_sample({20, 22}, s) == 0.0);
    CHECK(score_sample({20}, s) == 0.0);  // too short

    s.metric = Metric::TokenAccuracy;
    CHECK(score_sample({20, 22}, s) == 0.5);
    CHECK(score_sample({20}, s) == 0.5);  // missing tokens count as wrong
    CHECK(score_sample({}, s) == 0.0);
    CHECK(score_sample({20, 21}, s) == 1.0);
}

TEST_CASE("make_eval_set is reproducible and namespace-disjoint") {
    TaskConfig cfg;
    cfg.kind = TaskKind::Passkey;
    cfg.length = 96;
    const auto a = make_eval_set(cfg, 16, 7);
    const auto b = make_eval_set(cfg, 16, 7);
    REQUIRE(a.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) CHECK(a[i].tokens == b[i].tokens);

    // Same seed, train namespace: different prompts.
    const auto train = make_eval_set(cfg, 16, 7, kTrainNamespace);
    std::size_t identical = 0;
    for (std::size_t i = 0; i < 16; ++i) {
        if (a[i].tokens == train[i].tokens) ++identical;
    }
    CHECK(identical == 0);

    CHECK_THROWS(make_eval_set(cfg, 0, 7));
}
