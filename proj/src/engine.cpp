#include "nammkit/engine.hpp"

#include <algorithm>
#include <stdexcept>

#include "nammkit/binio.hpp"

namespace nammkit {

namespace {

Token argmax_row(const Matrix& logits, std::size_t row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols; ++j) {
        if (logits.at(row, j) > logits.at(row, best)) best = j;
    }
    return static_cast<Token>(best);
}

struct ChunkAccumulator {
    std::vector<std::vector<double>> rows;

    void add(const Matrix& attn) {
        for (std::size_t q = 0; q < attn.rows; ++q) {
            rows.emplace_back(attn.row(q), attn.row(q) + attn.cols);
        }
    }
    // Rows recorded earlier in the chunk are narrower (keys only grow between
    // updates); missing entries are causal zeros.
    Matrix assemble(std::size_t width) const {
        Matrix m(rows.size(), width);
        for (std::size_t q = 0; q < rows.size(); ++q) {
            std::copy(rows[q].begin(), rows[q].end(), m.row(q));
        }
        return m;
    }
};

}  // namespace

GenerateResult generate(const LmWeights& w, const EvictionPolicy& policy,
                        const std::vector<Token>& prompt, const GenerateOptions& opts) {
    if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
    if (opts.n_up == 0 || opts.n_up % kStride != 0 || opts.n_up < kWindowSize) {
        throw std::invalid_argument("generate: n_up must be a multiple of s_w and >= n_w");
    }
    const LmConfig& cfg = w.cfg;
    const double gamma = opts.gamma > 0.0 ? opts.gamma : default_gamma();
    const std::size_t n_lh = cfg.n_layers * cfg.n_heads;

    GenerateResult result;
    KVCache cache(cfg.n_layers, cfg.n_heads, cfg.d_head());
    std::vector<ChunkAccumulator> pending(n_lh);
    std::vector<FastGenStrategy> fastgen_choice(n_lh, FastGenStrategy::Full);
    bool fastgen_profiled = false;
    std::size_t step = 0;

    auto update_head = [&](std::size_t l, std::size_t h, const Matrix& chunk) {
        const std::size_t lh = l * cfg.n_heads + h;
        switch (policy.kind) {
            case PolicyKind::Full:
                break;
            case PolicyKind::Recency: {
                const std::size_t n = cache.at(l, h).size();
                if (policy.budget >= 1 && n > policy.budget) {
                    std::vector<bool> keep(n, false);
                    for (std::size_t i = n - policy.budget; i < n; ++i) keep[i] = true;
                    apply_retention(cache, l, h, keep);
                }
                break;
            }
            case PolicyKind::L2:
                l2_evict(cache, l, h, policy.budget);
                break;
            case PolicyKind::H2O:
                h2o_evict(cache, l, h, policy.budget, policy.recent_window);
                break;
            case PolicyKind::FastGenLite:
                if (!fastgen_profiled) {
                    fastgen_choice[lh] = fastgen_profile(chunk, policy.recency_ratio,
                                                         policy.attention_ratio,
                                                         policy.fastgen_threshold);
                }
                fastgen_apply(cache, l, h, fastgen_choice[lh], policy.recency_ratio,
                              policy.attention_ratio);
                break;
            case PolicyKind::Namm:
                namm_update(cache, l, h, chunk, policy.namm, gamma, step, opts.n_up);
                break;
        }
    };

    auto do_update = [&] {
        for (std::size_t l = 0; l < cfg.n_layers; ++l) {
            std::vector<Matrix> chunks(cfg.n_heads);
            for (std::size_t h = 0; h < cfg.n_heads; ++h) {
                const std::size_t lh = l * cfg.n_heads + h;
                chunks[h] = pending[lh].assemble(cache.at(l, h).size());
                if (opts.trace) opts.trace->add(l, h, chunks[h]);
            }
            if (policy.kind == PolicyKind::Namm && policy.average_heads) {
                // Ablation: heads of a layer share one retained set, decided by
                // the head-averaged scores. All heads see identical membership
                // by induction, so sizes agree.
                const std::size_t n = cache.at(l, 0).size();
                std::vector<double> avg(n, 0.0);
                std::vector<std::vector<EmaState>> emas(cfg.n_heads);
                for (std::size_t h = 0; h < cfg.n_heads; ++h) {
                    const auto scores = namm_scores(cache.at(l, h), chunks[h], policy.namm, gamma,
                                                    step, &emas[h]);
                    for (std::size_t i = 0; i < n; ++i) avg[i] += scores[i];
                }
                std::vector<bool> keep(n);
                for (std::size_t i = 0; i < n; ++i) {
                    avg[i] /= static_cast<double>(cfg.n_heads);
                    keep[i] = avg[i] + policy.namm.threshold_offset >= 0.0;
                }
                for (std::size_t h = 0; h < cfg.n_heads; ++h) {
                    HeadCache& hc = cache.at(l, h);
                    for (std::size_t i = 0; i < n; ++i) {
                        hc.meta[i].last_score = avg[i];
                        hc.meta[i].ema = std::move(emas[h][i]);
                    }
                    apply_retention(cache, l, h, keep);
                }
            } else {
                for (std::size_t h = 0; h < cfg.n_heads; ++h) update_head(l, h, chunks[h]);
            }
            if (opts.record_retained) {
                for (std::size_t h = 0; h < cfg.n_heads; ++h) {
                    RetainedEvent ev;
                    ev.step = step;
                    ev.layer = l;
                    ev.head = h;
                    for (const TokenMeta& m : cache.at(l, h).meta) {
                        ev.retained_positions.push_back(m.original_position);
                    }
                    result.retained_events.push_back(std::move(ev));
                }
            }
        }
        if (policy.kind == PolicyKind::FastGenLite) fastgen_profiled = true;
        for (auto& acc : pending) acc.rows.clear();
    };

    auto process = [&](const std::vector<Token>& toks, std::size_t first_pos) -> Matrix {
        std::vector<std::size_t> positions(toks.size());
        for (std::size_t i = 0; i < toks.size(); ++i) positions[i] = first_pos + i;
        ForwardResult fr = forward_chunk(w, cache, toks, positions, step + toks.size());
        step += toks.size();
        for (std::size_t l = 0; l < cfg.n_layers; ++l) {
            for (std::size_t h = 0; h < cfg.n_heads; ++h) {
                const std::size_t lh = l * cfg.n_heads + h;
                pending[lh].add(fr.attn[lh]);
                accumulate_attention(cache, l, h, fr.attn[lh]);
            }
        }
        if (step % opts.n_up == 0) do_update();
        return std::move(fr.logits);
    };

    Matrix logits;
    std::size_t idx = 0;
    while (idx < prompt.size()) {
        const std::size_t m = std::min(opts.n_up, prompt.size() - idx);
        std::vector<Token> chunk(prompt.begin() + static_cast<std::ptrdiff_t>(idx),
                                 prompt.begin() + static_cast<std::ptrdiff_t>(idx + m));
        logits = process(chunk, idx);
        idx += m;
    }
    result.prompt_stats = stats(cache, step);

    if (opts.max_new > 0) {
        Token next = argmax_row(logits, logits.rows - 1);
        result.generated.push_back(next);
        std::size_t pos = prompt.size();
        while (result.generated.size() < opts.max_new) {
            logits = process({next}, pos);
            ++pos;
            next = argmax_row(logits, logits.rows - 1);
            result.generated.push_back(next);
        }
    }
    result.steps = step;
    if (opts.keep_cache) result.cache = std::move(cache);
    return result;
}

ReplayResult replay_trace(TraceReader& reader, const GenomePackage& pkg, double gamma,
                          std::size_t s_w) {
    if (gamma <= 0.0) gamma = default_gamma();
    struct HeadState {
        HeadCache hc;  // meta only; keys/values stay empty
        std::size_t step = 0;
        std::size_t next_position = 0;
    };
    std::vector<HeadState> states(reader.n_layers() * reader.n_heads());
    ReplayResult result;

    while (auto rec = reader.next()) {
        if (rec->attn.rows == 0 || rec->attn.rows % s_w != 0) {
            throw FormatError("trace replay: n_queries must be a positive multiple of s_w");
        }
        HeadState& st = states[rec->layer * reader.n_heads() + rec->head];
        if (rec->attn.cols < st.hc.meta.size()) {
            throw FormatError("trace replay: record has fewer keys than retained tokens");
        }
        const std::size_t step_after = st.step + rec->attn.rows;
        while (st.hc.meta.size() < rec->attn.cols) {
            TokenMeta m;
            m.original_position = st.next_position++;
            m.birth_step = step_after;
            st.hc.meta.push_back(std::move(m));
        }
        st.hc.total_appended = st.next_position;
        std::vector<EmaState> ema;
        const auto scores = namm_scores(st.hc, rec->attn, pkg, gamma, step_after, &ema);

        ReplayEvent ev;
        ev.layer = rec->layer;
        ev.head = rec->head;
        ev.step = step_after;
        ev.scores = scores;
        std::vector<TokenMeta> kept;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            result.all_scores.push_back(scores[i]);
            if (scores[i] + pkg.threshold_offset >= 0.0) {
                TokenMeta m = std::move(st.hc.meta[i]);
                m.ema = std::move(ema[i]);
                m.last_score = scores[i];
                ev.retained_positions.push_back(m.original_position);
                kept.push_back(std::move(m));
            }
        }
        st.hc.meta = std::move(kept);
        st.step = step_after;
        result.events.push_back(std::move(ev));
    }
    return result;
}

}  // namespace nammkit
