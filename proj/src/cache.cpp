#include "nammkit/cache.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace nammkit {

double CacheStats::mean_retained_fraction() const {
    if (per_head.empty()) return 1.0;
    double acc = 0.0;
    for (const auto& h : per_head) {
        acc += h.appended == 0 ? 1.0
                               : static_cast<double>(h.retained) / static_cast<double>(h.appended);
    }
    return acc / static_cast<double>(per_head.size());
}

void append(KVCache& cache, std::size_t layer, std::size_t head, const Matrix& key_rows,
            const Matrix& value_rows, std::size_t step) {
    HeadCache& hc = cache.at(layer, head);
    if (key_rows.rows != value_rows.rows || key_rows.cols != cache.d_head ||
        value_rows.cols != cache.d_head) {
        throw std::invalid_argument("append: key/value shape mismatch");
    }
    if (hc.keys.rows == 0) {
        hc.keys = Matrix(0, cache.d_head);
        hc.values = Matrix(0, cache.d_head);
    }
    hc.keys.data.insert(hc.keys.data.end(), key_rows.data.begin(), key_rows.data.end());
    hc.values.data.insert(hc.values.data.end(), value_rows.data.begin(), value_rows.data.end());
    hc.keys.rows += key_rows.rows;
    hc.values.rows += value_rows.rows;
    for (std::size_t i = 0; i < key_rows.rows; ++i) {
        TokenMeta m;
        m.original_position = hc.total_appended + i;
        m.birth_step = step;
        hc.meta.push_back(std::move(m));
    }
    hc.total_appended += key_rows.rows;
}

void accumulate_attention(KVCache& cache, std::size_t layer, std::size_t head,
                          const Matrix& attn_chunk) {
    HeadCache& hc = cache.at(layer, head);
    if (attn_chunk.cols != hc.size()) {
        throw std::invalid_argument("accumulate_attention: column/token misalignment");
    }
    for (std::size_t q = 0; q < attn_chunk.rows; ++q) {
        const double* row = attn_chunk.row(q);
        for (std::size_t i = 0; i < attn_chunk.cols; ++i) hc.meta[i].cum_attn += row[i];
    }
}

std::vector<double> namm_scores(const HeadCache& hc, const Matrix& attn_chunk,
                                const GenomePackage& pkg, double gamma, std::size_t step,
                                std::vector<EmaState>* out_ema) {
    const std::size_t n = hc.size();
    if (attn_chunk.cols != n) {
        throw std::invalid_argument("namm_scores: column/token misalignment");
    }
    Matrix features(n, kFeatureDim);
    if (out_ema) out_ema->resize(n);
    std::vector<double> column(attn_chunk.rows);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t q = 0; q < attn_chunk.rows; ++q) column[q] = attn_chunk.at(q, i);
        const std::size_t oldness = step - hc.meta[i].birth_step;
        auto [fv, ema] = build_features(column, hc.meta[i].ema, oldness, pkg.scales, gamma);
        for (std::size_t k = 0; k < kFeatureDim; ++k) features.at(i, k) = fv.v[k];
        if (out_ema) (*out_ema)[i] = std::move(ema);
    }
    return score(features, pkg.genome);
}

std::vector<std::size_t> apply_retention(KVCache& cache, std::size_t layer, std::size_t head,
                                         const std::vector<bool>& keep) {
    HeadCache& hc = cache.at(layer, head);
    if (keep.size() != hc.size()) throw std::invalid_argument("apply_retention: size mismatch");
    std::vector<std::size_t> evicted;
    std::size_t w = 0;
    const std::size_t d = hc.keys.cols;
    for (std::size_t i = 0; i < hc.size(); ++i) {
        if (!keep[i]) {
            evicted.push_back(hc.meta[i].original_position);
            continue;
        }
        if (w != i) {
            std::copy_n(hc.keys.row(i), d, hc.keys.row(w));
            std::copy_n(hc.values.row(i), d, hc.values.row(w));
            hc.meta[w] = std::move(hc.meta[i]);
        }
        ++w;
    }
    hc.meta.resize(w);
    hc.keys.rows = w;
    hc.values.rows = w;
    hc.keys.data.resize(w * d);
    hc.values.data.resize(w * d);
    return evicted;
}

std::vector<std::size_t> namm_update(KVCache& cache, std::size_t layer, std::size_t head,
                                     const Matrix& attn_chunk, const GenomePackage& pkg,
                                     double gamma, std::size_t step, std::size_t n_up) {
    if (n_up == 0 || step % n_up != 0) {
        throw std::invalid_argument("namm_update: step must be a multiple of n_up");
    }
    HeadCache& hc = cache.at(layer, head);
    std::vector<EmaState> ema;
    const std::vector<double> scores = namm_scores(hc, attn_chunk, pkg, gamma, step, &ema);
    const std::size_t n = hc.size();
    std::vector<bool> keep(n);
    for (std::size_t i = 0; i < n; ++i) {
        // Retain at s + offset >= 0 so the zero genome is neutral.
        keep[i] = scores[i] + pkg.threshold_offset >= 0.0;
        hc.meta[i].last_score = scores[i];
        hc.meta[i].ema = std::move(ema[i]);
    }
    return apply_retention(cache, layer, head, keep);
}

std::vector<std::size_t> l2_evict(KVCache& cache, std::size_t layer, std::size_t head,
                                  std::size_t budget) {
    if (budget < 1) throw std::invalid_argument("l2_evict: budget must be >= 1");
    HeadCache& hc = cache.at(layer, head);
    const std::size_t n = hc.size();
    if (n <= budget) return {};
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> norm(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        const double* row = hc.keys.row(i);
        for (std::size_t d = 0; d < hc.keys.cols; ++d) acc += row[d] * row[d];
        norm[i] = std::sqrt(acc);
    }
    // Evict the n - budget largest norms; on ties the older token goes first.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (norm[a] != norm[b]) return norm[a] > norm[b];
        return a < b;
    });
    std::vector<bool> keep(n, true);
    for (std::size_t r = 0; r < n - budget; ++r) keep[order[r]] = false;
    return apply_retention(cache, layer, head, keep);
}

std::vector<std::size_t> h2o_evict(KVCache& cache, std::size_t layer, std::size_t head,
                                   std::size_t budget, std::size_t recent_window) {
    if (budget < recent_window) throw std::invalid_argument("h2o_evict: budget < recent_window");
    HeadCache& hc = cache.at(layer, head);
    const std::size_t n = hc.size();
    if (n <= budget) return {};
    std::vector<bool> keep(n, false);
    for (std::size_t i = n - recent_window; i < n; ++i) keep[i] = true;
    const std::size_t n_old = n - recent_window;
    std::vector<std::size_t> order(n_old);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (hc.meta[a].cum_attn != hc.meta[b].cum_attn) {
            return hc.meta[a].cum_attn > hc.meta[b].cum_attn;
        }
        return a > b;  // ties keep the newer token
    });
    for (std::size_t r = 0; r < budget - recent_window && r < n_old; ++r) keep[order[r]] = true;
    return apply_retention(cache, layer, head, keep);
}

std::vector<bool> fastgen_retained_set(const Matrix& attn, FastGenStrategy strategy,
                                       double recency_ratio, double attention_ratio) {
    const std::size_t n = attn.cols;
    std::vector<bool> keep(n, false);
    const auto keep_recent = [&](std::vector<bool>& k) {
        const std::size_t m =
            std::min<std::size_t>(n, static_cast<std::size_t>(
                                         std::ceil(recency_ratio * static_cast<double>(n))));
        for (std::size_t i = n - m; i < n; ++i) k[i] = true;
    };
    const auto keep_top = [&](std::vector<bool>& k) {
        const std::size_t m =
            std::min<std::size_t>(n, static_cast<std::size_t>(
                                         std::ceil(attention_ratio * static_cast<double>(n))));
        std::vector<double> colsum(n, 0.0);
        for (std::size_t q = 0; q < attn.rows; ++q) {
            for (std::size_t i = 0; i < n; ++i) colsum[i] += attn.at(q, i);
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (colsum[a] != colsum[b]) return colsum[a] > colsum[b];
            return a > b;
        });
        for (std::size_t r = 0; r < m; ++r) k[order[r]] = true;
    };
    switch (strategy) {
        case FastGenStrategy::Full:
            keep.assign(n, true);
            break;
        case FastGenStrategy::Recency:
            keep_recent(keep);
            break;
        case FastGenStrategy::TopAttention:
            keep_top(keep);
            break;
        case FastGenStrategy::RecencyTopUnion:
            keep_recent(keep);
            keep_top(keep);
            break;
    }
    return keep;
}

namespace {

// Mean per-query row-L2 distance between A and A renormalized over the
// retained keys. Rows with no retained mass compare against an all-zero row.
double reconstruction_error(const Matrix& attn, const std::vector<bool>& keep) {
    double total = 0.0;
    for (std::size_t q = 0; q < attn.rows; ++q) {
        double mass = 0.0;
        for (std::size_t i = 0; i < attn.cols; ++i) {
            if (keep[i]) mass += attn.at(q, i);
        }
        double err2 = 0.0;
        for (std::size_t i = 0; i < attn.cols; ++i) {
            const double a = attn.at(q, i);
            const double rec = (keep[i] && mass > 0.0) ? a / mass : 0.0;
            err2 += (a - rec) * (a - rec);
        }
        total += std::sqrt(err2);
    }
    return attn.rows == 0 ? 0.0 : total / static_cast<double>(attn.rows);
}

}  // namespace

FastGenStrategy fastgen_profile(const Matrix& attn, double recency_ratio, double attention_ratio,
                                double threshold) {
    const FastGenStrategy order[] = {FastGenStrategy::Recency, FastGenStrategy::TopAttention,
                                     FastGenStrategy::RecencyTopUnion, FastGenStrategy::Full};
    struct Entry {
        FastGenStrategy s;
        std::size_t evicted;
        std::vector<bool> keep;
    };
    std::vector<Entry> entries;
    for (FastGenStrategy s : order) {
        auto keep = fastgen_retained_set(attn, s, recency_ratio, attention_ratio);
        const std::size_t kept = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
        entries.push_back({s, attn.cols - kept, std::move(keep)});
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.evicted > b.evicted; });
    for (const Entry& e : entries) {
        if (reconstruction_error(attn, e.keep) < 1.0 - threshold) return e.s;
    }
    return FastGenStrategy::Full;
}

std::vector<std::size_t> fastgen_apply(KVCache& cache, std::size_t layer, std::size_t head,
                                       FastGenStrategy strategy, double recency_ratio,
                                       double attention_ratio) {
    HeadCache& hc = cache.at(layer, head);
    const std::size_t n = hc.size();
    if (n == 0) return {};
    Matrix colsum_proxy(1, n);
    for (std::size_t i = 0; i < n; ++i) colsum_proxy.at(0, i) = hc.meta[i].cum_attn;
    auto keep = fastgen_retained_set(colsum_proxy, strategy, recency_ratio, attention_ratio);
    return apply_retention(cache, layer, head, keep);
}

CacheStats stats(const KVCache& cache, std::size_t current_step) {
    CacheStats out;
    for (std::size_t l = 0; l < cache.n_layers; ++l) {
        for (std::size_t h = 0; h < cache.n_heads; ++h) {
            const HeadCache& hc = cache.at(l, h);
            HeadStats hs;
            hs.layer = l;
            hs.head = h;
            hs.retained = hc.size();
            hs.appended = hc.total_appended;
            double oldness = 0.0;
            for (const TokenMeta& m : hc.meta) {
                oldness += static_cast<double>(current_step - m.birth_step);
            }
            hs.mean_oldness = hc.size() == 0 ? 0.0 : oldness / static_cast<double>(hc.size());
            out.per_head.push_back(hs);
        }
    }
    return out;
}

void dump_retained_csv(const KVCache& cache, std::size_t current_step, std::ostream& os) {
    os << "layer,head,token_position,birth_step,oldness,score,retained\n";
    for (std::size_t l = 0; l < cache.n_layers; ++l) {
        for (std::size_t h = 0; h < cache.n_heads; ++h) {
            const HeadCache& hc = cache.at(l, h);
            for (const TokenMeta& m : hc.meta) {
                os << l << ',' << h << ',' << m.original_position << ',' << m.birth_step << ','
                   << (current_step - m.birth_step) << ',' << m.last_score << ",1\n";
            }
        }
    }
}

}  // namespace nammkit
