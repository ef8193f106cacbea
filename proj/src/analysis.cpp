#include "nammkit/analysis.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace nammkit {

SensitivityReport score_sensitivity(const Genome& g, const Matrix& features, double epsilon) {
    if (features.cols != kFeatureDim) {
        throw std::invalid_argument("score_sensitivity: features must have 25 columns");
    }
    const std::size_t n = features.rows;
    SensitivityReport rep;
    rep.self_abs = Matrix(n, kFeatureDim);
    rep.cross = Matrix(n, n);
    rep.directional.assign(n, 0.0);

    Matrix work = features;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < kFeatureDim; ++k) {
            const double orig = work.at(j, k);
            work.at(j, k) = orig + epsilon;
            const std::vector<double> up = score(work, g);
            work.at(j, k) = orig - epsilon;
            const std::vector<double> down = score(work, g);
            work.at(j, k) = orig;
            for (std::size_t i = 0; i < n; ++i) {
                const double grad = (up[i] - down[i]) / (2.0 * epsilon);
                rep.cross.at(i, j) += grad * grad;
                if (i == j) {
                    rep.self_abs.at(i, k) = std::fabs(grad);
                    rep.directional[i] += grad * features.at(i, k);
                }
            }
        }
    }
    return rep;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sxy / std::sqrt(sxx * syy);
}

LayerTaskProfile layer_task_profile(const std::vector<RunRecord>& records) {
    LayerTaskProfile out;

    std::map<std::string, std::pair<double, std::size_t>> task_prompt_len;  // sum, count per sample
    std::map<std::pair<std::string, std::size_t>, std::pair<double, double>> sample_size;  // sum, n
    for (const RunRecord& r : records) {
        auto& s = sample_size[{r.task, r.sample}];
        if (s.second == 0.0) {
            auto& t = task_prompt_len[r.task];
            t.first += static_cast<double>(r.prompt_length);
            t.second += 1;
        }
        if (r.appended > 0) {
            s.first += static_cast<double>(r.retained) / static_cast<double>(r.appended);
        } else {
            s.first += 1.0;
        }
        s.second += 1.0;
    }

    std::map<std::pair<std::string, std::size_t>, std::vector<const RunRecord*>> groups;
    for (const RunRecord& r : records) groups[{r.task, r.layer}].push_back(&r);
    for (const auto& [key, rows] : groups) {
        const auto& tl = task_prompt_len.at(key.first);
        const double mean_len = tl.first / static_cast<double>(tl.second);
        ProfileRow pr;
        pr.task = key.first;
        pr.layer = key.second;
        double size_acc = 0.0, old_acc = 0.0;
        for (const RunRecord* r : rows) {
            size_acc += r->appended > 0
                            ? static_cast<double>(r->retained) / static_cast<double>(r->appended)
                            : 1.0;
            old_acc += r->mean_oldness;
        }
        pr.norm_size = size_acc / static_cast<double>(rows.size());
        pr.norm_oldness = mean_len > 0.0
                              ? (old_acc / static_cast<double>(rows.size())) / mean_len
                              : 0.0;
        out.rows.push_back(pr);
    }

    std::vector<double> sizes, lengths;
    std::map<std::pair<std::string, std::size_t>, std::size_t> sample_len;
    for (const RunRecord& r : records) sample_len[{r.task, r.sample}] = r.prompt_length;
    for (const auto& [key, acc] : sample_size) {
        sizes.push_back(acc.first / acc.second);
        lengths.push_back(static_cast<double>(sample_len.at(key)));
    }
    out.size_length_correlation = pearson(sizes, lengths);
    return out;
}

std::vector<RetainedRecord> dump_retained(const KVCache& cache, const PromptSample& sample) {
    std::vector<RetainedRecord> out;
    for (std::size_t l = 0; l < cache.n_layers; ++l) {
        for (std::size_t h = 0; h < cache.n_heads; ++h) {
            const HeadCache& hc = cache.at(l, h);
            RetainedRecord rec;
            rec.layer = l;
            rec.head = h;
            for (const TokenMeta& m : hc.meta) {
                rec.positions.push_back(m.original_position);
                rec.token_ids.push_back(m.original_position < sample.tokens.size()
                                            ? sample.tokens[m.original_position]
                                            : -1);
            }
            out.push_back(std::move(rec));
        }
    }
    return out;
}

}  // namespace nammkit
