#include "nammkit/toy_lm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nammkit/binio.hpp"
#include "nammkit/parallel.hpp"

namespace nammkit {

namespace {

constexpr double kRmsEps = 1e-6;

// out += a^T * b
void add_matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* a_row = a.row(k);
        const double* b_row = b.row(k);
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = a_row[i];
            if (aki == 0.0) continue;
            double* out_row = out.row(i);
            for (std::size_t j = 0; j < b.cols; ++j) out_row[j] += aki * b_row[j];
        }
    }
}

// out = a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* a_row = a.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* b_row = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += a_row[k] * b_row[k];
            out.at(i, j) = acc;
        }
    }
    return out;
}

Matrix rmsnorm_forward(const Matrix& x, const std::vector<double>& g, std::vector<double>& r_out) {
    Matrix y(x.rows, x.cols);
    r_out.resize(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double ms = 0.0;
        const double* xr = x.row(i);
        for (std::size_t j = 0; j < x.cols; ++j) ms += xr[j] * xr[j];
        const double r = std::sqrt(ms / static_cast<double>(x.cols) + kRmsEps);
        r_out[i] = r;
        double* yr = y.row(i);
        for (std::size_t j = 0; j < x.cols; ++j) yr[j] = g[j] * xr[j] / r;
    }
    return y;
}

void rmsnorm_backward(const Matrix& x, const std::vector<double>& g, const std::vector<double>& r,
                      const Matrix& dy, Matrix& dx_accum, std::vector<double>& dg_accum) {
    const std::size_t d = x.cols;
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xr = x.row(i);
        const double* dyr = dy.row(i);
        double* dxr = dx_accum.row(i);
        const double ri = r[i];
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += dyr[j] * g[j] * xr[j];
        const double c = dot / (static_cast<double>(d) * ri * ri * ri);
        for (std::size_t j = 0; j < d; ++j) {
            dxr[j] += g[j] * dyr[j] / ri - xr[j] * c;
            dg_accum[j] += dyr[j] * xr[j] / ri;
        }
    }
}

}  // namespace

void LmConfig::validate() const {
    if (d_model % n_heads != 0) throw std::invalid_argument("LmConfig: d_model % n_heads != 0");
    if (vocab == 0 || d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 ||
        max_context == 0) {
        throw std::invalid_argument("LmConfig: zero-sized field");
    }
}

LmWeights LmWeights::zeros(const LmConfig& cfg) {
    cfg.validate();
    LmWeights w;
    w.cfg = cfg;
    w.tok_emb = Matrix(cfg.vocab, cfg.d_model);
    w.pos_emb = Matrix(cfg.max_context, cfg.d_model);
    w.layers.resize(cfg.n_layers);
    for (auto& l : w.layers) {
        l.attn_norm.assign(cfg.d_model, 0.0);
        l.wq = Matrix(cfg.d_model, cfg.d_model);
        l.wk = Matrix(cfg.d_model, cfg.d_model);
        l.wv = Matrix(cfg.d_model, cfg.d_model);
        l.wo = Matrix(cfg.d_model, cfg.d_model);
        l.ffn_norm.assign(cfg.d_model, 0.0);
        l.w1 = Matrix(cfg.d_model, cfg.d_ff);
        l.w2 = Matrix(cfg.d_ff, cfg.d_model);
    }
    w.final_norm.assign(cfg.d_model, 0.0);
    w.w_out = Matrix(cfg.d_model, cfg.vocab);
    return w;
}

LmWeights LmWeights::init(const LmConfig& cfg, RngState& rng, double scale) {
    LmWeights w = zeros(cfg);
    for_each_tensor(w, [&](std::vector<double>& t) {
        for (double& v : t) v = scale * rng_next_normal(rng);
    });
    // Norm scales start at 1.
    for (auto& l : w.layers) {
        std::fill(l.attn_norm.begin(), l.attn_norm.end(), 1.0);
        std::fill(l.ffn_norm.begin(), l.ffn_norm.end(), 1.0);
    }
    std::fill(w.final_norm.begin(), w.final_norm.end(), 1.0);
    return w;
}

void for_each_tensor(LmWeights& w, const std::function<void(std::vector<double>&)>& fn) {
    fn(w.tok_emb.data);
    fn(w.pos_emb.data);
    for (auto& l : w.layers) {
        fn(l.attn_norm);
        fn(l.wq.data);
        fn(l.wk.data);
        fn(l.wv.data);
        fn(l.wo.data);
        fn(l.ffn_norm);
        fn(l.w1.data);
        fn(l.w2.data);
    }
    fn(w.final_norm);
    fn(w.w_out.data);
}

void for_each_tensor_pair(LmWeights& a, LmWeights& b,
                          const std::function<void(std::vector<double>&, std::vector<double>&)>& fn) {
    std::vector<std::vector<double>*> bt;
    for_each_tensor(b, [&](std::vector<double>& t) { bt.push_back(&t); });
    std::size_t i = 0;
    for_each_tensor(a, [&](std::vector<double>& t) { fn(t, *bt[i++]); });
}

std::size_t lm_param_count(const LmConfig& cfg) {
    LmWeights w = LmWeights::zeros(cfg);
    std::size_t n = 0;
    for_each_tensor(w, [&](std::vector<double>& t) { n += t.size(); });
    return n;
}

AdamState AdamState::init(const LmConfig& cfg, double lr) {
    AdamState a;
    a.m = LmWeights::zeros(cfg);
    a.v = LmWeights::zeros(cfg);
    a.lr = lr;
    return a;
}

namespace {

struct LayerActs {
    Matrix x_in;
    std::vector<double> r_attn;
    Matrix a;  // normalized input
    Matrix q, k, v;
    std::vector<Matrix> probs;  // per head, L x L
    Matrix ctx;                 // concatenated head outputs
    Matrix x_mid;
    std::vector<double> r_ffn;
    Matrix b;        // normalized mid
    Matrix ffn_pre;  // L x d_ff
    Matrix ffn_h;    // relu(ffn_pre)
};

}  // namespace

double lm_loss_and_grad(const LmWeights& w, const TrainSample& sample, LmWeights* grad) {
    const LmConfig& cfg = w.cfg;
    const std::size_t L = sample.tokens.size();
    if (L < 2) throw std::invalid_argument("lm_loss_and_grad: need at least 2 tokens");
    if (L > cfg.max_context) throw std::runtime_error("lm_loss_and_grad: context overflow");
    if (sample.loss_mask.size() != L) {
        throw std::invalid_argument("lm_loss_and_grad: mask length mismatch");
    }
    const std::size_t d = cfg.d_model;
    const std::size_t dh = cfg.d_head();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix x(L, d);
    for (std::size_t i = 0; i < L; ++i) {
        const Token t = sample.tokens[i];
        if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab) {
            throw std::invalid_argument("lm_loss_and_grad: token out of vocab");
        }
        const double* te = w.tok_emb.row(static_cast<std::size_t>(t));
        const double* pe = w.pos_emb.row(i);
        double* xr = x.row(i);
        for (std::size_t j = 0; j < d; ++j) xr[j] = te[j] + pe[j];
    }

    std::vector<LayerActs> acts(cfg.n_layers);
    for (std::size_t li = 0; li < cfg.n_layers; ++li) {
        const LayerWeights& lw = w.layers[li];
        LayerActs& la = acts[li];
        la.x_in = x;
        la.a = rmsnorm_forward(la.x_in, lw.attn_norm, la.r_attn);
        la.q = matmul(la.a, lw.wq);
        la.k = matmul(la.a, lw.wk);
        la.v = matmul(la.a, lw.wv);
        la.ctx = Matrix(L, d);
        la.probs.resize(cfg.n_heads);
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const std::size_t off = h * dh;
            Matrix& p = la.probs[h];
            p = Matrix(L, L);
            for (std::size_t i = 0; i < L; ++i) {
                // causal row softmax over j <= i, streamed for speed
                double row_max = -1e300;
                for (std::size_t j = 0; j <= i; ++j) {
                    double dot = 0.0;
                    const double* qi = la.q.row(i) + off;
                    const double* kj = la.k.row(j) + off;
                    for (std::size_t e = 0; e < dh; ++e) dot += qi[e] * kj[e];
                    p.at(i, j) = dot * inv_sqrt_dh;
                    if (p.at(i, j) > row_max) row_max = p.at(i, j);
                }
                double denom = 0.0;
                for (std::size_t j = 0; j <= i; ++j) {
                    p.at(i, j) = std::exp(p.at(i, j) - row_max);
                    denom += p.at(i, j);
                }
                double* ci = la.ctx.row(i) + off;
                for (std::size_t j = 0; j <= i; ++j) {
                    p.at(i, j) /= denom;
                    const double pij = p.at(i, j);
                    const double* vj = la.v.row(j) + off;
                    for (std::size_t e = 0; e < dh; ++e) ci[e] += pij * vj[e];
                }
            }
        }
        const Matrix attn_out = matmul(la.ctx, lw.wo);
        la.x_mid = la.x_in;
        for (std::size_t i = 0; i < L * d; ++i) la.x_mid.data[i] += attn_out.data[i];
        la.b = rmsnorm_forward(la.x_mid, lw.ffn_norm, la.r_ffn);
        la.ffn_pre = matmul(la.b, lw.w1);
        la.ffn_h = la.ffn_pre;
        for (double& vv : la.ffn_h.data) vv = std::max(0.0, vv);
        const Matrix ffn_out = matmul(la.ffn_h, lw.w2);
        x = la.x_mid;
        for (std::size_t i = 0; i < L * d; ++i) x.data[i] += ffn_out.data[i];
    }

    std::vector<double> r_final;
    const Matrix y = rmsnorm_forward(x, w.final_norm, r_final);
    const Matrix logits = matmul(y, w.w_out);

    // Masked next-token cross-entropy; logits row i predicts tokens[i+1].
    std::size_t n_masked = 0;
    for (std::size_t i = 1; i < L; ++i) {
        if (sample.loss_mask[i]) ++n_masked;
    }
    if (n_masked == 0) return 0.0;

    double loss = 0.0;
    Matrix dlogits(L, cfg.vocab);
    const double inv_n = 1.0 / static_cast<double>(n_masked);
    for (std::size_t i = 1; i < L; ++i) {
        if (!sample.loss_mask[i]) continue;
        const std::size_t row = i - 1;
        const Token target = sample.tokens[i];
        double row_max = -1e300;
        for (std::size_t j = 0; j < cfg.vocab; ++j) row_max = std::max(row_max, logits.at(row, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < cfg.vocab; ++j) denom += std::exp(logits.at(row, j) - row_max);
        const double log_denom = std::log(denom) + row_max;
        loss += (log_denom - logits.at(row, static_cast<std::size_t>(target))) * inv_n;
        if (grad) {
            for (std::size_t j = 0; j < cfg.vocab; ++j) {
                dlogits.at(row, j) = std::exp(logits.at(row, j) - log_denom) * inv_n;
            }
            dlogits.at(row, static_cast<std::size_t>(target)) -= inv_n;
        }
    }
    if (!std::isfinite(loss)) throw std::runtime_error("lm_loss_and_grad: non-finite loss");
    if (!grad) return loss;

    add_matmul_tn(y, dlogits, grad->w_out);
    Matrix dx(L, d);
    {
        // dx from the final norm
        Matrix dyv(L, d);
        for (std::size_t i = 0; i < L; ++i) {
            const double* dl = dlogits.row(i);
            double* dyr = dyv.row(i);
            for (std::size_t k = 0; k < cfg.vocab; ++k) {
                const double dlk = dl[k];
                if (dlk == 0.0) continue;
                for (std::size_t j = 0; j < d; ++j) dyr[j] += dlk * w.w_out.at(j, k);
            }
        }
        rmsnorm_backward(x, w.final_norm, r_final, dyv, dx, grad->final_norm);
    }

    for (std::size_t li = cfg.n_layers; li-- > 0;) {
        const LayerWeights& lw = w.layers[li];
        LayerWeights& gl = grad->layers[li];
        LayerActs& la = acts[li];
        const std::size_t dff = cfg.d_ff;

        // FFN branch: x_out = x_mid + relu(b W1) W2
        Matrix dffn_h = matmul_nt(dx, lw.w2);  // L x d_ff
        add_matmul_tn(la.ffn_h, dx, gl.w2);
        for (std::size_t i = 0; i < L * dff; ++i) {
            if (la.ffn_pre.data[i] <= 0.0) dffn_h.data[i] = 0.0;
        }
        add_matmul_tn(la.b, dffn_h, gl.w1);
        const Matrix db = matmul_nt(dffn_h, lw.w1);
        Matrix dx_mid = dx;  // residual path
        rmsnorm_backward(la.x_mid, lw.ffn_norm, la.r_ffn, db, dx_mid, gl.ffn_norm);

        // Attention branch: x_mid = x_in + ctx Wo
        add_matmul_tn(la.ctx, dx_mid, gl.wo);
        const Matrix dctx = matmul_nt(dx_mid, lw.wo);
        Matrix dq(L, d), dk(L, d), dv(L, d);
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const std::size_t off = h * dh;
            const Matrix& p = la.probs[h];
            for (std::size_t i = 0; i < L; ++i) {
                const double* dci = dctx.row(i) + off;
                // dp and softmax jacobian restricted to the causal support
                double dot = 0.0;
                std::vector<double> dp(i + 1);
                for (std::size_t j = 0; j <= i; ++j) {
                    const double* vj = la.v.row(j) + off;
                    double acc = 0.0;
                    for (std::size_t e = 0; e < dh; ++e) acc += dci[e] * vj[e];
                    dp[j] = acc;
                    dot += acc * p.at(i, j);
                }
                for (std::size_t j = 0; j <= i; ++j) {
                    const double pij = p.at(i, j);
                    const double dl = pij * (dp[j] - dot) * inv_sqrt_dh;
                    double* dqi = dq.row(i) + off;
                    double* dkj = dk.row(j) + off;
                    double* dvj = dv.row(j) + off;
                    const double* qi = la.q.row(i) + off;
                    const double* kj = la.k.row(j) + off;
                    for (std::size_t e = 0; e < dh; ++e) {
                        dqi[e] += dl * kj[e];
                        dkj[e] += dl * qi[e];
                        dvj[e] += pij * dci[e];
                    }
                }
            }
        }
        add_matmul_tn(la.a, dq, gl.wq);
        add_matmul_tn(la.a, dk, gl.wk);
        add_matmul_tn(la.a, dv, gl.wv);
        Matrix da = matmul_nt(dq, lw.wq);
        {
            const Matrix t1 = matmul_nt(dk, lw.wk);
            const Matrix t2 = matmul_nt(dv, lw.wv);
            for (std::size_t i = 0; i < L * d; ++i) da.data[i] += t1.data[i] + t2.data[i];
        }
        Matrix dx_in = dx_mid;  // residual path
        rmsnorm_backward(la.x_in, lw.attn_norm, la.r_attn, da, dx_in, gl.attn_norm);
        dx = std::move(dx_in);
    }

    for (std::size_t i = 0; i < L; ++i) {
        const double* dxr = dx.row(i);
        double* te = grad->tok_emb.row(static_cast<std::size_t>(sample.tokens[i]));
        double* pe = grad->pos_emb.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            te[j] += dxr[j];
            pe[j] += dxr[j];
        }
    }
    return loss;
}

double train_step(LmWeights& w, const std::vector<TrainSample>& batch, AdamState& adam,
                  std::size_t workers) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    std::vector<LmWeights> grads(batch.size());
    std::vector<double> losses(batch.size(), 0.0);
    parallel_for(batch.size(), workers, [&](std::size_t i) {
        grads[i] = LmWeights::zeros(w.cfg);
        losses[i] = lm_loss_and_grad(w, batch[i], &grads[i]);
    });

    // Reduce in sample order so the result is independent of scheduling.
    LmWeights grad = std::move(grads[0]);
    for (std::size_t i = 1; i < batch.size(); ++i) {
        for_each_tensor_pair(grad, grads[i], [](std::vector<double>& g, std::vector<double>& gi) {
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += gi[k];
        });
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (double l : losses) loss += l * inv_b;
    if (!std::isfinite(loss)) throw std::runtime_error("train_step: training diverged");

    adam.step += 1;
    const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
    const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
    std::vector<std::vector<double>*> mts, vts, gts;
    for_each_tensor(adam.m, [&](std::vector<double>& t) { mts.push_back(&t); });
    for_each_tensor(adam.v, [&](std::vector<double>& t) { vts.push_back(&t); });
    for_each_tensor(grad, [&](std::vector<double>& t) { gts.push_back(&t); });
    std::size_t ti = 0;
    for_each_tensor(w, [&](std::vector<double>& t) {
        std::vector<double>& m = *mts[ti];
        std::vector<double>& v = *vts[ti];
        std::vector<double>& g = *gts[ti];
        ++ti;
        for (std::size_t k = 0; k < t.size(); ++k) {
            const double gk = g[k] * inv_b;
            m[k] = adam.beta1 * m[k] + (1.0 - adam.beta1) * gk;
            v[k] = adam.beta2 * v[k] + (1.0 - adam.beta2) * gk * gk;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            t[k] -= adam.lr * mhat / (std::sqrt(vhat) + adam.eps);
        }
    });
    return loss;
}

double grad_check(const LmWeights& w, const TrainSample& sample, double epsilon,
                  std::size_t n_coords, RngState& rng) {
    LmWeights grad = LmWeights::zeros(w.cfg);
    lm_loss_and_grad(w, sample, &grad);

    LmWeights probe = w;
    std::vector<std::vector<double>*> wts, gts;
    for_each_tensor(probe, [&](std::vector<double>& t) { wts.push_back(&t); });
    for_each_tensor(grad, [&](std::vector<double>& t) { gts.push_back(&t); });
    const std::size_t total = lm_param_count(w.cfg);

    double max_rel = 0.0;
    for (std::size_t c = 0; c < n_coords; ++c) {
        std::size_t flat = static_cast<std::size_t>(rng_next_u64(rng) % total);
        std::size_t ti = 0;
        while (flat >= wts[ti]->size()) flat -= wts[ti++]->size();
        double& coord = (*wts[ti])[flat];
        const double saved = coord;
        coord = saved + epsilon;
        const double lp = lm_loss_and_grad(probe, sample, nullptr);
        coord = saved - epsilon;
        const double lm = lm_loss_and_grad(probe, sample, nullptr);
        coord = saved;
        const double fd = (lp - lm) / (2.0 * epsilon);
        const double an = (*gts[ti])[flat];
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

ForwardResult forward_chunk(const LmWeights& w, KVCache& cache, const std::vector<Token>& tokens,
                            const std::vector<std::size_t>& positions, std::size_t step) {
    const LmConfig& cfg = w.cfg;
    const std::size_t m = tokens.size();
    if (m == 0 || positions.size() != m) {
        throw std::invalid_argument("forward_chunk: tokens/positions mismatch");
    }
    for (std::size_t p : positions) {
        if (p >= cfg.max_context) throw std::runtime_error("forward_chunk: context overflow");
    }
    for (Token t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab) {
            throw std::invalid_argument("forward_chunk: token out of vocabulary");
        }
    }
    if (cache.n_layers != cfg.n_layers || cache.n_heads != cfg.n_heads ||
        cache.d_head != cfg.d_head()) {
        throw std::invalid_argument("forward_chunk: cache shape mismatch");
    }
    const std::size_t d = cfg.d_model;
    const std::size_t dh = cfg.d_head();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix x(m, d);
    for (std::size_t i = 0; i < m; ++i) {
        const double* te = w.tok_emb.row(static_cast<std::size_t>(tokens[i]));
        const double* pe = w.pos_emb.row(positions[i]);
        double* xr = x.row(i);
        for (std::size_t j = 0; j < d; ++j) xr[j] = te[j] + pe[j];
    }

    ForwardResult res;
    res.attn.resize(cfg.n_layers * cfg.n_heads);
    std::vector<double> r_scratch;
    for (std::size_t li = 0; li < cfg.n_layers; ++li) {
        const LayerWeights& lw = w.layers[li];
        const Matrix a = rmsnorm_forward(x, lw.attn_norm, r_scratch);
        const Matrix q = matmul(a, lw.wq);
        const Matrix k = matmul(a, lw.wk);
        const Matrix v = matmul(a, lw.wv);
        Matrix ctx(m, d);
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const std::size_t off = h * dh;
            Matrix k_new(m, dh), v_new(m, dh);
            for (std::size_t i = 0; i < m; ++i) {
                std::copy_n(k.row(i) + off, dh, k_new.row(i));
                std::copy_n(v.row(i) + off, dh, v_new.row(i));
            }
            append(cache, li, h, k_new, v_new, step);
            const HeadCache& hc = cache.at(li, h);
            const std::size_t n_keys = hc.size();

            Matrix logits(m, n_keys);
            BoolMatrix mask(m, n_keys, false);
            for (std::size_t i = 0; i < m; ++i) {
                const double* qi = q.row(i) + off;
                for (std::size_t j = 0; j < n_keys; ++j) {
                    if (hc.meta[j].original_position > positions[i]) continue;
                    mask.set(i, j, true);
                    const double* kj = hc.keys.row(j);
                    double dot = 0.0;
                    for (std::size_t e = 0; e < dh; ++e) dot += qi[e] * kj[e];
                    logits.at(i, j) = dot * inv_sqrt_dh;
                }
            }
            Matrix p = masked_softmax(logits, mask);
            for (std::size_t i = 0; i < m; ++i) {
                double* ci = ctx.row(i) + off;
                for (std::size_t j = 0; j < n_keys; ++j) {
                    const double pij = p.at(i, j);
                    if (pij == 0.0) continue;
                    const double* vj = hc.values.row(j);
                    for (std::size_t e = 0; e < dh; ++e) ci[e] += pij * vj[e];
                }
            }
            res.attn[li * cfg.n_heads + h] = std::move(p);
        }
        const Matrix attn_out = matmul(ctx, lw.wo);
        for (std::size_t i = 0; i < m * d; ++i) x.data[i] += attn_out.data[i];
        const Matrix b = rmsnorm_forward(x, lw.ffn_norm, r_scratch);
        Matrix ffn_h = matmul(b, lw.w1);
        for (double& vv : ffn_h.data) vv = std::max(0.0, vv);
        const Matrix ffn_out = matmul(ffn_h, lw.w2);
        for (std::size_t i = 0; i < m * d; ++i) x.data[i] += ffn_out.data[i];
    }
    const Matrix y = rmsnorm_forward(x, w.final_norm, r_scratch);
    res.logits = matmul(y, w.w_out);
    return res;
}

void save_lm(const LmWeights& w, const std::string& path) {
    auto os = open_out(path);
    write_magic(os, "TYLM");
    write_u32(os, 1);
    write_u32(os, static_cast<std::uint32_t>(w.cfg.vocab));
    write_u32(os, static_cast<std::uint32_t>(w.cfg.d_model));
    write_u32(os, static_cast<std::uint32_t>(w.cfg.n_heads));
    write_u32(os, static_cast<std::uint32_t>(w.cfg.n_layers));
    write_u32(os, static_cast<std::uint32_t>(w.cfg.d_ff));
    write_u32(os, static_cast<std::uint32_t>(w.cfg.max_context));
    for_each_tensor(const_cast<LmWeights&>(w), [&](std::vector<double>& t) {
        for (double v : t) write_f64(os, v);
    });
    if (!os) throw FormatError("write failed: " + path);
}

LmWeights load_lm(const std::string& path) {
    auto is = open_in(path);
    expect_magic(is, "TYLM", path);
    if (read_u32(is) != 1) throw FormatError("checkpoint: unsupported version");
    LmConfig cfg;
    cfg.vocab = read_u32(is);
    cfg.d_model = read_u32(is);
    cfg.n_heads = read_u32(is);
    cfg.n_layers = read_u32(is);
    cfg.d_ff = read_u32(is);
    cfg.max_context = read_u32(is);
    LmWeights w = LmWeights::zeros(cfg);
    for_each_tensor(w, [&](std::vector<double>& t) {
        for (double& v : t) v = read_f64(is);
    });
    return w;
}

}  // namespace nammkit
