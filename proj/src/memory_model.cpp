#include "nammkit/memory_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nammkit/binio.hpp"

namespace nammkit {

namespace {

constexpr std::size_t kF = kFeatureDim;   // 25
constexpr std::size_t kH = kBamHiddenDim; // 16
constexpr std::size_t kO = kBamOutDim;    // 50

class Cursor {
  public:
    explicit Cursor(const std::vector<double>& p) : p_(p) {}

    Matrix take_matrix(std::size_t r, std::size_t c) {
        Matrix m(r, c);
        for (double& v : m.data) v = next();
        return m;
    }
    std::vector<double> take_vector(std::size_t n) {
        std::vector<double> v(n);
        for (double& x : v) x = next();
        return v;
    }
    double next() {
        if (i_ >= p_.size()) throw std::invalid_argument("genome: parameter vector too short");
        return p_[i_++];
    }
    void done() const {
        if (i_ != p_.size()) throw std::invalid_argument("genome: parameter vector too long");
    }

  private:
    const std::vector<double>& p_;
    std::size_t i_ = 0;
};

void emit(std::vector<double>& out, const Matrix& m) {
    out.insert(out.end(), m.data.begin(), m.data.end());
}
void emit(std::vector<double>& out, const std::vector<double>& v) {
    out.insert(out.end(), v.begin(), v.end());
}

}  // namespace

std::size_t param_count(ArchId arch) {
    switch (arch) {
        case ArchId::Bam:
            return 3 * (kF * kH + kH) + (kH * kO + kO) + (kF + 1);
        case ArchId::Mlp:
            return 2 * (kF * kF + kF) + (kF + 1);
    }
    throw std::invalid_argument("param_count: unknown arch");
}

BamWeights decode_bam(const Genome& g) {
    if (g.arch != ArchId::Bam) throw std::invalid_argument("decode_bam: arch mismatch");
    if (g.params.size() != param_count(ArchId::Bam)) {
        throw std::invalid_argument("decode_bam: wrong parameter count");
    }
    Cursor c(g.params);
    BamWeights w;
    w.wq = c.take_matrix(kF, kH);
    w.bq = c.take_vector(kH);
    w.wk = c.take_matrix(kF, kH);
    w.bk = c.take_vector(kH);
    w.wv = c.take_matrix(kF, kH);
    w.bv = c.take_vector(kH);
    w.wo = c.take_matrix(kH, kO);
    w.bo = c.take_vector(kO);
    w.wfinal = c.take_vector(kF);
    w.bfinal = c.next();
    c.done();
    return w;
}

MlpWeights decode_mlp(const Genome& g) {
    if (g.arch != ArchId::Mlp) throw std::invalid_argument("decode_mlp: arch mismatch");
    if (g.params.size() != param_count(ArchId::Mlp)) {
        throw std::invalid_argument("decode_mlp: wrong parameter count");
    }
    Cursor c(g.params);
    MlpWeights w;
    w.w1 = c.take_matrix(kF, kF);
    w.b1 = c.take_vector(kF);
    w.w2 = c.take_matrix(kF, kF);
    w.b2 = c.take_vector(kF);
    w.wfinal = c.take_vector(kF);
    w.bfinal = c.next();
    c.done();
    return w;
}

Genome encode_bam(const BamWeights& w) {
    Genome g;
    g.arch = ArchId::Bam;
    g.params.reserve(param_count(ArchId::Bam));
    emit(g.params, w.wq);
    emit(g.params, w.bq);
    emit(g.params, w.wk);
    emit(g.params, w.bk);
    emit(g.params, w.wv);
    emit(g.params, w.bv);
    emit(g.params, w.wo);
    emit(g.params, w.bo);
    emit(g.params, w.wfinal);
    g.params.push_back(w.bfinal);
    return g;
}

Genome encode_mlp(const MlpWeights& w) {
    Genome g;
    g.arch = ArchId::Mlp;
    g.params.reserve(param_count(ArchId::Mlp));
    emit(g.params, w.w1);
    emit(g.params, w.b1);
    emit(g.params, w.w2);
    emit(g.params, w.b2);
    emit(g.params, w.wfinal);
    g.params.push_back(w.bfinal);
    return g;
}

BoolMatrix backward_mask(std::size_t n) {
    if (n < 1) throw std::invalid_argument("backward_mask: n must be >= 1");
    BoolMatrix m(n, n, false);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) m.set(i, j, true);
    }
    return m;
}

namespace {

Matrix affine(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
    Matrix out = matmul(x, w);
    for (std::size_t i = 0; i < out.rows; ++i) {
        for (std::size_t j = 0; j < out.cols; ++j) out.at(i, j) += b[j];
    }
    return out;
}

}  // namespace

std::vector<double> score_bam(const Matrix& features, const BamWeights& w) {
    if (features.cols != kF || features.rows < 1) {
        throw std::invalid_argument("score_bam: features must be n x 25, n >= 1");
    }
    const std::size_t n = features.rows;
    const Matrix q = affine(features, w.wq, w.bq);
    const Matrix k = affine(features, w.wk, w.bk);
    const Matrix v = affine(features, w.wv, w.bv);

    Matrix logits(n, n);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(kH));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t h = 0; h < kH; ++h) dot += q.at(i, h) * k.at(j, h);
            logits.at(i, j) = dot * inv_sqrt_d;
        }
    }
    const Matrix attn = masked_softmax(logits, backward_mask(n));
    const Matrix ctx = matmul(attn, v);       // n x 16
    const Matrix o = affine(ctx, w.wo, w.bo); // n x 50

    // Residual half r and multiplicative half m; ReLU gates the product so a
    // zero genome scores every token 0.
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = w.bfinal;
        for (std::size_t d = 0; d < kF; ++d) {
            const double r = o.at(i, d);
            const double m = std::max(0.0, o.at(i, kF + d));
            s += (features.at(i, d) + r) * m * w.wfinal[d];
        }
        scores[i] = s;
    }
    return scores;
}

std::vector<double> score_mlp(const Matrix& features, const MlpWeights& w) {
    if (features.cols != kF || features.rows < 1) {
        throw std::invalid_argument("score_mlp: features must be n x 25, n >= 1");
    }
    const std::size_t n = features.rows;
    std::vector<double> scores(n);
    std::vector<double> h1(kF), h2(kF);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = features.row(i);
        for (std::size_t j = 0; j < kF; ++j) {
            double a = w.b1[j];
            for (std::size_t d = 0; d < kF; ++d) a += x[d] * w.w1.at(d, j);
            h1[j] = std::max(0.0, a) + x[j];
        }
        for (std::size_t j = 0; j < kF; ++j) {
            double a = w.b2[j];
            for (std::size_t d = 0; d < kF; ++d) a += h1[d] * w.w2.at(d, j);
            h2[j] = std::max(0.0, a) + h1[j];
        }
        double s = w.bfinal;
        for (std::size_t d = 0; d < kF; ++d) s += h2[d] * w.wfinal[d];
        scores[i] = s;
    }
    return scores;
}

std::vector<double> score(const Matrix& features, const Genome& g) {
    switch (g.arch) {
        case ArchId::Bam:
            return score_bam(features, decode_bam(g));
        case ArchId::Mlp:
            return score_mlp(features, decode_mlp(g));
    }
    throw std::invalid_argument("score: unknown arch");
}

void save_genome(const GenomePackage& pkg, const std::string& path) {
    auto os = open_out(path);
    write_magic(os, "NAMM");
    write_u32(os, 1);
    write_u32(os, static_cast<std::uint32_t>(pkg.genome.arch));
    write_u32(os, static_cast<std::uint32_t>(pkg.genome.params.size()));
    write_u32(os, static_cast<std::uint32_t>(kFeatureDim));
    for (double p : pkg.genome.params) write_f64(os, p);
    for (double s : pkg.scales.scale) write_f64(os, s);
    write_f64(os, pkg.threshold_offset);
    if (!os) throw FormatError("write failed: " + path);
}

GenomePackage load_genome(const std::string& path) {
    auto is = open_in(path);
    expect_magic(is, "NAMM", path);
    if (read_u32(is) != 1) throw FormatError("genome: unsupported version");
    const std::uint32_t arch = read_u32(is);
    if (arch > 1) throw FormatError("genome: unknown arch id");
    GenomePackage pkg;
    pkg.genome.arch = static_cast<ArchId>(arch);
    const std::uint32_t n = read_u32(is);
    if (n != param_count(pkg.genome.arch)) throw FormatError("genome: param count mismatch");
    if (read_u32(is) != kFeatureDim) throw FormatError("genome: feature dim mismatch");
    pkg.genome.params.resize(n);
    for (double& p : pkg.genome.params) p = read_f64(is);
    for (double& s : pkg.scales.scale) s = read_f64(is);
    pkg.threshold_offset = read_f64(is);
    return pkg;
}

}  // namespace nammkit
