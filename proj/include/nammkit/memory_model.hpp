#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nammkit/numerics.hpp"
#include "nammkit/spectrogram.hpp"

namespace nammkit {

enum class ArchId : std::uint32_t { Mlp = 0, Bam = 1 };

// Flat parameter vector in the canonical genome order. The order is the
// genome ABI: Wq, bq, Wk, bk, Wv, bv, Wo, bo, Wfinal, bfinal (row-major)
// for BAM; W1, b1, W2, b2, Wfinal, bfinal for the MLP.
struct Genome {
    ArchId arch = ArchId::Bam;
    std::vector<double> params;
};

constexpr std::size_t kBamHiddenDim = 16;
constexpr std::size_t kBamOutDim = 2 * kFeatureDim;  // 50
constexpr std::size_t kMlpHiddenDim = kFeatureDim;   // 25

struct BamWeights {
    Matrix wq, wk, wv;  // 25 x 16
    std::vector<double> bq, bk, bv;
    Matrix wo;  // 16 x 50
    std::vector<double> bo;
    std::vector<double> wfinal;  // 25
    double bfinal = 0.0;
};

struct MlpWeights {
    Matrix w1, w2;  // 25 x 25
    std::vector<double> b1, b2;
    std::vector<double> wfinal;  // 25
    double bfinal = 0.0;
};

std::size_t param_count(ArchId arch);  // BAM 2124, MLP 1326

BamWeights decode_bam(const Genome& g);
MlpWeights decode_mlp(const Genome& g);
Genome encode_bam(const BamWeights& w);
Genome encode_mlp(const MlpWeights& w);

// Counter-causal mask: token i may attend to j iff j >= i (self and newer),
// tokens ordered oldest to newest.
BoolMatrix backward_mask(std::size_t n);

// Single-head masked attention over feature vectors, outputs split into a
// residual and a multiplicative half: h = (x + r) * relu(m), s = h.wf + bf.
std::vector<double> score_bam(const Matrix& features, const BamWeights& w);

// Token-independent 2-hidden-layer residual MLP.
std::vector<double> score_mlp(const Matrix& features, const MlpWeights& w);

std::vector<double> score(const Matrix& features, const Genome& g);

// On-disk genome package: the scorer parameters plus the frozen calibration
// scales and the score-threshold offset that travel with them.
struct GenomePackage {
    Genome genome;
    NormScales scales;
    double threshold_offset = 0.0;
};

void save_genome(const GenomePackage& pkg, const std::string& path);
GenomePackage load_genome(const std::string& path);

}  // namespace nammkit
