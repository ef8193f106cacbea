#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nammkit/cache.hpp"
#include "nammkit/memory_model.hpp"
#include "nammkit/taskgen.hpp"

namespace nammkit {

// Finite-difference sensitivities of the scorer. self_abs(i, k) = |ds_i/dv_i[k]|,
// cross(i, j) = squared L2 norm of ds_i/dv_j over the 25 coordinates, and
// directional[i] = (ds_i/dv_i) . v_i.
struct SensitivityReport {
    Matrix self_abs;   // n x 25
    Matrix cross;      // n x n
    std::vector<double> directional;
};

SensitivityReport score_sensitivity(const Genome& g, const Matrix& features,
                                    double epsilon = 1e-5);

// Per-(task, sample, layer, head) retention statistics gathered from eval runs.
struct RunRecord {
    std::string task;
    std::size_t sample = 0;
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t retained = 0;
    std::size_t appended = 0;
    double mean_oldness = 0.0;
    std::size_t prompt_length = 0;
};

struct ProfileRow {
    std::string task;
    std::size_t layer = 0;
    double norm_size = 0.0;      // mean retained / appended
    double norm_oldness = 0.0;   // mean oldness / task mean prompt length
};

struct LayerTaskProfile {
    std::vector<ProfileRow> rows;  // one per (task, layer), tasks then layers
    // Pearson correlation between per-sample mean retained fraction and prompt
    // length; NaN when either series is constant.
    double size_length_correlation = 0.0;
};

LayerTaskProfile layer_task_profile(const std::vector<RunRecord>& records);

double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// Per-layer retained token ids (looked up in the sample) with their positions.
struct RetainedRecord {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::vector<std::size_t> positions;
    std::vector<Token> token_ids;
};

std::vector<RetainedRecord> dump_retained(const KVCache& cache, const PromptSample& sample);

}  // namespace nammkit
