#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nammkit/numerics.hpp"

namespace nammkit {

// CMA-ES with the standard recommended constants; only the population size,
// elite ratio, mean learning rate and initial step size are exposed (the rest
// follow the default calculation). Fitness is maximized.
struct CmaState {
    std::size_t dim = 0;
    std::size_t popsize = 32;
    std::size_t mu = 16;  // elites
    std::vector<double> mean;
    Matrix cov;
    double sigma = 0.65;
    std::vector<double> p_sigma;
    std::vector<double> p_c;
    std::size_t generation = 0;

    // derived constants
    std::vector<double> weights;  // mu entries, positive, sum 1
    double mu_eff = 0.0;
    double c_m = 1.0;
    double c_sigma = 0.0, d_sigma = 0.0, c_c = 0.0, c_1 = 0.0, c_mu = 0.0;
    double chi_n = 0.0;

    // lazily refreshed eigendecomposition of cov
    Matrix eig_basis;
    std::vector<double> eig_sqrt;
    std::size_t eigen_generation = 0;
    bool eigen_valid = false;
};

CmaState cma_init(std::size_t dim, double sigma0 = 0.65, std::size_t popsize = 32,
                  std::vector<double> mean0 = {}, double elite_ratio = 0.5, double c_m = 1.0);

// Samples popsize candidates x_k = mean + sigma * C^{1/2} z_k.
std::vector<std::vector<double>> cma_ask(CmaState& state, RngState& rng);

// Rank-based update; candidates must be the vectors returned by the matching
// cma_ask call. NaN fitness ranks worst; ties break by candidate index.
void cma_tell(CmaState& state, const std::vector<std::vector<double>>& candidates,
              const std::vector<double>& fitnesses);

void save_cma(const CmaState& state, const std::string& path);
CmaState load_cma(const std::string& path);

}  // namespace nammkit
