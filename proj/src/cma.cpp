#include "nammkit/cma.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "nammkit/binio.hpp"

namespace nammkit {

namespace {

void refresh_eigen(CmaState& s) {
    using EMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const EMatrix> c(s.cov.data.data(), static_cast<Eigen::Index>(s.dim),
                                static_cast<Eigen::Index>(s.dim));
    Eigen::SelfAdjointEigenSolver<EMatrix> solver(c);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("cma: eigendecomposition failed");
    }
    s.eig_basis = Matrix(s.dim, s.dim);
    s.eig_sqrt.resize(s.dim);
    bool repaired = false;
    for (std::size_t j = 0; j < s.dim; ++j) {
        double ev = solver.eigenvalues()(static_cast<Eigen::Index>(j));
        if (ev < 1e-12) {
            ev = 1e-12;
            repaired = true;
        }
        s.eig_sqrt[j] = std::sqrt(ev);
        for (std::size_t i = 0; i < s.dim; ++i) {
            s.eig_basis.at(i, j) = solver.eigenvectors()(static_cast<Eigen::Index>(i),
                                                         static_cast<Eigen::Index>(j));
        }
    }
    if (repaired) {
        std::cerr << "cma: covariance eigenvalue floored at 1e-12 (generation " << s.generation
                  << ")\n";
    }
    s.eigen_generation = s.generation;
    s.eigen_valid = true;
}

std::size_t eigen_interval(const CmaState& s) {
    const double denom = 10.0 * static_cast<double>(s.dim) * (s.c_1 + s.c_mu);
    if (denom <= 0.0) return 1;
    return std::max<std::size_t>(1, static_cast<std::size_t>(1.0 / denom));
}

}  // namespace

CmaState cma_init(std::size_t dim, double sigma0, std::size_t popsize, std::vector<double> mean0,
                  double elite_ratio, double c_m) {
    if (dim < 1) throw std::invalid_argument("cma_init: dim must be >= 1");
    if (popsize < 2) throw std::invalid_argument("cma_init: popsize must be >= 2");
    CmaState s;
    s.dim = dim;
    s.popsize = popsize;
    s.mu = std::max<std::size_t>(1, static_cast<std::size_t>(
                                        static_cast<double>(popsize) * elite_ratio));
    s.mean = mean0.empty() ? std::vector<double>(dim, 0.0) : std::move(mean0);
    if (s.mean.size() != dim) throw std::invalid_argument("cma_init: mean0 size mismatch");
    s.cov = Matrix::identity(dim);
    s.sigma = sigma0;
    s.p_sigma.assign(dim, 0.0);
    s.p_c.assign(dim, 0.0);
    s.c_m = c_m;

    // log-decreasing positive elite weights
    s.weights.resize(s.mu);
    double wsum = 0.0;
    for (std::size_t i = 0; i < s.mu; ++i) {
        s.weights[i] = std::log(static_cast<double>(s.mu) + 0.5) -
                       std::log(static_cast<double>(i) + 1.0);
        wsum += s.weights[i];
    }
    double w2 = 0.0;
    for (double& w : s.weights) {
        w /= wsum;
        w2 += w * w;
    }
    s.mu_eff = 1.0 / w2;

    const double n = static_cast<double>(dim);
    s.c_sigma = (s.mu_eff + 2.0) / (n + s.mu_eff + 5.0);
    s.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((s.mu_eff - 1.0) / (n + 1.0)) - 1.0) + s.c_sigma;
    s.c_c = (4.0 + s.mu_eff / n) / (n + 4.0 + 2.0 * s.mu_eff / n);
    s.c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + s.mu_eff);
    s.c_mu = std::min(1.0 - s.c_1, 2.0 * (s.mu_eff - 2.0 + 1.0 / s.mu_eff) /
                                       ((n + 2.0) * (n + 2.0) + s.mu_eff));
    s.chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
    refresh_eigen(s);
    return s;
}

std::vector<std::vector<double>> cma_ask(CmaState& s, RngState& rng) {
    if (!s.eigen_valid || s.generation - s.eigen_generation >= eigen_interval(s)) {
        refresh_eigen(s);
    }
    std::vector<std::vector<double>> out(s.popsize);
    std::vector<double> z(s.dim), bdz(s.dim);
    for (std::size_t k = 0; k < s.popsize; ++k) {
        for (std::size_t j = 0; j < s.dim; ++j) z[j] = rng_next_normal(rng) * s.eig_sqrt[j];
        for (std::size_t i = 0; i < s.dim; ++i) {
            double acc = 0.0;
            const double* row = s.eig_basis.row(i);
            for (std::size_t j = 0; j < s.dim; ++j) acc += row[j] * z[j];
            bdz[i] = acc;
        }
        std::vector<double> x(s.dim);
        for (std::size_t i = 0; i < s.dim; ++i) x[i] = s.mean[i] + s.sigma * bdz[i];
        out[k] = std::move(x);
    }
    return out;
}

void cma_tell(CmaState& s, const std::vector<std::vector<double>>& candidates,
              const std::vector<double>& fitnesses) {
    if (candidates.size() != s.popsize || fitnesses.size() != s.popsize) {
        throw std::invalid_argument("cma_tell: expected one fitness per candidate");
    }
    std::vector<std::size_t> order(s.popsize);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double fa = fitnesses[a], fb = fitnesses[b];
        const bool na = std::isnan(fa), nb = std::isnan(fb);
        if (na != nb) return nb;  // NaN ranks worst
        if (na && nb) return a < b;
        if (fa != fb) return fa > fb;
        return a < b;
    });

    const std::vector<double> mean_old = s.mean;
    std::vector<double> y_w(s.dim, 0.0);
    std::vector<std::vector<double>> y_elite(s.mu, std::vector<double>(s.dim));
    for (std::size_t r = 0; r < s.mu; ++r) {
        const std::vector<double>& x = candidates[order[r]];
        for (std::size_t i = 0; i < s.dim; ++i) {
            const double yi = (x[i] - mean_old[i]) / s.sigma;
            y_elite[r][i] = yi;
            y_w[i] += s.weights[r] * yi;
        }
    }
    for (std::size_t i = 0; i < s.dim; ++i) s.mean[i] += s.c_m * s.sigma * y_w[i];

    // C^{-1/2} y_w via the cached eigendecomposition
    std::vector<double> tmp(s.dim, 0.0), cinv_yw(s.dim, 0.0);
    for (std::size_t j = 0; j < s.dim; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < s.dim; ++i) acc += s.eig_basis.at(i, j) * y_w[i];
        tmp[j] = acc / s.eig_sqrt[j];
    }
    for (std::size_t i = 0; i < s.dim; ++i) {
        double acc = 0.0;
        const double* row = s.eig_basis.row(i);
        for (std::size_t j = 0; j < s.dim; ++j) acc += row[j] * tmp[j];
        cinv_yw[i] = acc;
    }

    const double cs = s.c_sigma;
    double ps_norm2 = 0.0;
    for (std::size_t i = 0; i < s.dim; ++i) {
        s.p_sigma[i] = (1.0 - cs) * s.p_sigma[i] +
                       std::sqrt(cs * (2.0 - cs) * s.mu_eff) * cinv_yw[i];
        ps_norm2 += s.p_sigma[i] * s.p_sigma[i];
    }
    const double ps_norm = std::sqrt(ps_norm2);
    s.sigma *= std::exp((cs / s.d_sigma) * (ps_norm / s.chi_n - 1.0));

    const double gen1 = static_cast<double>(s.generation + 1);
    const double h_denom = std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * gen1));
    const bool h_sigma =
        ps_norm / h_denom < (1.4 + 2.0 / (static_cast<double>(s.dim) + 1.0)) * s.chi_n;

    const double cc = s.c_c;
    for (std::size_t i = 0; i < s.dim; ++i) {
        s.p_c[i] = (1.0 - cc) * s.p_c[i] +
                   (h_sigma ? std::sqrt(cc * (2.0 - cc) * s.mu_eff) * y_w[i] : 0.0);
    }

    const double delta_h = h_sigma ? 0.0 : cc * (2.0 - cc);
    const double decay = 1.0 - s.c_1 - s.c_mu;  // weights sum to 1
    for (std::size_t i = 0; i < s.dim; ++i) {
        for (std::size_t j = i; j < s.dim; ++j) {
            double v = (decay + s.c_1 * delta_h) * s.cov.at(i, j) +
                       s.c_1 * s.p_c[i] * s.p_c[j];
            for (std::size_t r = 0; r < s.mu; ++r) {
                v += s.c_mu * s.weights[r] * y_elite[r][i] * y_elite[r][j];
            }
            s.cov.at(i, j) = v;
            s.cov.at(j, i) = v;
        }
    }
    s.generation += 1;
}

void save_cma(const CmaState& s, const std::string& path) {
    auto os = open_out(path);
    write_magic(os, "CMAS");
    write_u32(os, 1);
    write_u32(os, static_cast<std::uint32_t>(s.dim));
    write_u32(os, static_cast<std::uint32_t>(s.popsize));
    write_u32(os, static_cast<std::uint32_t>(s.mu));
    write_u32(os, static_cast<std::uint32_t>(s.generation));
    write_f64(os, s.sigma);
    write_f64(os, s.c_m);
    for (double v : s.mean) write_f64(os, v);
    for (double v : s.cov.data) write_f64(os, v);
    for (double v : s.p_sigma) write_f64(os, v);
    for (double v : s.p_c) write_f64(os, v);
    if (!os) throw FormatError("write failed: " + path);
}

CmaState load_cma(const std::string& path) {
    auto is = open_in(path);
    expect_magic(is, "CMAS", path);
    if (read_u32(is) != 1) throw FormatError("cma state: unsupported version");
    const std::size_t dim = read_u32(is);
    const std::size_t popsize = read_u32(is);
    const std::size_t mu = read_u32(is);
    const std::size_t generation = read_u32(is);
    const double sigma = read_f64(is);
    const double c_m = read_f64(is);
    CmaState s = cma_init(dim, sigma, popsize, {},
                          static_cast<double>(mu) / static_cast<double>(popsize), c_m);
    s.generation = generation;
    for (double& v : s.mean) v = read_f64(is);
    for (double& v : s.cov.data) v = read_f64(is);
    for (double& v : s.p_sigma) v = read_f64(is);
    for (double& v : s.p_c) v = read_f64(is);
    s.eigen_valid = false;
    return s;
}

}  // namespace nammkit
