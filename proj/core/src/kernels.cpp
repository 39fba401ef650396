#include "mmcvae/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mmcvae {

namespace {

double squared_distance(const double* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double diff = a[k] - b[k];
        acc += diff * diff;
    }
    return acc;
}

void check_pair(const Matrix& x, const Matrix& y, const char* what) {
    if (x.rows() == 0 || y.rows() == 0) {
        throw DimensionError(std::string(what) + ": empty sample (" + x.shape_string() + ", " + y.shape_string() +
                             ")");
    }
    if (x.cols() != y.cols()) {
        throw DimensionError(std::string(what) + ": dimension mismatch " + x.shape_string() + " vs " +
                             y.shape_string());
    }
}

void check_constant(const Matrix& x, std::span<const double> c) {
    if (x.rows() == 0) {
        throw DimensionError("mmd_to_constant: empty sample");
    }
    if (x.cols() != c.size()) {
        throw DimensionError("mmd_to_constant: sample " + x.shape_string() + " vs constant of dimension " +
                             std::to_string(c.size()));
    }
}

void check_gammas(std::span<const double> gammas) {
    if (gammas.empty()) {
        throw ConfigError("kernel bandwidth list is empty");
    }
    for (double g : gammas) {
        if (!(g > 0.0) || !std::isfinite(g)) {
            throw ConfigError("kernel bandwidth must be positive and finite, got " + std::to_string(g));
        }
    }
}

// Mean of k over all ordered pairs (a_i, b_j), summed over bandwidths.
double block_mean(const Matrix& a, const Matrix& b, std::span<const double> gammas) {
    const std::size_t d = a.cols();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double sq = squared_distance(ai, b.row(j).data(), d);
            for (double g : gammas) {
                acc += std::exp(-g * sq);
            }
        }
    }
    return acc / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

double median_of(std::vector<double>& values) {
    const std::size_t n = values.size();
    const std::size_t mid = n / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (n % 2 == 1) {
        return upper;
    }
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

}  // namespace

KernelConfig KernelConfig::fixed(double gamma) {
    KernelConfig cfg{Mode::fixed, {gamma}};
    cfg.validate();
    return cfg;
}

KernelConfig KernelConfig::median() { return KernelConfig{Mode::median_heuristic, {}}; }

KernelConfig KernelConfig::multi_scale(std::vector<double> gammas) {
    KernelConfig cfg{Mode::multi_scale, std::move(gammas)};
    cfg.validate();
    return cfg;
}

void KernelConfig::validate() const {
    switch (mode) {
        case Mode::fixed:
            if (gammas.size() != 1) {
                throw ConfigError("fixed kernel needs exactly one bandwidth");
            }
            check_gammas(gammas);
            break;
        case Mode::multi_scale:
            check_gammas(gammas);
            break;
        case Mode::median_heuristic:
            break;
    }
}

double gaussian_kernel(std::span<const double> x, std::span<const double> y, double gamma) {
    if (x.size() != y.size()) {
        throw DimensionError("gaussian_kernel: dimension mismatch " + std::to_string(x.size()) + " vs " +
                             std::to_string(y.size()));
    }
    if (!(gamma > 0.0)) {
        throw ConfigError("gaussian_kernel: gamma must be positive");
    }
    return std::exp(-gamma * squared_distance(x.data(), y.data(), x.size()));
}

double median_heuristic(const Matrix& points) {
    const std::size_t n = points.rows();
    if (n < 2) {
        throw DimensionError("median_heuristic: need at least 2 pooled points, got " + std::to_string(n));
    }
    std::vector<double> sq;
    sq.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            sq.push_back(squared_distance(points.row(i).data(), points.row(j).data(), points.cols()));
        }
    }
    const double med = median_of(sq);
    if (!(med > 0.0)) {
        return 1.0;
    }
    return 1.0 / (2.0 * med);
}

double median_heuristic(const Matrix& x, const Matrix& y) {
    if (!x.empty() && !y.empty() && x.cols() != y.cols()) {
        throw DimensionError("median_heuristic: dimension mismatch " + x.shape_string() + " vs " + y.shape_string());
    }
    return median_heuristic(vconcat(x, y));
}

std::vector<double> resolve_gammas(const KernelConfig& cfg, const Matrix& x, const Matrix& y) {
    cfg.validate();
    if (cfg.mode == KernelConfig::Mode::median_heuristic) {
        return {median_heuristic(x, y)};
    }
    return cfg.gammas;
}

std::vector<double> resolve_gammas(const KernelConfig& cfg, const Matrix& x, std::span<const double> c) {
    cfg.validate();
    if (cfg.mode == KernelConfig::Mode::median_heuristic) {
        return {median_heuristic(x, Matrix::row_vector(c))};
    }
    return cfg.gammas;
}

double mmd_biased(const Matrix& x, const Matrix& y, const KernelConfig& cfg) {
    check_pair(x, y, "mmd_biased");
    const auto gammas = resolve_gammas(cfg, x, y);
    return block_mean(x, x, gammas) - 2.0 * block_mean(x, y, gammas) + block_mean(y, y, gammas);
}

double mmd_to_constant(const Matrix& x, std::span<const double> c, const KernelConfig& cfg) {
    check_constant(x, c);
    const auto gammas = resolve_gammas(cfg, x, c);
    const Matrix point = Matrix::row_vector(c);
    // k(c, c) = 1 for each bandwidth.
    return block_mean(x, x, gammas) - 2.0 * block_mean(x, point, gammas) + static_cast<double>(gammas.size());
}

MmdGradient mmd_biased_with_grad(const Matrix& x, const Matrix& y, std::span<const double> gammas) {
    check_pair(x, y, "mmd_biased_with_grad");
    check_gammas(gammas);
    const std::size_t n = x.rows(), m = y.rows(), d = x.cols();
    const double inv_nn = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
    const double inv_mm = 1.0 / (static_cast<double>(m) * static_cast<double>(m));
    const double inv_nm = 1.0 / (static_cast<double>(n) * static_cast<double>(m));

    MmdGradient out{0.0, Matrix(n, d), Matrix(m, d)};
    double sxx = 0.0, sxy = 0.0, syy = 0.0;

    // ∂k(a,b)/∂a = −2γ k(a,b) (a − b). Each block term is differentiated
    // w.r.t. its row argument; symmetric blocks contribute twice.
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.row(i).data();
        double* gx = out.grad_x.row(i).data();
        for (std::size_t j = 0; j < n; ++j) {
            const double* xj = x.row(j).data();
            const double sq = squared_distance(xi, xj, d);
            double coeff = 0.0;
            for (double g : gammas) {
                const double k = std::exp(-g * sq);
                sxx += k;
                coeff += -2.0 * g * k;
            }
            const double scale = 2.0 * inv_nn * coeff;
            for (std::size_t c = 0; c < d; ++c) {
                gx[c] += scale * (xi[c] - xj[c]);
            }
        }
        for (std::size_t j = 0; j < m; ++j) {
            const double* yj = y.row(j).data();
            const double sq = squared_distance(xi, yj, d);
            double coeff = 0.0;
            for (double g : gammas) {
                const double k = std::exp(-g * sq);
                sxy += k;
                coeff += -2.0 * g * k;
            }
            const double scale = -2.0 * inv_nm * coeff;
            double* gy = out.grad_y.row(j).data();
            for (std::size_t c = 0; c < d; ++c) {
                gx[c] += scale * (xi[c] - yj[c]);
                gy[c] += scale * (yj[c] - xi[c]);
            }
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        const double* yi = y.row(i).data();
        double* gy = out.grad_y.row(i).data();
        for (std::size_t j = 0; j < m; ++j) {
            const double* yj = y.row(j).data();
            const double sq = squared_distance(yi, yj, d);
            double coeff = 0.0;
            for (double g : gammas) {
                const double k = std::exp(-g * sq);
                syy += k;
                coeff += -2.0 * g * k;
            }
            const double scale = 2.0 * inv_mm * coeff;
            for (std::size_t c = 0; c < d; ++c) {
                gy[c] += scale * (yi[c] - yj[c]);
            }
        }
    }
    out.value = sxx * inv_nn - 2.0 * sxy * inv_nm + syy * inv_mm;
    return out;
}

MmdGradient mmd_to_constant_with_grad(const Matrix& x, std::span<const double> c, std::span<const double> gammas) {
    check_constant(x, c);
    check_gammas(gammas);
    const std::size_t n = x.rows(), d = x.cols();
    const double inv_nn = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
    const double inv_n = 1.0 / static_cast<double>(n);

    MmdGradient out{0.0, Matrix(n, d), Matrix()};
    double sxx = 0.0, sxc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.row(i).data();
        double* gx = out.grad_x.row(i).data();
        for (std::size_t j = 0; j < n; ++j) {
            const double* xj = x.row(j).data();
            const double sq = squared_distance(xi, xj, d);
            double coeff = 0.0;
            for (double g : gammas) {
                const double k = std::exp(-g * sq);
                sxx += k;
                coeff += -2.0 * g * k;
            }
            const double scale = 2.0 * inv_nn * coeff;
            for (std::size_t col = 0; col < d; ++col) {
                gx[col] += scale * (xi[col] - xj[col]);
            }
        }
        const double sq = squared_distance(xi, c.data(), d);
        double coeff = 0.0;
        for (double g : gammas) {
            const double k = std::exp(-g * sq);
            sxc += k;
            coeff += -2.0 * g * k;
        }
        const double scale = -2.0 * inv_n * coeff;
        for (std::size_t col = 0; col < d; ++col) {
            gx[col] += scale * (xi[col] - c[col]);
        }
    }
    out.value = sxx * inv_nn - 2.0 * sxc * inv_n + static_cast<double>(gammas.size());
    return out;
}

double permutation_test(const Matrix& x, const Matrix& y, const KernelConfig& cfg, std::size_t n_perm, Rng& rng) {
    check_pair(x, y, "permutation_test");
    if (n_perm < 100) {
        throw ConfigError("permutation_test: n_perm must be at least 100");
    }
    const Matrix pooled = vconcat(x, y);
    const auto gammas = resolve_gammas(cfg, x, y);
    const std::size_t total = pooled.rows(), n = x.rows(), m = y.rows();

    Matrix gram(total, total);
    for (std::size_t i = 0; i < total; ++i) {
        for (std::size_t j = i; j < total; ++j) {
            const double sq = squared_distance(pooled.row(i).data(), pooled.row(j).data(), pooled.cols());
            double k = 0.0;
            for (double g : gammas) {
                k += std::exp(-g * sq);
            }
            gram(i, j) = k;
            gram(j, i) = k;
        }
    }

    std::vector<unsigned char> in_x(total, 0);
    auto statistic = [&]() {
        double sxx = 0.0, sxy = 0.0, syy = 0.0;
        for (std::size_t i = 0; i < total; ++i) {
            const double* gi = gram.row(i).data();
            for (std::size_t j = 0; j < total; ++j) {
                if (in_x[i] && in_x[j]) {
                    sxx += gi[j];
                } else if (!in_x[i] && !in_x[j]) {
                    syy += gi[j];
                } else if (in_x[i]) {
                    sxy += gi[j];
                }
            }
        }
        const double dn = static_cast<double>(n), dm = static_cast<double>(m);
        return sxx / (dn * dn) - 2.0 * sxy / (dn * dm) + syy / (dm * dm);
    };

    std::fill(in_x.begin(), in_x.begin() + static_cast<std::ptrdiff_t>(n), 1);
    const double observed = statistic();
    // Ties within rounding count as "at least as extreme".
    const double tolerance = 1e-12;

    std::size_t exceed = 0;
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) {
        order[i] = i;
    }
    for (std::size_t p = 0; p < n_perm; ++p) {
        rng.shuffle(std::span<std::size_t>(order));
        std::fill(in_x.begin(), in_x.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            in_x[order[i]] = 1;
        }
        if (statistic() >= observed - tolerance) {
            ++exceed;
        }
    }
    return static_cast<double>(1 + exceed) / static_cast<double>(1 + n_perm);
}

}  // namespace mmcvae
