#ifndef MMCVAE_KERNELS_HPP
#define MMCVAE_KERNELS_HPP

#include <span>
#include <vector>

#include "mmcvae/tensor.hpp"

/**
 * @file kernels.hpp
 * @brief Gaussian kernel and the biased (V-statistic) maximum mean discrepancy.
 *
 * For samples X (n×d) and Y (m×d) the estimator is
 *
 *     (1/n²) Σᵢⱼ k(xᵢ,xⱼ) − (2/nm) Σᵢⱼ k(xᵢ,yⱼ) + (1/m²) Σᵢⱼ k(yᵢ,yⱼ)
 *
 * with diagonal terms included, and k(x,y) = exp(−γ‖x−y‖²).
 */

namespace mmcvae {

struct KernelConfig {
    enum class Mode { fixed, median_heuristic, multi_scale };

    Mode mode = Mode::median_heuristic;
    /// One value for `fixed`, the full list for `multi_scale`, unused otherwise.
    std::vector<double> gammas;

    static KernelConfig fixed(double gamma);
    static KernelConfig median();
    static KernelConfig multi_scale(std::vector<double> gammas);

    /// Throws ConfigError on non-positive γ or an empty multi-scale list.
    void validate() const;
};

double gaussian_kernel(std::span<const double> x, std::span<const double> y, double gamma);

/**
 * Bandwidth from the pooled sample: γ = 1 / (2·median of squared pairwise
 * distances over all distinct pairs). Falls back to γ = 1 when that median is 0.
 */
double median_heuristic(const Matrix& x, const Matrix& y);
double median_heuristic(const Matrix& points);

/// Concrete bandwidth list for comparing `x` against `y` under `cfg`.
std::vector<double> resolve_gammas(const KernelConfig& cfg, const Matrix& x, const Matrix& y);
/// Bandwidths for comparing `x` against the point mass at `c` (pooled set is X ∪ {c}).
std::vector<double> resolve_gammas(const KernelConfig& cfg, const Matrix& x, std::span<const double> c);

double mmd_biased(const Matrix& x, const Matrix& y, const KernelConfig& cfg);
/// MMD between the empirical distribution of `x` and a Dirac at `c`, in closed form.
double mmd_to_constant(const Matrix& x, std::span<const double> c, const KernelConfig& cfg);

struct MmdGradient {
    double value = 0.0;
    Matrix grad_x;
    Matrix grad_y;
};

/// Value and gradient for explicit bandwidths (summed over the list).
MmdGradient mmd_biased_with_grad(const Matrix& x, const Matrix& y, std::span<const double> gammas);
/// Value and gradient w.r.t. `x`; `grad_y` is left empty.
MmdGradient mmd_to_constant_with_grad(const Matrix& x, std::span<const double> c, std::span<const double> gammas);

/**
 * Permutation two-sample test on the biased MMD statistic.
 *
 * The bandwidth is resolved once on the pooled sample, which every
 * relabelling leaves unchanged. Returns (1 + #{permuted ≥ observed}) / (1 + n_perm).
 */
double permutation_test(const Matrix& x, const Matrix& y, const KernelConfig& cfg, std::size_t n_perm, Rng& rng);

}  // namespace mmcvae

#endif
