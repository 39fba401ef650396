#ifndef MMCVAE_EVAL_HPP
#define MMCVAE_EVAL_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmcvae/data.hpp"
#include "mmcvae/kernels.hpp"
#include "mmcvae/model.hpp"

/**
 * @file eval.hpp
 * @brief Quantitative evaluation of learned latent spaces.
 *
 * Two families of metrics are computed on posterior-mean embeddings:
 * adherence (is z distributed the same for target and background rows, and
 * do background salient codes sit on s′?) where lower is better, and
 * separation (does s, but not z, carry the target class?) where high salient
 * and low background scores are better. Sample quality compares decoded prior
 * draws against real data with the MMD.
 */

namespace mmcvae {

struct LogisticModel {
    std::vector<double> weights;
    double bias = 0.0;
    std::size_t iterations = 0;
    bool converged = false;

    double decision(std::span<const double> row) const;
    int predict(std::span<const double> row) const { return decision(row) > 0.0 ? 1 : 0; }
};

/**
 * L2-regularized binary logistic regression,
 *
 *     mean log-loss + (l2 / 2n)·‖w‖²     (bias unpenalized),
 *
 * minimized by full-batch gradient descent with Armijo backtracking. Stops
 * when the gradient ∞-norm drops below 1e-6 or after `max_iter` iterations.
 * Labels must be 0/1 with at least two rows of each.
 */
LogisticModel logistic_fit(const Matrix& x, const std::vector<int>& y, std::size_t max_iter = 1000, double l2 = 1.0);

double logistic_objective(const LogisticModel& model, const Matrix& x, const std::vector<int>& y, double l2 = 1.0);

struct Embeddings {
    Matrix points;
    std::vector<int> labels;
    std::vector<Origin> origin;

    void validate() const;
};

enum class LabelSource { class_label, origin };

/**
 * Held-out accuracy of a logistic probe trained on a stratified 80% split.
 *
 * Rows are first put in a canonical order (by label, then lexicographically
 * by coordinates) so the result does not depend on input order. More than two
 * classes are handled one-vs-rest. Throws ConfigError if a class would be
 * missing from either side of the split.
 */
double accuracy_80_20(const Embeddings& emb, LabelSource source, std::uint64_t seed);

/// Same procedure on a bare (points, labels) pair.
double holdout_accuracy(const Matrix& points, const std::vector<int>& labels, std::uint64_t seed,
                        double train_fraction = 0.8);

struct SilhouetteResult {
    double score = 0.0;
    /// Set when some point had a(i) = b(i) = 0; those points score 0.
    bool degenerate = false;
};

/// Mean over points of (b − a) / max(a, b) with Euclidean distance; singleton clusters score 0.
SilhouetteResult silhouette_detailed(const Matrix& points, const std::vector<int>& labels);
double silhouette(const Matrix& points, const std::vector<int>& labels);

struct PcaResult {
    Matrix coordinates;                 ///< n × 2 projected scores
    std::array<double, 2> explained_variance{};
    Matrix components;                  ///< 2 × k loadings
};

/// Top two principal components of the column-centered data; each component's largest-|loading| entry is positive.
PcaResult pca_2d(const Matrix& x);

struct AdherenceMetrics {
    double logistic_z_origin = 0.0;
    double silhouette_z_origin = 0.0;
    double logistic_s_vs_sprime = 0.0;
    double silhouette_s_vs_sprime = 0.0;
    bool silhouette_s_degenerate = false;
};

struct SeparationMetrics {
    double logistic_s_class = 0.0;
    double silhouette_s_class = 0.0;
    double logistic_z_class = 0.0;
    double silhouette_z_class = 0.0;
};

/// z_x vs z_b by origin, and s_b vs one copy of s′ per background row.
AdherenceMetrics assumption_report(const MmcVaeModel& model, const LabeledDataset& target,
                                   const LabeledDataset& background, std::uint64_t seed);

/// Target class separability in s_x and z_x. Requires class labels on `target`.
SeparationMetrics separation_report(const MmcVaeModel& model, const LabeledDataset& target, std::uint64_t seed);

/**
 * MMD between `n_gen` decoded prior samples and `real`. Target samples draw
 * s ~ N(0, I); background samples use s = s′.
 */
double sample_quality_mmd(const MmcVaeModel& model, const Matrix& real, Origin origin, std::size_t n_gen, Rng& rng,
                          const KernelConfig& kernel);

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  ///< sample standard deviation over seeds (0 for a single seed)
    std::vector<double> per_seed;

    static MetricSummary from(std::vector<double> values);
};

struct EvalOptions {
    std::vector<std::uint64_t> seeds{0};
    std::size_t n_gen = 500;
    KernelConfig kernel = KernelConfig::median();
};

struct EvalReport {
    std::vector<std::uint64_t> seeds;
    MetricSummary logistic_z_origin, silhouette_z_origin, logistic_s_vs_sprime, silhouette_s_vs_sprime;
    bool silhouette_s_degenerate = false;
    bool has_separation = false;
    MetricSummary logistic_s_class, silhouette_s_class, logistic_z_class, silhouette_z_class;
    MetricSummary mmd_background, mmd_target;
    std::vector<std::string> notices;
};

EvalReport evaluate_model(const MmcVaeModel& model, const LabeledDataset& target, const LabeledDataset& background,
                          const EvalOptions& options);

/// Structured document: sections → metric → {mean, std, per_seed}.
std::string report_to_json(const EvalReport& report);
/// Flat table: section,metric,mean,std,seed_<k>...
std::string report_to_csv(const EvalReport& report);

}  // namespace mmcvae

#endif
