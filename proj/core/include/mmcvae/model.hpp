#ifndef MMCVAE_MODEL_HPP
#define MMCVAE_MODEL_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "mmcvae/kernels.hpp"
#include "mmcvae/tensor.hpp"

/**
 * @file model.hpp
 * @brief The moment matching contrastive VAE.
 *
 * Two encoders map an observation to diagonal Gaussian posteriors over the
 * background latents z and the salient latents s. A single decoder consumes
 * the concatenation [z ‖ s]; background observations are always decoded with
 * the fixed reference vector s′ in the salient slot.
 *
 * The objective minimized by training is
 *
 *     −ELBO_target(X) − bound_background(B)
 *       + λ₁·MMD(s samples of B, δ{s′}) + λ₂·MMD(z samples of X, z samples of B)
 *
 * where every bound term is a per-row mean over its batch.
 */

namespace mmcvae {

enum class Likelihood { gaussian_unit_variance, bernoulli };

enum class LatentBlock { background, salient };

enum class KeepLatents { background_only, salient_only, both };

std::string to_string(Likelihood likelihood);
Likelihood likelihood_from_string(const std::string& name);

/// Clamp range applied to encoder log-variances.
inline constexpr double kLogvarMin = -15.0;
inline constexpr double kLogvarMax = 15.0;

struct ModelShape {
    std::size_t input_dim = 0;
    std::size_t background_dim = 10;
    std::size_t salient_dim = 5;
    std::size_t hidden_dim = 400;
    Likelihood likelihood = Likelihood::gaussian_unit_variance;
    bool zero_bias_decoder = false;

    void validate() const;
};

struct GaussianPosterior {
    Matrix mu;
    Matrix logvar;
};

/// input → ReLU hidden → (mu, logvar) heads.
struct Encoder {
    Param hidden_weight;
    Param hidden_bias;
    Param mu_weight;
    Param mu_bias;
    Param logvar_weight;
    Param logvar_bias;
};

/// [z ‖ s] → ReLU hidden → output mean (sigmoid-squashed for Bernoulli).
struct Decoder {
    Param hidden_weight;
    Param hidden_bias;
    Param output_weight;
    Param output_bias;
};

struct MmcVaeModel {
    ModelShape shape;
    Encoder encoder_z;
    Encoder encoder_s;
    Decoder decoder;
    std::vector<double> s_prime;

    /**
     * He-initialized ReLU layers (N(0, 2/fan_in)), LeCun-initialized linear
     * heads (N(0, 1/fan_in)), zero biases. An empty `s_prime` means the zero vector.
     */
    static MmcVaeModel initialize(const ModelShape& shape, Rng& rng, std::vector<double> s_prime = {});

    /// Every parameter in a fixed canonical order.
    std::vector<Param*> parameters();
    std::vector<const Param*> parameters() const;
    /// Parameters updated by the optimizer; decoder biases are excluded under zero_bias_decoder.
    std::vector<Param*> trainable_parameters();

    void zero_grad();
    /// Throws DimensionError if any parameter or s′ disagrees with `shape`.
    void validate() const;
};

GaussianPosterior encode(const MmcVaeModel& model, const Matrix& x, LatentBlock which);

/// mu + exp(logvar/2) ⊙ ε with ε ~ N(0, 1).
Matrix reparameterize(const GaussianPosterior& post, Rng& rng);
Matrix reparameterize(const GaussianPosterior& post, const Matrix& noise);

/// ½ Σ_dims (μ² + σ² − 1 − log σ²), averaged over rows.
double kl_std_normal(const GaussianPosterior& post);

/**
 * Mean over rows of log p(x | x̂).
 *
 * Gaussian (unit variance): −½‖x − x̂‖² − (d/2) ln 2π. Bernoulli:
 * Σ x ln x̂ + (1 − x) ln(1 − x̂) with x̂ clamped to [1e-7, 1 − 1e-7]; requires x ∈ [0, 1].
 */
double recon_log_lik(const Matrix& x, const Matrix& x_hat, Likelihood likelihood);

struct TargetBound {
    double value = 0.0;
    double recon = 0.0;
    double kl_z = 0.0;
    double kl_s = 0.0;
};

struct BackgroundBound {
    double value = 0.0;
    double recon = 0.0;
    double kl_z = 0.0;
};

/// Single-sample reparameterized target ELBO; draws z noise then s noise from `rng`.
TargetBound elbo_target(const MmcVaeModel& model, const Matrix& x, Rng& rng);
/// E[log p(b | z, s′)] − KL(q(z|b) ‖ N(0, I)); draws z noise from `rng`.
BackgroundBound background_bound(const MmcVaeModel& model, const Matrix& b, Rng& rng);

struct LossBreakdown {
    double recon_target = 0.0;
    double kl_z_target = 0.0;
    double kl_s_target = 0.0;
    double recon_background = 0.0;
    double kl_z_background = 0.0;
    double mmd_salient_dirac = 0.0;
    double mmd_background_match = 0.0;
    double total = 0.0;

    double lambda1 = 0.0;
    double lambda2 = 0.0;
    /// Bandwidths the two penalties were evaluated with (held fixed for the gradient).
    std::vector<double> salient_gammas;
    std::vector<double> match_gammas;

    /// Recomputes the objective from the components.
    double weighted_total() const;
};

/**
 * Full objective on one (target, background) minibatch pair.
 *
 * Noise is drawn in the order z|X, s|X, z|B, s|B, so the bound components
 * agree with `elbo_target` followed by `background_bound` on the same stream.
 * Median-heuristic bandwidths are resolved on each compared pair and treated
 * as constants of the step.
 */
LossBreakdown total_loss(const MmcVaeModel& model, const Matrix& x, const Matrix& b, double lambda1, double lambda2,
                         const KernelConfig& kernel, Rng& rng);

/// As `total_loss`, and accumulates d(total)/dθ into every parameter's grad.
LossBreakdown total_loss_backward(MmcVaeModel& model, const Matrix& x, const Matrix& b, double lambda1,
                                  double lambda2, const KernelConfig& kernel, Rng& rng);

/// Decoder mean for latent blocks `z` (n×d_z) and `s` (n×d_s).
Matrix generate(const MmcVaeModel& model, const Matrix& z, const Matrix& s);

/// Encode with posterior means, zero the suppressed block, decode.
Matrix reconstruct_partial(const MmcVaeModel& model, const Matrix& x, KeepLatents keep);

}  // namespace mmcvae

#endif
