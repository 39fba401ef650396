#include "mmcvae/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mmcvae {

namespace {

constexpr double kProbClamp = 1e-7;

struct EncoderCache {
    Matrix input;
    Matrix hidden_pre;
    Matrix hidden;
    Matrix logvar_raw;
};

struct DecoderCache {
    Matrix input;
    Matrix hidden_pre;
    Matrix hidden;
    Matrix output_pre;
};

Param init_weight(const std::string& name, std::size_t fan_in, std::size_t fan_out, double gain, Rng& rng) {
    Matrix w = sample_std_normal(rng, fan_in, fan_out);
    const double scale = std::sqrt(gain / static_cast<double>(fan_in));
    for (double& v : w.values()) {
        v *= scale;
    }
    return Param(name, std::move(w));
}

Param zero_bias(const std::string& name, std::size_t width) { return Param(name, Matrix(1, width)); }

Encoder make_encoder(const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t latent, Rng& rng) {
    Encoder e;
    e.hidden_weight = init_weight(prefix + ".hidden.weight", in, hidden, 2.0, rng);
    e.hidden_bias = zero_bias(prefix + ".hidden.bias", hidden);
    e.mu_weight = init_weight(prefix + ".mu.weight", hidden, latent, 1.0, rng);
    e.mu_bias = zero_bias(prefix + ".mu.bias", latent);
    e.logvar_weight = init_weight(prefix + ".logvar.weight", hidden, latent, 1.0, rng);
    e.logvar_bias = zero_bias(prefix + ".logvar.bias", latent);
    return e;
}

GaussianPosterior encoder_forward(const Encoder& enc, const Matrix& x, EncoderCache* cache) {
    Matrix hidden_pre = affine_forward(x, enc.hidden_weight, enc.hidden_bias, false);
    Matrix hidden = relu_forward(hidden_pre);
    Matrix mu = affine_forward(hidden, enc.mu_weight, enc.mu_bias, false);
    Matrix logvar_raw = affine_forward(hidden, enc.logvar_weight, enc.logvar_bias, false);
    Matrix logvar = logvar_raw;
    for (double& v : logvar.values()) {
        v = std::clamp(v, kLogvarMin, kLogvarMax);
    }
    if (cache != nullptr) {
        cache->input = x;
        cache->hidden_pre = std::move(hidden_pre);
        cache->hidden = std::move(hidden);
        cache->logvar_raw = std::move(logvar_raw);
    }
    return {std::move(mu), std::move(logvar)};
}

void encoder_backward(Encoder& enc, const EncoderCache& cache, const Matrix& grad_mu, Matrix grad_logvar) {
    auto g = grad_logvar.values();
    auto raw = cache.logvar_raw.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (raw[i] < kLogvarMin || raw[i] > kLogvarMax) {
            g[i] = 0.0;
        }
    }
    Matrix grad_hidden = affine_backward(grad_mu, cache.hidden, enc.mu_weight, enc.mu_bias, false);
    grad_hidden += affine_backward(grad_logvar, cache.hidden, enc.logvar_weight, enc.logvar_bias, false);
    Matrix grad_pre = relu_backward(grad_hidden, cache.hidden_pre);
    affine_backward(grad_pre, cache.input, enc.hidden_weight, enc.hidden_bias, false, false);
}

Matrix squash(Matrix pre, Likelihood likelihood) {
    if (likelihood == Likelihood::bernoulli) {
        for (double& v : pre.values()) {
            v = 1.0 / (1.0 + std::exp(-v));
        }
    }
    return pre;
}

Matrix decoder_forward(const MmcVaeModel& model, const Matrix& latent, DecoderCache* cache) {
    const Decoder& dec = model.decoder;
    const bool zb = model.shape.zero_bias_decoder;
    Matrix hidden_pre = affine_forward(latent, dec.hidden_weight, dec.hidden_bias, zb);
    Matrix hidden = relu_forward(hidden_pre);
    Matrix output_pre = affine_forward(hidden, dec.output_weight, dec.output_bias, zb);
    Matrix mean = squash(output_pre, model.shape.likelihood);
    if (cache != nullptr) {
        cache->input = latent;
        cache->hidden_pre = std::move(hidden_pre);
        cache->hidden = std::move(hidden);
        cache->output_pre = std::move(output_pre);
    }
    return mean;
}

// Returns dL/d(latent input).
Matrix decoder_backward(MmcVaeModel& model, const DecoderCache& cache, const Matrix& grad_output_pre) {
    Decoder& dec = model.decoder;
    const bool zb = model.shape.zero_bias_decoder;
    Matrix grad_hidden = affine_backward(grad_output_pre, cache.hidden, dec.output_weight, dec.output_bias, zb);
    Matrix grad_pre = relu_backward(grad_hidden, cache.hidden_pre);
    return affine_backward(grad_pre, cache.input, dec.hidden_weight, dec.hidden_bias, zb);
}

void check_bernoulli_targets(const Matrix& x) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double v = x(i, j);
            if (!(v >= 0.0 && v <= 1.0)) {
                throw ConfigError("bernoulli likelihood requires inputs in [0,1]; entry (" + std::to_string(i) +
                                  ", " + std::to_string(j) + ") = " + std::to_string(v));
            }
        }
    }
}

// Mean log-likelihood and, optionally, d(mean log-lik)/d(decoder pre-activation).
double recon_with_grad(const Matrix& x, const Matrix& mean, const Matrix& output_pre, Likelihood likelihood,
                       Matrix* grad_pre) {
    require_same_shape(x, mean, "recon_log_lik");
    const double n = static_cast<double>(x.rows());
    const double d = static_cast<double>(x.cols());
    if (grad_pre != nullptr) {
        *grad_pre = Matrix(x.rows(), x.cols());
    }
    double total = 0.0;
    if (likelihood == Likelihood::gaussian_unit_variance) {
        const double log_norm = 0.5 * d * std::log(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < x.cols(); ++j) {
                const double r = x(i, j) - mean(i, j);
                sq += r * r;
                if (grad_pre != nullptr) {
                    (*grad_pre)(i, j) = r / n;
                }
            }
            total += -0.5 * sq - log_norm;
        }
    } else {
        check_bernoulli_targets(x);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < x.cols(); ++j) {
                const double p_raw = mean(i, j);
                const double p = std::clamp(p_raw, kProbClamp, 1.0 - kProbClamp);
                const double t = x(i, j);
                row += t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
                if (grad_pre != nullptr) {
                    const bool clamped = p_raw < kProbClamp || p_raw > 1.0 - kProbClamp;
                    (*grad_pre)(i, j) = clamped ? 0.0 : (t - p_raw) / n;
                }
            }
            total += row;
        }
        (void)output_pre;
    }
    return total / n;
}

void kl_grad(const GaussianPosterior& post, Matrix& grad_mu, Matrix& grad_logvar, double scale) {
    const double n = static_cast<double>(post.mu.rows());
    auto mu = post.mu.values();
    auto lv = post.logvar.values();
    auto gm = grad_mu.values();
    auto gl = grad_logvar.values();
    for (std::size_t i = 0; i < mu.size(); ++i) {
        gm[i] += scale * mu[i] / n;
        gl[i] += scale * 0.5 * (std::exp(lv[i]) - 1.0) / n;
    }
}

// Chain d/d(sample) back through mu + exp(lv/2)·ε.
void reparam_grad(const GaussianPosterior& post, const Matrix& noise, const Matrix& grad_sample, Matrix& grad_mu,
                  Matrix& grad_logvar) {
    auto lv = post.logvar.values();
    auto eps = noise.values();
    auto gs = grad_sample.values();
    auto gm = grad_mu.values();
    auto gl = grad_logvar.values();
    for (std::size_t i = 0; i < gs.size(); ++i) {
        gm[i] += gs[i];
        gl[i] += gs[i] * eps[i] * 0.5 * std::exp(0.5 * lv[i]);
    }
}

void check_batch(const MmcVaeModel& model, const Matrix& x, const char* what) {
    if (x.rows() == 0) {
        throw DimensionError(std::string(what) + ": empty batch");
    }
    if (x.cols() != model.shape.input_dim) {
        throw DimensionError(std::string(what) + ": batch " + x.shape_string() + " does not match model input dim " +
                             std::to_string(model.shape.input_dim));
    }
}

LossBreakdown evaluate_objective(const MmcVaeModel& model, const Matrix& x, const Matrix& b, double lambda1,
                                 double lambda2, const KernelConfig& kernel, Rng& rng, MmcVaeModel* grads) {
    check_batch(model, x, "total_loss (target)");
    check_batch(model, b, "total_loss (background)");
    const std::size_t n = x.rows(), m = b.rows();
    const std::size_t dz = model.shape.background_dim, ds = model.shape.salient_dim;
    const bool backward = grads != nullptr;

    EncoderCache czx, csx, czb, csb;
    GaussianPosterior zx = encoder_forward(model.encoder_z, x, backward ? &czx : nullptr);
    GaussianPosterior sx = encoder_forward(model.encoder_s, x, backward ? &csx : nullptr);
    GaussianPosterior zb = encoder_forward(model.encoder_z, b, backward ? &czb : nullptr);
    GaussianPosterior sb = encoder_forward(model.encoder_s, b, backward ? &csb : nullptr);

    const Matrix eps_zx = sample_std_normal(rng, n, dz);
    const Matrix eps_sx = sample_std_normal(rng, n, ds);
    const Matrix eps_zb = sample_std_normal(rng, m, dz);
    const Matrix eps_sb = sample_std_normal(rng, m, ds);

    const Matrix zx_s = reparameterize(zx, eps_zx);
    const Matrix sx_s = reparameterize(sx, eps_sx);
    const Matrix zb_s = reparameterize(zb, eps_zb);
    const Matrix sb_s = reparameterize(sb, eps_sb);

    DecoderCache cdx, cdb;
    const Matrix x_hat = decoder_forward(model, hconcat(zx_s, sx_s), backward ? &cdx : nullptr);
    const Matrix b_latent = hconcat(zb_s, tile_row(model.s_prime, m));
    const Matrix b_hat = decoder_forward(model, b_latent, backward ? &cdb : nullptr);

    Matrix grad_x_pre, grad_b_pre;
    LossBreakdown out;
    out.lambda1 = lambda1;
    out.lambda2 = lambda2;
    out.recon_target = recon_with_grad(x, x_hat, cdx.output_pre, model.shape.likelihood,
                                       backward ? &grad_x_pre : nullptr);
    out.recon_background = recon_with_grad(b, b_hat, cdb.output_pre, model.shape.likelihood,
                                           backward ? &grad_b_pre : nullptr);
    out.kl_z_target = kl_std_normal(zx);
    out.kl_s_target = kl_std_normal(sx);
    out.kl_z_background = kl_std_normal(zb);

    out.salient_gammas = resolve_gammas(kernel, sb_s, model.s_prime);
    out.match_gammas = resolve_gammas(kernel, zx_s, zb_s);
    const MmdGradient dirac = mmd_to_constant_with_grad(sb_s, model.s_prime, out.salient_gammas);
    const MmdGradient match = mmd_biased_with_grad(zx_s, zb_s, out.match_gammas);
    out.mmd_salient_dirac = dirac.value;
    out.mmd_background_match = match.value;
    out.total = out.weighted_total();

    if (!backward) {
        return out;
    }

    // The loss is −recon, so the upstream gradient is the negated log-lik gradient.
    Matrix grad_x_latent = decoder_backward(*grads, cdx, -1.0 * grad_x_pre);
    Matrix grad_b_latent = decoder_backward(*grads, cdb, -1.0 * grad_b_pre);

    Matrix g_zx_sample = slice_cols(grad_x_latent, 0, dz);
    Matrix g_sx_sample = slice_cols(grad_x_latent, dz, ds);
    Matrix g_zb_sample = slice_cols(grad_b_latent, 0, dz);
    Matrix g_sb_sample(m, ds);

    if (lambda1 != 0.0) {
        g_sb_sample += lambda1 * dirac.grad_x;
    }
    if (lambda2 != 0.0) {
        g_zx_sample += lambda2 * match.grad_x;
        g_zb_sample += lambda2 * match.grad_y;
    }

    auto backprop_block = [&](Encoder& enc, const EncoderCache& cache, const GaussianPosterior& post,
                              const Matrix& noise, const Matrix& grad_sample, bool has_kl) {
        Matrix grad_mu(post.mu.rows(), post.mu.cols());
        Matrix grad_logvar(post.mu.rows(), post.mu.cols());
        reparam_grad(post, noise, grad_sample, grad_mu, grad_logvar);
        if (has_kl) {
            kl_grad(post, grad_mu, grad_logvar, 1.0);
        }
        encoder_backward(enc, cache, grad_mu, std::move(grad_logvar));
    };
    backprop_block(grads->encoder_z, czx, zx, eps_zx, g_zx_sample, true);
    backprop_block(grads->encoder_s, csx, sx, eps_sx, g_sx_sample, true);
    backprop_block(grads->encoder_z, czb, zb, eps_zb, g_zb_sample, true);
    backprop_block(grads->encoder_s, csb, sb, eps_sb, g_sb_sample, false);
    return out;
}

}  // namespace

std::string to_string(Likelihood likelihood) {
    return likelihood == Likelihood::bernoulli ? "bernoulli" : "gaussian_unit_variance";
}

Likelihood likelihood_from_string(const std::string& name) {
    if (name == "gaussian_unit_variance" || name == "gaussian") {
        return Likelihood::gaussian_unit_variance;
    }
    if (name == "bernoulli") {
        return Likelihood::bernoulli;
    }
    throw ConfigError("unknown likelihood '" + name + "' (expected gaussian_unit_variance or bernoulli)");
}

void ModelShape::validate() const {
    if (input_dim == 0 || background_dim == 0 || salient_dim == 0 || hidden_dim == 0) {
        throw ConfigError("model dimensions must all be positive (input " + std::to_string(input_dim) +
                          ", background " + std::to_string(background_dim) + ", salient " +
                          std::to_string(salient_dim) + ", hidden " + std::to_string(hidden_dim) + ")");
    }
}

MmcVaeModel MmcVaeModel::initialize(const ModelShape& shape, Rng& rng, std::vector<double> s_prime) {
    shape.validate();
    if (s_prime.empty()) {
        s_prime.assign(shape.salient_dim, 0.0);
    }
    MmcVaeModel model;
    model.shape = shape;
    model.s_prime = std::move(s_prime);
    model.encoder_z = make_encoder("encoder_z", shape.input_dim, shape.hidden_dim, shape.background_dim, rng);
    model.encoder_s = make_encoder("encoder_s", shape.input_dim, shape.hidden_dim, shape.salient_dim, rng);
    const std::size_t latent = shape.background_dim + shape.salient_dim;
    model.decoder.hidden_weight = init_weight("decoder.hidden.weight", latent, shape.hidden_dim, 2.0, rng);
    model.decoder.hidden_bias = zero_bias("decoder.hidden.bias", shape.hidden_dim);
    model.decoder.output_weight = init_weight("decoder.output.weight", shape.hidden_dim, shape.input_dim, 1.0, rng);
    model.decoder.output_bias = zero_bias("decoder.output.bias", shape.input_dim);
    model.validate();
    return model;
}

std::vector<Param*> MmcVaeModel::parameters() {
    std::vector<Param*> out;
    for (Encoder* e : {&encoder_z, &encoder_s}) {
        out.insert(out.end(), {&e->hidden_weight, &e->hidden_bias, &e->mu_weight, &e->mu_bias, &e->logvar_weight,
                               &e->logvar_bias});
    }
    out.insert(out.end(),
               {&decoder.hidden_weight, &decoder.hidden_bias, &decoder.output_weight, &decoder.output_bias});
    return out;
}

std::vector<const Param*> MmcVaeModel::parameters() const {
    auto mutable_params = const_cast<MmcVaeModel*>(this)->parameters();
    return {mutable_params.begin(), mutable_params.end()};
}

std::vector<Param*> MmcVaeModel::trainable_parameters() {
    auto all = parameters();
    if (!shape.zero_bias_decoder) {
        return all;
    }
    std::erase_if(all, [this](const Param* p) { return p == &decoder.hidden_bias || p == &decoder.output_bias; });
    return all;
}

void MmcVaeModel::zero_grad() {
    for (Param* p : parameters()) {
        p->zero_grad();
    }
}

void MmcVaeModel::validate() const {
    shape.validate();
    const std::size_t latent = shape.background_dim + shape.salient_dim;
    auto expect = [](const Param& p, std::size_t rows, std::size_t cols) {
        if (p.value.rows() != rows || p.value.cols() != cols || p.grad.rows() != rows || p.grad.cols() != cols) {
            throw DimensionError("parameter " + p.name + " has shape " + p.value.shape_string() + ", expected " +
                                 std::to_string(rows) + "x" + std::to_string(cols));
        }
    };
    for (auto [enc, width] : {std::pair{&encoder_z, shape.background_dim}, std::pair{&encoder_s, shape.salient_dim}}) {
        expect(enc->hidden_weight, shape.input_dim, shape.hidden_dim);
        expect(enc->hidden_bias, 1, shape.hidden_dim);
        expect(enc->mu_weight, shape.hidden_dim, width);
        expect(enc->mu_bias, 1, width);
        expect(enc->logvar_weight, shape.hidden_dim, width);
        expect(enc->logvar_bias, 1, width);
    }
    expect(decoder.hidden_weight, latent, shape.hidden_dim);
    expect(decoder.hidden_bias, 1, shape.hidden_dim);
    expect(decoder.output_weight, shape.hidden_dim, shape.input_dim);
    expect(decoder.output_bias, 1, shape.input_dim);
    if (s_prime.size() != shape.salient_dim) {
        throw DimensionError("reference vector has dimension " + std::to_string(s_prime.size()) + ", expected " +
                             std::to_string(shape.salient_dim));
    }
}

GaussianPosterior encode(const MmcVaeModel& model, const Matrix& x, LatentBlock which) {
    if (x.cols() != model.shape.input_dim) {
        throw DimensionError("encode: input " + x.shape_string() + " does not match model input dim " +
                             std::to_string(model.shape.input_dim));
    }
    const Encoder& enc = which == LatentBlock::background ? model.encoder_z : model.encoder_s;
    return encoder_forward(enc, x, nullptr);
}

Matrix reparameterize(const GaussianPosterior& post, Rng& rng) {
    return reparameterize(post, sample_std_normal(rng, post.mu.rows(), post.mu.cols()));
}

Matrix reparameterize(const GaussianPosterior& post, const Matrix& noise) {
    require_same_shape(post.mu, post.logvar, "reparameterize");
    require_same_shape(post.mu, noise, "reparameterize");
    Matrix out = post.mu;
    auto dst = out.values();
    auto lv = post.logvar.values();
    auto eps = noise.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += std::exp(0.5 * lv[i]) * eps[i];
    }
    return out;
}

double kl_std_normal(const GaussianPosterior& post) {
    require_same_shape(post.mu, post.logvar, "kl_std_normal");
    if (post.mu.rows() == 0) {
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < post.mu.rows(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < post.mu.cols(); ++j) {
            const double mu = post.mu(i, j), lv = post.logvar(i, j);
            row += mu * mu + std::exp(lv) - 1.0 - lv;
        }
        total += 0.5 * row;
    }
    return total / static_cast<double>(post.mu.rows());
}

double recon_log_lik(const Matrix& x, const Matrix& x_hat, Likelihood likelihood) {
    if (x.rows() == 0) {
        throw DimensionError("recon_log_lik: empty batch");
    }
    return recon_with_grad(x, x_hat, Matrix(), likelihood, nullptr);
}

TargetBound elbo_target(const MmcVaeModel& model, const Matrix& x, Rng& rng) {
    check_batch(model, x, "elbo_target");
    const GaussianPosterior zx = encode(model, x, LatentBlock::background);
    const GaussianPosterior sx = encode(model, x, LatentBlock::salient);
    const Matrix z = reparameterize(zx, rng);
    const Matrix s = reparameterize(sx, rng);
    TargetBound out;
    out.recon = recon_log_lik(x, generate(model, z, s), model.shape.likelihood);
    out.kl_z = kl_std_normal(zx);
    out.kl_s = kl_std_normal(sx);
    out.value = out.recon - out.kl_z - out.kl_s;
    return out;
}

BackgroundBound background_bound(const MmcVaeModel& model, const Matrix& b, Rng& rng) {
    check_batch(model, b, "background_bound");
    const GaussianPosterior zb = encode(model, b, LatentBlock::background);
    const Matrix z = reparameterize(zb, rng);
    BackgroundBound out;
    out.recon = recon_log_lik(b, generate(model, z, tile_row(model.s_prime, b.rows())), model.shape.likelihood);
    out.kl_z = kl_std_normal(zb);
    out.value = out.recon - out.kl_z;
    return out;
}

double LossBreakdown::weighted_total() const {
    return -(recon_target - kl_z_target - kl_s_target) - (recon_background - kl_z_background) +
           lambda1 * mmd_salient_dirac + lambda2 * mmd_background_match;
}

LossBreakdown total_loss(const MmcVaeModel& model, const Matrix& x, const Matrix& b, double lambda1, double lambda2,
                         const KernelConfig& kernel, Rng& rng) {
    return evaluate_objective(model, x, b, lambda1, lambda2, kernel, rng, nullptr);
}

LossBreakdown total_loss_backward(MmcVaeModel& model, const Matrix& x, const Matrix& b, double lambda1,
                                  double lambda2, const KernelConfig& kernel, Rng& rng) {
    return evaluate_objective(model, x, b, lambda1, lambda2, kernel, rng, &model);
}

Matrix generate(const MmcVaeModel& model, const Matrix& z, const Matrix& s) {
    if (z.cols() != model.shape.background_dim || s.cols() != model.shape.salient_dim || z.rows() != s.rows()) {
        throw DimensionError("generate: latent blocks " + z.shape_string() + " and " + s.shape_string() +
                             " do not match model dims (" + std::to_string(model.shape.background_dim) + ", " +
                             std::to_string(model.shape.salient_dim) + ")");
    }
    return decoder_forward(model, hconcat(z, s), nullptr);
}

Matrix reconstruct_partial(const MmcVaeModel& model, const Matrix& x, KeepLatents keep) {
    Matrix z = encode(model, x, LatentBlock::background).mu;
    Matrix s = encode(model, x, LatentBlock::salient).mu;
    if (keep == KeepLatents::background_only) {
        s.fill(0.0);
    } else if (keep == KeepLatents::salient_only) {
        z.fill(0.0);
    }
    return generate(model, z, s);
}

}  // namespace mmcvae
