#include "mmcvae/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mmcvae {

namespace {

// Stream ids for Rng::derive; training noise and batch order are independent of init.
constexpr std::uint64_t kScheduleStream = 1;
constexpr std::uint64_t kNoiseStream = 2;

std::string describe(const LossBreakdown& l) {
    std::ostringstream out;
    out << "recon_target=" << l.recon_target << " kl_z_target=" << l.kl_z_target << " kl_s_target=" << l.kl_s_target
        << " recon_background=" << l.recon_background << " kl_z_background=" << l.kl_z_background
        << " mmd_salient_dirac=" << l.mmd_salient_dirac << " mmd_background_match=" << l.mmd_background_match
        << " total=" << l.total;
    return out.str();
}

void accumulate(LossBreakdown& acc, const LossBreakdown& step) {
    acc.recon_target += step.recon_target;
    acc.kl_z_target += step.kl_z_target;
    acc.kl_s_target += step.kl_s_target;
    acc.recon_background += step.recon_background;
    acc.kl_z_background += step.kl_z_background;
    acc.mmd_salient_dirac += step.mmd_salient_dirac;
    acc.mmd_background_match += step.mmd_background_match;
    acc.total += step.total;
}

void scale(LossBreakdown& acc, double factor) {
    acc.recon_target *= factor;
    acc.kl_z_target *= factor;
    acc.kl_s_target *= factor;
    acc.recon_background *= factor;
    acc.kl_z_background *= factor;
    acc.mmd_salient_dirac *= factor;
    acc.mmd_background_match *= factor;
    acc.total *= factor;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
        throw ConfigError("lambda1 and lambda2 must be non-negative");
    }
    if (!(lr > 0.0)) {
        throw ConfigError("learning rate must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) {
        throw ConfigError("Adam eps must be positive");
    }
    if (batch_size < 2) {
        throw ConfigError("batch_size must be at least 2");
    }
    kernel.validate();
}

AdamState AdamState::for_params(std::span<Param* const> params) {
    AdamState state;
    for (const Param* p : params) {
        state.m.emplace_back(p->value.rows(), p->value.cols());
        state.v.emplace_back(p->value.rows(), p->value.cols());
    }
    return state;
}

void adam_step(std::span<Param* const> params, AdamState& state, double lr, double beta1, double beta2, double eps) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                             " params, got " + std::to_string(params.size()));
    }
    for (const Param* p : params) {
        if (!all_finite(p->grad)) {
            throw NumericalError("adam_step: non-finite gradient in " + p->name);
        }
    }
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double correction1 = 1.0 - std::pow(beta1, t);
    const double correction2 = 1.0 - std::pow(beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Param& p = *params[k];
        require_same_shape(p.value, state.m[k], "adam_step");
        auto value = p.value.values();
        auto grad = p.grad.values();
        auto m = state.m[k].values();
        auto v = state.v[k].values();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
        p.zero_grad();
    }
}

std::vector<BatchPair> make_batches(std::size_t n_target, std::size_t n_background, std::size_t batch_size,
                                    Rng& rng) {
    if (n_target == 0 || n_background == 0) {
        throw ConfigError("make_batches: both datasets need at least one row");
    }
    if (batch_size == 0) {
        throw ConfigError("make_batches: batch_size must be positive");
    }
    const bool target_larger = n_target >= n_background;
    const std::size_t n_large = target_larger ? n_target : n_background;
    const std::size_t n_small = target_larger ? n_background : n_target;

    const std::vector<std::size_t> large_order = rng.permutation(n_large);
    std::vector<std::size_t> small_order = rng.permutation(n_small);
    std::size_t small_pos = 0;

    std::vector<BatchPair> out;
    for (std::size_t start = 0; start < n_large; start += batch_size) {
        const std::size_t len = std::min(batch_size, n_large - start);
        std::vector<std::size_t> large(large_order.begin() + static_cast<std::ptrdiff_t>(start),
                                       large_order.begin() + static_cast<std::ptrdiff_t>(start + len));
        std::vector<std::size_t> small;
        small.reserve(len);
        while (small.size() < len) {
            if (small_pos == n_small) {
                small_order = rng.permutation(n_small);
                small_pos = 0;
            }
            small.push_back(small_order[small_pos++]);
        }
        if (target_larger) {
            out.push_back({std::move(large), std::move(small)});
        } else {
            out.push_back({std::move(small), std::move(large)});
        }
    }
    return out;
}

TrainLog fit(MmcVaeModel& model, const LabeledDataset& target, const LabeledDataset& background,
             const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    model.validate();
    if (target.dim() != model.shape.input_dim || background.dim() != model.shape.input_dim) {
        throw DimensionError("fit: target has " + std::to_string(target.dim()) + " features and background " +
                             std::to_string(background.dim()) + ", model expects " +
                             std::to_string(model.shape.input_dim));
    }
    if (cfg.zero_bias_decoder != model.shape.zero_bias_decoder) {
        throw ConfigError("fit: zero_bias_decoder differs between the training config and the model");
    }

    TrainLog log;
    log.seed = cfg.seed;
    log.config = cfg;
    if (cfg.epochs == 0) {
        return log;
    }

    Rng schedule_rng = Rng::derive(cfg.seed, kScheduleStream);
    Rng noise_rng = Rng::derive(cfg.seed, kNoiseStream);
    const std::vector<Param*> params = model.trainable_parameters();
    AdamState adam = AdamState::for_params(params);
    model.zero_grad();

    std::size_t global_step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        const auto batches = make_batches(target.size(), background.size(), cfg.batch_size, schedule_rng);
        EpochRecord record;
        record.epoch = epoch;
        record.mean.lambda1 = cfg.lambda1;
        record.mean.lambda2 = cfg.lambda2;
        for (const BatchPair& pair : batches) {
            const Matrix x = select_rows(target.features, pair.target);
            const Matrix b = select_rows(background.features, pair.background);
            const LossBreakdown step =
                total_loss_backward(model, x, b, cfg.lambda1, cfg.lambda2, cfg.kernel, noise_rng);
            if (!std::isfinite(step.total)) {
                throw NumericalError("non-finite loss at step " + std::to_string(global_step) + " (epoch " +
                                     std::to_string(epoch) + "): " + describe(step));
            }
            try {
                adam_step(params, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " at step " + std::to_string(global_step) + ": " +
                                     describe(step));
            }
            accumulate(record.mean, step);
            ++global_step;
        }
        scale(record.mean, 1.0 / static_cast<double>(batches.size()));
        record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        log.epochs.push_back(record);
        if (on_epoch) {
            on_epoch(record);
        }
    }
    return log;
}

std::string epoch_record_json(const EpochRecord& record) {
    const LossBreakdown& l = record.mean;
    nlohmann::ordered_json j;
    j["epoch"] = record.epoch;
    j["seconds"] = record.seconds;
    j["recon_target"] = l.recon_target;
    j["kl_z_target"] = l.kl_z_target;
    j["kl_s_target"] = l.kl_s_target;
    j["recon_background"] = l.recon_background;
    j["kl_z_background"] = l.kl_z_background;
    j["mmd_salient_dirac"] = l.mmd_salient_dirac;
    j["mmd_background_match"] = l.mmd_background_match;
    j["total"] = l.total;
    return j.dump();
}

void write_train_log(const TrainLog& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write train log " + path.string());
    }
    for (const EpochRecord& r : log.epochs) {
        out << epoch_record_json(r) << '\n';
    }
}

}  // namespace mmcvae
