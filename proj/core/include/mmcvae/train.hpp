#ifndef MMCVAE_TRAIN_HPP
#define MMCVAE_TRAIN_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "mmcvae/data.hpp"
#include "mmcvae/kernels.hpp"
#include "mmcvae/model.hpp"

namespace mmcvae {

struct TrainConfig {
    double lambda1 = 1000.0;
    double lambda2 = 10000.0;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch_size = 128;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
    bool zero_bias_decoder = false;
    KernelConfig kernel = KernelConfig::median();

    void validate() const;
};

/// First/second moment estimates for each optimized parameter, in order.
struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::uint64_t t = 0;

    static AdamState for_params(std::span<Param* const> params);
};

/**
 * One bias-corrected Adam update, then zero every gradient.
 *
 * If any gradient is non-finite the step is aborted before touching any
 * parameter and a NumericalError names the offending Param.
 */
void adam_step(std::span<Param* const> params, AdamState& state, double lr, double beta1, double beta2, double eps);

struct BatchPair {
    std::vector<std::size_t> target;
    std::vector<std::size_t> background;
};

/**
 * One epoch of paired minibatches. The larger dataset is shuffled and visited
 * exactly once in ceil(max(n, m) / batch_size) steps; the smaller one is drawn
 * from a stream of fresh shuffles so each background batch has the size of its
 * target partner (and vice versa).
 */
std::vector<BatchPair> make_batches(std::size_t n_target, std::size_t n_background, std::size_t batch_size, Rng& rng);

struct EpochRecord {
    std::size_t epoch = 0;
    LossBreakdown mean;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::uint64_t seed = 0;
    TrainConfig config;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/**
 * Minimize the objective with Adam over `cfg.epochs` epochs.
 *
 * Deterministic for identical (model, data, cfg). Throws NumericalError with
 * the step index and loss breakdown if the objective becomes non-finite.
 */
TrainLog fit(MmcVaeModel& model, const LabeledDataset& target, const LabeledDataset& background,
             const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// One JSON object per line: epoch, seconds, and every LossBreakdown field.
void write_train_log(const TrainLog& log, const std::filesystem::path& path);
std::string epoch_record_json(const EpochRecord& record);

}  // namespace mmcvae

#endif
