#ifndef MMCVAE_CHECKPOINT_HPP
#define MMCVAE_CHECKPOINT_HPP

#include <filesystem>
#include <string>

#include "mmcvae/format.hpp"
#include "mmcvae/model.hpp"

namespace mmcvae {

/**
 * Plain-text checkpoint, version 1:
 *
 *     mmcvae-checkpoint 1
 *     input_dim <d>
 *     background_dim <d_z>
 *     salient_dim <d_s>
 *     hidden_dim <h>
 *     likelihood <gaussian_unit_variance|bernoulli>
 *     zero_bias_decoder <0|1>
 *     s_prime <d_s values>
 *     param <name> <rows> <cols>
 *     <rows lines of cols values>
 *     ...
 *     end
 *
 * Values are written in shortest round-trip form, so save → load is bit-exact.
 */
std::string checkpoint_to_string(const MmcVaeModel& model);
MmcVaeModel checkpoint_from_string(const std::string& text);

void save_checkpoint(const MmcVaeModel& model, const std::filesystem::path& path);
MmcVaeModel load_checkpoint(const std::filesystem::path& path);

}  // namespace mmcvae

#endif
