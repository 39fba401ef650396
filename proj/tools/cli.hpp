#ifndef MMCVAE_TOOLS_CLI_HPP
#define MMCVAE_TOOLS_CLI_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmcvae/data.hpp"
#include "mmcvae/model.hpp"
#include "mmcvae/train.hpp"

namespace mmcvae::cli {

enum ExitCode : int { kSuccess = 0, kUserError = 2, kNumericalError = 3 };

/// Fully resolved settings for one subcommand invocation.
struct RunConfig {
    std::string command;
    std::uint64_t seed = 0;
    std::filesystem::path out = "out";

    std::filesystem::path target;
    std::filesystem::path background;
    std::filesystem::path checkpoint;
    std::string label_column = "label";

    SynthConfig synth;

    std::size_t background_dim = 4;
    std::size_t salient_dim = 2;
    std::size_t hidden_dim = 400;
    Likelihood likelihood = Likelihood::gaussian_unit_variance;

    TrainConfig train;

    std::size_t n_seeds = 1;
    std::size_t n_gen = 500;
    std::size_t n_rows = 10;
    bool plot = false;

    std::vector<double> lambda1_grid{0.0, 1.0, 10.0, 100.0, 1000.0, 10000.0};
    std::vector<double> lambda2_grid{0.0, 1.0, 10.0, 100.0, 1000.0, 10000.0};

    /// Copies the shared seed into the synth and train sections.
    void resolve();
    void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Overlay `j` on `base`; unknown keys are a ConfigError.
RunConfig from_json(const nlohmann::json& j, RunConfig base = {});

/// Load target/background CSVs, using `label_column` when the header has it.
LabeledDataset load_dataset(const std::filesystem::path& path, const std::string& label_column, Origin origin);

void cmd_synth(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg, std::ostream& log);
void cmd_embed(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);
void cmd_generate(const RunConfig& cfg);
void cmd_sweep(const RunConfig& cfg, std::ostream& log);

/// Parse arguments, run the subcommand, and map failures to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mmcvae::cli

#endif
