#ifndef MMCVAE_DATA_HPP
#define MMCVAE_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmcvae/tensor.hpp"

namespace mmcvae {

enum class Origin { target, background };

std::string to_string(Origin origin);

struct LabeledDataset {
    Matrix features;
    std::optional<std::vector<int>> class_labels;
    Origin origin = Origin::target;
    std::vector<std::string> feature_names;
    /// Original label strings, indexed by encoded label.
    std::vector<std::string> class_names;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    bool has_labels() const { return class_labels.has_value(); }

    /// Rows in the given order, labels carried along.
    LabeledDataset subset(std::span<const std::size_t> rows) const;
    void validate() const;
};

/**
 * Read a comma-separated numeric table (samples as rows).
 *
 * A first row containing any non-numeric cell is treated as a header. When
 * `label_column` names a header column, that column is removed from the
 * features and its values are integer-encoded in order of first appearance.
 * Throws ParseError naming the line (and column) of ragged or non-numeric rows.
 */
LabeledDataset load_csv(const std::filesystem::path& path, const std::optional<std::string>& label_column = {},
                        Origin origin = Origin::target);

/// Inverse of load_csv; labels, if present, are written as a trailing `label_column` column.
void save_csv(const std::filesystem::path& path, const LabeledDataset& data, const std::string& label_column = "label");

struct PreprocessResult {
    LabeledDataset data;
    std::size_t dropped_rows = 0;
};

/// Scale each row to sum to `total`, then apply ln(1 + ·). All-zero rows are dropped.
PreprocessResult preprocess_counts(const LabeledDataset& data, double total = 10000.0);

/// Keep the `k` highest-variance columns in their original order; ties go to the lower index.
LabeledDataset select_top_variance(const LabeledDataset& data, std::size_t k = 1000);

enum class DecoderStyle { linear, random_relu_mlp };

std::string to_string(DecoderStyle style);
DecoderStyle decoder_style_from_string(const std::string& name);

struct SynthConfig {
    std::size_t background_dim = 4;
    std::size_t salient_dim = 2;
    std::size_t input_dim = 20;
    std::size_t n_target = 2000;
    std::size_t m_background = 2000;
    std::size_t n_classes = 2;
    double class_separation = 4.0;
    double noise_sigma = 0.1;
    DecoderStyle decoder_style = DecoderStyle::linear;
    std::uint64_t seed = 0;

    /// Also requires n_classes ≤ salient_dim + 1 so the class simplex fits in s-space.
    void validate() const;
};

/// Fixed random map g used to produce observations from [z ‖ s].
struct SynthGenerator {
    DecoderStyle style = DecoderStyle::linear;
    /// linear: (d_z + d_s) × d, applied as [z ‖ s]·mixing. relu: first layer.
    Matrix mixing;
    /// relu only: hidden bias (1 × h) and output layer (h × d).
    Matrix hidden_bias;
    Matrix output;

    Matrix apply(const Matrix& latent) const;
};

struct SynthTruth {
    /// Rows are target samples followed by background samples.
    Matrix z;
    Matrix s;
    std::vector<int> class_labels;  ///< -1 for background rows
    std::vector<Origin> origin;
    Matrix class_means;             ///< n_classes × d_s
    SynthGenerator generator;
};

struct SynthData {
    LabeledDataset target;
    LabeledDataset background;
    SynthTruth truth;
};

/**
 * Sample the two-process contrastive model: z ~ N(0, I) everywhere; target
 * rows draw a uniform class c and s ~ N(μ_c, I) with the class means on a
 * centered regular simplex with edge `class_separation`; background rows use
 * s = 0. Observations are g([z ‖ s]) + noise_sigma·ε.
 */
SynthData synth_contrastive(const SynthConfig& cfg, Rng& rng);

/// Class means used by synth_contrastive: a regular simplex centered at 0.
Matrix simplex_class_means(std::size_t n_classes, std::size_t dim, double separation);

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/**
 * Seeded split of `n` rows; stratified per label when `labels` is given
 * (each class contributes round(fraction·count) rows to train). Throws
 * ConfigError when either side, or any class on either side, would be empty.
 */
SplitIndices split_indices(std::size_t n, const std::vector<int>* labels, double fraction, Rng& rng);

std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& data, double fraction,
                                                           std::uint64_t seed);

}  // namespace mmcvae

#endif
