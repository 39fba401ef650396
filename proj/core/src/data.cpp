#include "mmcvae/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "mmcvae/format.hpp"

namespace mmcvae {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) {
        ++b;
    }
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) {
        --e;
    }
    return s.substr(b, e - b);
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        cells.push_back(trim(cell));
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

bool is_number(const std::string& token) {
    try {
        parse_double(token);
        return true;
    } catch (const ParseError&) {
        return false;
    }
}

}  // namespace

std::string to_string(Origin origin) { return origin == Origin::target ? "target" : "background"; }

std::string to_string(DecoderStyle style) { return style == DecoderStyle::linear ? "linear" : "random_relu_mlp"; }

DecoderStyle decoder_style_from_string(const std::string& name) {
    if (name == "linear") {
        return DecoderStyle::linear;
    }
    if (name == "random_relu_mlp") {
        return DecoderStyle::random_relu_mlp;
    }
    throw ConfigError("unknown decoder style '" + name + "' (expected linear or random_relu_mlp)");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
    LabeledDataset out;
    out.features = select_rows(features, rows);
    out.origin = origin;
    out.feature_names = feature_names;
    out.class_names = class_names;
    if (class_labels) {
        std::vector<int> labels;
        labels.reserve(rows.size());
        for (std::size_t r : rows) {
            labels.push_back((*class_labels)[r]);
        }
        out.class_labels = std::move(labels);
    }
    return out;
}

void LabeledDataset::validate() const {
    if (class_labels && class_labels->size() != features.rows()) {
        throw DimensionError("dataset has " + std::to_string(features.rows()) + " rows but " +
                             std::to_string(class_labels->size()) + " labels");
    }
    if (!feature_names.empty() && feature_names.size() != features.cols()) {
        throw DimensionError("dataset has " + std::to_string(features.cols()) + " columns but " +
                             std::to_string(feature_names.size()) + " feature names");
    }
}

// ---------------------------------------------------------------------------
// CSV

LabeledDataset load_csv(const std::filesystem::path& path, const std::optional<std::string>& label_column,
                        Origin origin) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open " + path.string());
    }
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        rows.push_back(split_commas(line));
        line_numbers.push_back(line_no);
    }
    if (rows.empty()) {
        throw ParseError(path.string() + ": empty file");
    }

    std::vector<std::string> header;
    std::size_t first_data = 0;
    if (std::any_of(rows[0].begin(), rows[0].end(), [](const std::string& c) { return !is_number(c); })) {
        header = rows[0];
        first_data = 1;
    }
    const std::size_t width = rows[0].size();

    std::optional<std::size_t> label_index;
    if (label_column) {
        auto it = std::find(header.begin(), header.end(), *label_column);
        if (it == header.end()) {
            throw ParseError(path.string() + ": label column '" + *label_column + "' not found in header");
        }
        label_index = static_cast<std::size_t>(it - header.begin());
    }

    LabeledDataset data;
    data.origin = origin;
    const std::size_t n = rows.size() - first_data;
    const std::size_t d = width - (label_index ? 1 : 0);
    std::vector<double> values;
    values.reserve(n * d);
    std::vector<int> labels;
    std::map<std::string, int> codes;
    for (std::size_t r = first_data; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        if (cells.size() != width) {
            throw ParseError(path.string() + ": line " + std::to_string(line_numbers[r]) + " has " +
                             std::to_string(cells.size()) + " fields, expected " + std::to_string(width));
        }
        for (std::size_t c = 0; c < width; ++c) {
            if (label_index && c == *label_index) {
                auto [it, inserted] = codes.emplace(cells[c], static_cast<int>(codes.size()));
                if (inserted) {
                    data.class_names.push_back(cells[c]);
                }
                labels.push_back(it->second);
                continue;
            }
            try {
                values.push_back(parse_double(cells[c]));
            } catch (const ParseError&) {
                throw ParseError(path.string() + ": non-numeric cell '" + cells[c] + "' at line " +
                                 std::to_string(line_numbers[r]) + ", column " + std::to_string(c + 1));
            }
        }
    }
    data.features = Matrix(n, d, std::move(values));
    if (label_index) {
        data.class_labels = std::move(labels);
    }
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (!label_index || c != *label_index) {
            data.feature_names.push_back(header[c]);
        }
    }
    return data;
}

void save_csv(const std::filesystem::path& path, const LabeledDataset& data, const std::string& label_column) {
    data.validate();
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
    const bool write_header = !data.feature_names.empty() || data.has_labels();
    if (write_header) {
        for (std::size_t c = 0; c < data.dim(); ++c) {
            out << (c > 0 ? "," : "") << (data.feature_names.empty() ? "f" + std::to_string(c) : data.feature_names[c]);
        }
        if (data.has_labels()) {
            out << (data.dim() > 0 ? "," : "") << label_column;
        }
        out << '\n';
    }
    for (std::size_t r = 0; r < data.size(); ++r) {
        auto row = data.features.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << (c > 0 ? "," : "") << format_double(row[c]);
        }
        if (data.has_labels()) {
            const int code = (*data.class_labels)[r];
            const bool named = code >= 0 && static_cast<std::size_t>(code) < data.class_names.size();
            out << (data.dim() > 0 ? "," : "") << (named ? data.class_names[code] : std::to_string(code));
        }
        out << '\n';
    }
    if (!out) {
        throw ConfigError("failed writing " + path.string());
    }
}

// ---------------------------------------------------------------------------
// Preprocessing

PreprocessResult preprocess_counts(const LabeledDataset& data, double total) {
    if (!(total > 0.0)) {
        throw ConfigError("preprocess_counts: target total must be positive");
    }
    std::vector<std::size_t> kept;
    for (std::size_t r = 0; r < data.size(); ++r) {
        double row_sum = 0.0;
        for (std::size_t c = 0; c < data.dim(); ++c) {
            const double v = data.features(r, c);
            if (v < 0.0) {
                throw ConfigError("preprocess_counts: negative count at row " + std::to_string(r) + ", column " +
                                  std::to_string(c));
            }
            row_sum += v;
        }
        if (row_sum > 0.0) {
            kept.push_back(r);
        }
    }
    PreprocessResult out;
    out.dropped_rows = data.size() - kept.size();
    out.data = data.subset(kept);
    for (std::size_t r = 0; r < out.data.size(); ++r) {
        auto row = out.data.features.row(r);
        double row_sum = 0.0;
        for (double v : row) {
            row_sum += v;
        }
        const double scale = total / row_sum;
        for (double& v : row) {
            v = std::log1p(v * scale);
        }
    }
    return out;
}

LabeledDataset select_top_variance(const LabeledDataset& data, std::size_t k) {
    const std::size_t d = data.dim(), n = data.size();
    if (k > d) {
        throw ConfigError("select_top_variance: k = " + std::to_string(k) + " exceeds " + std::to_string(d) +
                          " features");
    }
    std::vector<double> variance(d, 0.0);
    if (n > 1) {
        const auto means = column_means(data.features);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = data.features(r, c) - means[c];
                variance[c] += diff * diff;
            }
        }
        for (double& v : variance) {
            v /= static_cast<double>(n - 1);
        }
    }
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return variance[a] > variance[b]; });
    std::vector<std::size_t> keep(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(keep.begin(), keep.end());

    LabeledDataset out = data;
    out.features = Matrix(n, k);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < k; ++j) {
            out.features(r, j) = data.features(r, keep[j]);
        }
    }
    if (!data.feature_names.empty()) {
        out.feature_names.clear();
        for (std::size_t c : keep) {
            out.feature_names.push_back(data.feature_names[c]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic contrastive data

void SynthConfig::validate() const {
    if (background_dim == 0 || salient_dim == 0) {
        throw ConfigError("synthetic latent dimensions must be positive");
    }
    if (input_dim < background_dim + salient_dim) {
        throw ConfigError("synthetic input_dim (" + std::to_string(input_dim) + ") must be at least d_z + d_s (" +
                          std::to_string(background_dim + salient_dim) + ")");
    }
    if (n_classes < 2) {
        throw ConfigError("synthetic data needs at least 2 classes");
    }
    if (n_classes > salient_dim + 1) {
        throw ConfigError("synthetic n_classes (" + std::to_string(n_classes) + ") must not exceed d_s + 1 (" +
                          std::to_string(salient_dim + 1) + ")");
    }
    if (!(class_separation > 0.0)) {
        throw ConfigError("synthetic class_separation must be positive");
    }
    if (!(noise_sigma >= 0.0)) {
        throw ConfigError("synthetic noise_sigma must be non-negative");
    }
    if (n_target == 0 || m_background == 0) {
        throw ConfigError("synthetic sample counts must be positive");
    }
}

Matrix simplex_class_means(std::size_t n_classes, std::size_t dim, double separation) {
    if (n_classes < 2 || n_classes > dim + 1) {
        throw ConfigError("simplex needs 2 <= classes <= dim + 1");
    }
    // Vertices e_k − (1/K)·1 live in the sum-zero subspace of ℝ^K, with pairwise
    // distance √2. Project onto the Helmert basis of that subspace.
    const std::size_t k = n_classes;
    Matrix means(k, dim);
    const double scale = separation / std::sqrt(2.0);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t b = 1; b < k; ++b) {
            // Helmert row b: (1,…,1, −b, 0,…) / √(b(b+1)) with b ones.
            const double norm = std::sqrt(static_cast<double>(b * (b + 1)));
            double coord = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                const double vertex = (j == c ? 1.0 : 0.0) - 1.0 / static_cast<double>(k);
                double basis = 0.0;
                if (j < b) {
                    basis = 1.0;
                } else if (j == b) {
                    basis = -static_cast<double>(b);
                }
                coord += vertex * basis / norm;
            }
            means(c, b - 1) = scale * coord;
        }
    }
    return means;
}

Matrix SynthGenerator::apply(const Matrix& latent) const {
    if (style == DecoderStyle::linear) {
        return matmul(latent, mixing);
    }
    Matrix hidden = matmul(latent, mixing);
    for (std::size_t r = 0; r < hidden.rows(); ++r) {
        auto row = hidden.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] = std::max(0.0, row[c] + hidden_bias(0, c));
        }
    }
    return matmul(hidden, output);
}

SynthData synth_contrastive(const SynthConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t dz = cfg.background_dim, ds = cfg.salient_dim, d = cfg.input_dim;
    const std::size_t latent = dz + ds;
    const std::size_t n = cfg.n_target, m = cfg.m_background;

    SynthData out;
    SynthTruth& truth = out.truth;
    truth.generator.style = cfg.decoder_style;
    if (cfg.decoder_style == DecoderStyle::linear) {
        truth.generator.mixing = sample_std_normal(rng, latent, d);
    } else {
        const std::size_t hidden = 2 * d;
        truth.generator.mixing = (std::sqrt(2.0 / static_cast<double>(latent))) * sample_std_normal(rng, latent, hidden);
        truth.generator.hidden_bias = 0.1 * sample_std_normal(rng, 1, hidden);
        truth.generator.output = (std::sqrt(2.0 / static_cast<double>(hidden))) * sample_std_normal(rng, hidden, d);
    }
    truth.class_means = simplex_class_means(cfg.n_classes, ds, cfg.class_separation);

    truth.z = Matrix(n + m, dz);
    truth.s = Matrix(n + m, ds);
    truth.class_labels.assign(n + m, -1);
    truth.origin.assign(n, Origin::target);
    truth.origin.resize(n + m, Origin::background);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = rng.uniform_index(cfg.n_classes);
        truth.class_labels[i] = static_cast<int>(c);
        for (double& v : truth.z.row(i)) {
            v = rng.normal();
        }
        auto s = truth.s.row(i);
        for (std::size_t j = 0; j < ds; ++j) {
            s[j] = truth.class_means(c, j) + rng.normal();
        }
    }
    for (std::size_t i = n; i < n + m; ++i) {
        for (double& v : truth.z.row(i)) {
            v = rng.normal();
        }
    }

    Matrix observed = truth.generator.apply(hconcat(truth.z, truth.s));
    if (cfg.noise_sigma > 0.0) {
        for (double& v : observed.values()) {
            v += cfg.noise_sigma * rng.normal();
        }
    }

    std::vector<std::size_t> target_rows(n), background_rows(m);
    std::iota(target_rows.begin(), target_rows.end(), 0);
    std::iota(background_rows.begin(), background_rows.end(), n);

    out.target.features = select_rows(observed, target_rows);
    out.target.origin = Origin::target;
    out.target.class_labels = std::vector<int>(truth.class_labels.begin(), truth.class_labels.begin() + static_cast<std::ptrdiff_t>(n));
    out.background.features = select_rows(observed, background_rows);
    out.background.origin = Origin::background;
    for (std::size_t c = 0; c < d; ++c) {
        out.target.feature_names.push_back("f" + std::to_string(c));
    }
    out.background.feature_names = out.target.feature_names;
    for (std::size_t c = 0; c < cfg.n_classes; ++c) {
        out.target.class_names.push_back(std::to_string(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splits

SplitIndices split_indices(std::size_t n, const std::vector<int>* labels, double fraction, Rng& rng) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("split fraction must lie strictly between 0 and 1");
    }
    if (labels != nullptr && labels->size() != n) {
        throw DimensionError("split: label count does not match row count");
    }
    SplitIndices out;
    auto take = [&](std::vector<std::size_t> members, const std::string& what) {
        rng.shuffle(std::span<std::size_t>(members));
        const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
        if (n_train == 0 || n_train == members.size()) {
            throw ConfigError("split leaves " + what + " empty on one side (" + std::to_string(members.size()) +
                              " rows); use more data or a different fraction");
        }
        out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
    };
    if (labels == nullptr) {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        take(std::move(all), "the dataset");
    } else {
        std::map<int, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < n; ++i) {
            by_class[(*labels)[i]].push_back(i);
        }
        for (auto& [label, members] : by_class) {
            take(std::move(members), "class " + std::to_string(label));
        }
    }
    return out;
}

std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& data, double fraction,
                                                           std::uint64_t seed) {
    data.validate();
    Rng rng(seed);
    const std::vector<int>* labels = data.class_labels ? &*data.class_labels : nullptr;
    const SplitIndices idx = split_indices(data.size(), labels, fraction, rng);
    return {data.subset(idx.train), data.subset(idx.test)};
}

}  // namespace mmcvae
