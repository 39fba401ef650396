#include "cli.hpp"

#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mmcvae/checkpoint.hpp"
#include "mmcvae/errors.hpp"
#include "mmcvae/eval.hpp"
#include "mmcvae/format.hpp"
#include "mmcvae/svg.hpp"

namespace mmcvae::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    out.flush();
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
}

void prepare_out_dir(const RunConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out, ec);
    if (ec || !std::filesystem::is_directory(cfg.out)) {
        throw ConfigError("cannot create output directory " + cfg.out.string() +
                          (ec ? ": " + ec.message() : std::string()));
    }
    write_text(cfg.out / "config.json", to_json(cfg).dump(2) + "\n");
}

void require_file(const std::filesystem::path& path, const char* what) {
    if (path.empty()) {
        throw ConfigError(std::string("missing required input: ") + what);
    }
    if (!std::filesystem::is_regular_file(path)) {
        throw ConfigError(std::string(what) + " not found: " + path.string());
    }
}

KernelConfig kernel_from_json(const json& j) {
    const std::string mode = j.at("mode").get<std::string>();
    std::vector<double> gammas;
    if (j.contains("gammas")) {
        gammas = j.at("gammas").get<std::vector<double>>();
    }
    if (mode == "median" || mode == "median_heuristic") {
        return KernelConfig::median();
    }
    if (mode == "fixed") {
        if (gammas.size() != 1) {
            throw ConfigError("kernel mode 'fixed' needs exactly one gamma");
        }
        return KernelConfig::fixed(gammas[0]);
    }
    if (mode == "multi_scale") {
        return KernelConfig::multi_scale(gammas);
    }
    throw ConfigError("unknown kernel mode '" + mode + "' (expected median, fixed or multi_scale)");
}

ordered_json kernel_to_json(const KernelConfig& k) {
    ordered_json j;
    switch (k.mode) {
        case KernelConfig::Mode::median_heuristic: j["mode"] = "median"; break;
        case KernelConfig::Mode::fixed: j["mode"] = "fixed"; break;
        case KernelConfig::Mode::multi_scale: j["mode"] = "multi_scale"; break;
    }
    j["gammas"] = k.gammas;
    return j;
}

/// "median", "fixed:0.5" or "multi:0.1,1,10".
KernelConfig parse_kernel_flag(const std::string& text) {
    if (text == "median") {
        return KernelConfig::median();
    }
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    std::vector<double> gammas;
    if (colon != std::string::npos) {
        std::stringstream rest(text.substr(colon + 1));
        std::string item;
        while (std::getline(rest, item, ',')) {
            gammas.push_back(parse_double(item));
        }
    }
    if (head == "fixed" && gammas.size() == 1) {
        return KernelConfig::fixed(gammas[0]);
    }
    if (head == "multi" && !gammas.empty()) {
        return KernelConfig::multi_scale(gammas);
    }
    throw ConfigError("bad --kernel '" + text + "' (expected median, fixed:<gamma> or multi:<g1>,<g2>,...)");
}

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
        throw ConfigError(std::string("config section '") + section + "' must be an object");
    }
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            ok = ok || key == a;
        }
        if (!ok) {
            throw ConfigError(std::string("unknown config key '") + key + "' in section '" + section + "'");
        }
    }
}

template <typename T>
void take(const json& j, const char* key, T& field) {
    if (j.contains(key)) {
        field = j.at(key).get<T>();
    }
}

MmcVaeModel load_model(const RunConfig& cfg) {
    require_file(cfg.checkpoint, "checkpoint");
    return load_checkpoint(cfg.checkpoint);
}

std::pair<LabeledDataset, LabeledDataset> load_pair(const RunConfig& cfg) {
    require_file(cfg.target, "target CSV");
    require_file(cfg.background, "background CSV");
    LabeledDataset target = load_dataset(cfg.target, cfg.label_column, Origin::target);
    LabeledDataset background = load_dataset(cfg.background, cfg.label_column, Origin::background);
    if (target.dim() != background.dim()) {
        throw DimensionError("target has " + std::to_string(target.dim()) + " features but background has " +
                             std::to_string(background.dim()));
    }
    return {std::move(target), std::move(background)};
}

void check_model_matches(const MmcVaeModel& model, const LabeledDataset& data, const std::string& what) {
    if (data.dim() != model.shape.input_dim) {
        throw DimensionError(what + " has " + std::to_string(data.dim()) + " features but the checkpoint expects " +
                             std::to_string(model.shape.input_dim));
    }
}

std::string matrix_csv(const Matrix& m, const std::vector<std::string>& header) {
    std::ostringstream out;
    for (std::size_t j = 0; j < header.size(); ++j) {
        out << (j ? "," : "") << header[j];
    }
    out << '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out << (j ? "," : "") << format_double(m(i, j));
        }
        out << '\n';
    }
    return out.str();
}

std::vector<std::string> numbered(const std::string& prefix, std::size_t count) {
    std::vector<std::string> names;
    for (std::size_t i = 1; i <= count; ++i) {
        names.push_back(prefix + std::to_string(i));
    }
    return names;
}

std::string label_text(const LabeledDataset& data, std::size_t row) {
    if (!data.has_labels()) {
        return "";
    }
    const int label = (*data.class_labels)[row];
    if (label >= 0 && static_cast<std::size_t>(label) < data.class_names.size()) {
        return data.class_names[static_cast<std::size_t>(label)];
    }
    return std::to_string(label);
}

MmcVaeModel train_model(const RunConfig& cfg, const LabeledDataset& target, const LabeledDataset& background,
                        const TrainConfig& train, TrainLog* log_out, std::ostream* progress) {
    ModelShape shape;
    shape.input_dim = target.dim();
    shape.background_dim = cfg.background_dim;
    shape.salient_dim = cfg.salient_dim;
    shape.hidden_dim = cfg.hidden_dim;
    shape.likelihood = cfg.likelihood;
    shape.zero_bias_decoder = train.zero_bias_decoder;
    Rng init = Rng::derive(train.seed, 0);
    MmcVaeModel model = MmcVaeModel::initialize(shape, init);
    EpochCallback on_epoch;
    if (progress != nullptr) {
        on_epoch = [progress, &train](const EpochRecord& r) {
            if (r.epoch % 10 == 0 || r.epoch + 1 == train.epochs) {
                *progress << "epoch " << r.epoch << " total " << r.mean.total << "\n";
            }
        };
    }
    TrainLog log = fit(model, target, background, train, on_epoch);
    if (log_out != nullptr) {
        *log_out = std::move(log);
    }
    return model;
}

}  // namespace

void RunConfig::resolve() {
    synth.seed = seed;
    train.seed = seed;
}

void RunConfig::validate() const {
    synth.validate();
    train.validate();
    if (background_dim == 0 || salient_dim == 0 || hidden_dim == 0) {
        throw ConfigError("model dimensions must be positive");
    }
    if (n_seeds == 0) {
        throw ConfigError("n_seeds must be at least 1");
    }
    if (lambda1_grid.empty() || lambda2_grid.empty()) {
        throw ConfigError("sweep grids must be non-empty");
    }
    for (double v : lambda1_grid) {
        if (!(v >= 0.0)) {
            throw ConfigError("sweep lambda values must be non-negative");
        }
    }
    for (double v : lambda2_grid) {
        if (!(v >= 0.0)) {
            throw ConfigError("sweep lambda values must be non-negative");
        }
    }
}

ordered_json to_json(const RunConfig& cfg) {
    ordered_json j;
    j["command"] = cfg.command;
    j["seed"] = cfg.seed;
    j["out"] = cfg.out.string();
    j["plot"] = cfg.plot;
    j["data"] = {{"target", cfg.target.string()},
                 {"background", cfg.background.string()},
                 {"checkpoint", cfg.checkpoint.string()},
                 {"label_column", cfg.label_column}};
    j["synth"] = {{"background_dim", cfg.synth.background_dim},
                  {"salient_dim", cfg.synth.salient_dim},
                  {"input_dim", cfg.synth.input_dim},
                  {"n_target", cfg.synth.n_target},
                  {"m_background", cfg.synth.m_background},
                  {"n_classes", cfg.synth.n_classes},
                  {"class_separation", cfg.synth.class_separation},
                  {"noise_sigma", cfg.synth.noise_sigma},
                  {"decoder_style", to_string(cfg.synth.decoder_style)}};
    j["model"] = {{"background_dim", cfg.background_dim},
                  {"salient_dim", cfg.salient_dim},
                  {"hidden_dim", cfg.hidden_dim},
                  {"likelihood", to_string(cfg.likelihood)},
                  {"zero_bias_decoder", cfg.train.zero_bias_decoder}};
    j["train"] = {{"lambda1", cfg.train.lambda1},
                  {"lambda2", cfg.train.lambda2},
                  {"lr", cfg.train.lr},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"eps", cfg.train.eps},
                  {"batch_size", cfg.train.batch_size},
                  {"epochs", cfg.train.epochs},
                  {"kernel", kernel_to_json(cfg.train.kernel)}};
    j["eval"] = {{"n_seeds", cfg.n_seeds}, {"n_gen", cfg.n_gen}};
    j["generate"] = {{"n_rows", cfg.n_rows}};
    j["sweep"] = {{"lambda1_grid", cfg.lambda1_grid}, {"lambda2_grid", cfg.lambda2_grid}};
    return j;
}

RunConfig from_json(const json& j, RunConfig cfg) {
    try {
        check_keys(j, "root",
                   {"command", "seed", "out", "plot", "data", "synth", "model", "train", "eval", "generate", "sweep"});
        take(j, "command", cfg.command);
        take(j, "seed", cfg.seed);
        take(j, "plot", cfg.plot);
        if (j.contains("out")) {
            cfg.out = j.at("out").get<std::string>();
        }
        if (j.contains("data")) {
            const json& d = j.at("data");
            check_keys(d, "data", {"target", "background", "checkpoint", "label_column"});
            if (d.contains("target")) cfg.target = d.at("target").get<std::string>();
            if (d.contains("background")) cfg.background = d.at("background").get<std::string>();
            if (d.contains("checkpoint")) cfg.checkpoint = d.at("checkpoint").get<std::string>();
            take(d, "label_column", cfg.label_column);
        }
        if (j.contains("synth")) {
            const json& s = j.at("synth");
            check_keys(s, "synth",
                       {"background_dim", "salient_dim", "input_dim", "n_target", "m_background", "n_classes",
                        "class_separation", "noise_sigma", "decoder_style"});
            take(s, "background_dim", cfg.synth.background_dim);
            take(s, "salient_dim", cfg.synth.salient_dim);
            take(s, "input_dim", cfg.synth.input_dim);
            take(s, "n_target", cfg.synth.n_target);
            take(s, "m_background", cfg.synth.m_background);
            take(s, "n_classes", cfg.synth.n_classes);
            take(s, "class_separation", cfg.synth.class_separation);
            take(s, "noise_sigma", cfg.synth.noise_sigma);
            if (s.contains("decoder_style")) {
                cfg.synth.decoder_style = decoder_style_from_string(s.at("decoder_style").get<std::string>());
            }
        }
        if (j.contains("model")) {
            const json& m = j.at("model");
            check_keys(m, "model", {"background_dim", "salient_dim", "hidden_dim", "likelihood", "zero_bias_decoder"});
            take(m, "background_dim", cfg.background_dim);
            take(m, "salient_dim", cfg.salient_dim);
            take(m, "hidden_dim", cfg.hidden_dim);
            take(m, "zero_bias_decoder", cfg.train.zero_bias_decoder);
            if (m.contains("likelihood")) {
                cfg.likelihood = likelihood_from_string(m.at("likelihood").get<std::string>());
            }
        }
        if (j.contains("train")) {
            const json& t = j.at("train");
            check_keys(t, "train",
                       {"lambda1", "lambda2", "lr", "beta1", "beta2", "eps", "batch_size", "epochs", "kernel"});
            take(t, "lambda1", cfg.train.lambda1);
            take(t, "lambda2", cfg.train.lambda2);
            take(t, "lr", cfg.train.lr);
            take(t, "beta1", cfg.train.beta1);
            take(t, "beta2", cfg.train.beta2);
            take(t, "eps", cfg.train.eps);
            take(t, "batch_size", cfg.train.batch_size);
            take(t, "epochs", cfg.train.epochs);
            if (t.contains("kernel")) {
                check_keys(t.at("kernel"), "train.kernel", {"mode", "gammas"});
                cfg.train.kernel = kernel_from_json(t.at("kernel"));
            }
        }
        if (j.contains("eval")) {
            const json& e = j.at("eval");
            check_keys(e, "eval", {"n_seeds", "n_gen"});
            take(e, "n_seeds", cfg.n_seeds);
            take(e, "n_gen", cfg.n_gen);
        }
        if (j.contains("generate")) {
            check_keys(j.at("generate"), "generate", {"n_rows"});
            take(j.at("generate"), "n_rows", cfg.n_rows);
        }
        if (j.contains("sweep")) {
            const json& s = j.at("sweep");
            check_keys(s, "sweep", {"lambda1_grid", "lambda2_grid"});
            take(s, "lambda1_grid", cfg.lambda1_grid);
            take(s, "lambda2_grid", cfg.lambda2_grid);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return cfg;
}

LabeledDataset load_dataset(const std::filesystem::path& path, const std::string& label_column, Origin origin) {
    std::optional<std::string> column;
    if (!label_column.empty()) {
        std::ifstream in(path);
        std::string first;
        std::getline(in, first);
        std::stringstream cells(first);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            if (!cell.empty() && cell.back() == '\r') {
                cell.pop_back();
            }
            if (cell == label_column) {
                column = label_column;
            }
        }
    }
    return load_csv(path, column, origin);
}

void cmd_synth(const RunConfig& cfg) {
    cfg.synth.validate();
    prepare_out_dir(cfg);
    Rng rng(cfg.synth.seed);
    const SynthData data = synth_contrastive(cfg.synth, rng);
    save_csv(cfg.out / "target.csv", data.target, "label");
    save_csv(cfg.out / "background.csv", data.background, "label");

    const SynthTruth& t = data.truth;
    std::ostringstream truth;
    const auto z_names = numbered("z", t.z.cols());
    const auto s_names = numbered("s", t.s.cols());
    for (const auto& n : z_names) truth << n << ',';
    for (const auto& n : s_names) truth << n << ',';
    truth << "class,origin\n";
    for (std::size_t i = 0; i < t.z.rows(); ++i) {
        for (std::size_t j = 0; j < t.z.cols(); ++j) truth << format_double(t.z(i, j)) << ',';
        for (std::size_t j = 0; j < t.s.cols(); ++j) truth << format_double(t.s(i, j)) << ',';
        truth << t.class_labels[i] << ',' << to_string(t.origin[i]) << '\n';
    }
    write_text(cfg.out / "truth.csv", truth.str());
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    auto [target, background] = load_pair(cfg);
    prepare_out_dir(cfg);
    TrainLog train_log;
    const MmcVaeModel model = train_model(cfg, target, background, cfg.train, &train_log, &log);
    save_checkpoint(model, cfg.out / "model.ckpt");
    write_train_log(train_log, cfg.out / "train_log.jsonl");
}

void cmd_embed(const RunConfig& cfg) {
    const MmcVaeModel model = load_model(cfg);
    auto [target, background] = load_pair(cfg);
    check_model_matches(model, target, "target CSV");
    prepare_out_dir(cfg);

    const Matrix features = vconcat(target.features, background.features);
    const Matrix z = encode(model, features, LatentBlock::background).mu;
    const Matrix s = encode(model, features, LatentBlock::salient).mu;
    const bool with_pcs = z.cols() >= 2 && s.cols() >= 2 && features.rows() >= 3;
    Matrix z_pc, s_pc;
    if (with_pcs) {
        z_pc = pca_2d(z).coordinates;
        s_pc = pca_2d(s).coordinates;
    }

    std::ostringstream out;
    out << "origin,label";
    for (const auto& n : numbered("mu_z_", z.cols())) out << ',' << n;
    for (const auto& n : numbered("mu_s_", s.cols())) out << ',' << n;
    if (with_pcs) out << ",z_pc1,z_pc2,s_pc1,s_pc2";
    out << '\n';
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const bool is_target = i < target.size();
        out << (is_target ? "target" : "background") << ','
            << (is_target ? label_text(target, i) : label_text(background, i - target.size()));
        for (double v : z.row(i)) out << ',' << format_double(v);
        for (double v : s.row(i)) out << ',' << format_double(v);
        if (with_pcs) {
            out << ',' << format_double(z_pc(i, 0)) << ',' << format_double(z_pc(i, 1)) << ','
                << format_double(s_pc(i, 0)) << ',' << format_double(s_pc(i, 1));
        }
        out << '\n';
    }
    write_text(cfg.out / "embeddings.csv", out.str());

    if (cfg.plot && with_pcs) {
        // Target classes keep their codes; background rows share one extra color.
        std::vector<int> labels;
        std::vector<std::string> names = target.class_names;
        int background_label = static_cast<int>(names.size());
        if (!target.has_labels()) {
            names = {"target"};
            background_label = 1;
        }
        names.push_back("background");
        for (std::size_t i = 0; i < target.size(); ++i) {
            labels.push_back(target.has_labels() ? (*target.class_labels)[i] : 0);
        }
        labels.resize(features.rows(), background_label);
        write_text(cfg.out / "latent_z.svg", svg_scatter(z_pc, labels, "background latents (PC1 vs PC2)", names));
        write_text(cfg.out / "latent_s.svg", svg_scatter(s_pc, labels, "salient latents (PC1 vs PC2)", names));
    }
}

void cmd_evaluate(const RunConfig& cfg) {
    cfg.validate();
    const MmcVaeModel model = load_model(cfg);
    auto [target, background] = load_pair(cfg);
    check_model_matches(model, target, "target CSV");
    prepare_out_dir(cfg);
    EvalOptions options;
    options.seeds.clear();
    for (std::size_t k = 0; k < cfg.n_seeds; ++k) {
        options.seeds.push_back(cfg.seed + k);
    }
    options.n_gen = cfg.n_gen;
    options.kernel = cfg.train.kernel;
    const EvalReport report = evaluate_model(model, target, background, options);
    write_text(cfg.out / "report.json", report_to_json(report));
    write_text(cfg.out / "report.csv", report_to_csv(report));
    for (const std::string& notice : report.notices) {
        std::cerr << "notice: " << notice << '\n';
    }
}

void cmd_generate(const RunConfig& cfg) {
    const MmcVaeModel model = load_model(cfg);
    require_file(cfg.target, "target CSV");
    const LabeledDataset target = load_dataset(cfg.target, cfg.label_column, Origin::target);
    check_model_matches(model, target, "target CSV");
    prepare_out_dir(cfg);
    const std::size_t n = std::min(cfg.n_rows, target.size());
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i] = i;
    }
    const Matrix x = select_rows(target.features, rows);
    std::vector<std::string> header = target.feature_names;
    if (header.size() != target.dim()) {
        header = numbered("x", target.dim());
    }
    write_text(cfg.out / "recon_both.csv", matrix_csv(reconstruct_partial(model, x, KeepLatents::both), header));
    write_text(cfg.out / "recon_background_only.csv",
               matrix_csv(reconstruct_partial(model, x, KeepLatents::background_only), header));
    write_text(cfg.out / "recon_salient_only.csv",
               matrix_csv(reconstruct_partial(model, x, KeepLatents::salient_only), header));
}

void cmd_sweep(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    auto [target, background] = load_pair(cfg);
    if (!target.has_labels()) {
        throw ConfigError("sweep needs class labels on the target CSV (column '" + cfg.label_column + "')");
    }
    prepare_out_dir(cfg);
    const std::filesystem::path table = cfg.out / "sweep.csv";
    {
        std::ofstream out(table, std::ios::binary);
        out << "lambda1,lambda2,logistic_s_class\n";
        if (!out) {
            throw ConfigError("cannot write " + table.string());
        }
    }
    Matrix grid(cfg.lambda1_grid.size(), cfg.lambda2_grid.size());
    for (std::size_t a = 0; a < cfg.lambda1_grid.size(); ++a) {
        for (std::size_t b = 0; b < cfg.lambda2_grid.size(); ++b) {
            TrainConfig train = cfg.train;
            train.lambda1 = cfg.lambda1_grid[a];
            train.lambda2 = cfg.lambda2_grid[b];
            const MmcVaeModel model = train_model(cfg, target, background, train, nullptr, nullptr);
            const double acc = separation_report(model, target, cfg.seed).logistic_s_class;
            grid(a, b) = acc;
            std::ofstream out(table, std::ios::binary | std::ios::app);
            out << format_double(train.lambda1) << ',' << format_double(train.lambda2) << ','
                << format_double(acc) << '\n';
            log << "lambda1 " << train.lambda1 << " lambda2 " << train.lambda2 << " logistic_s_class " << acc
                << '\n';
        }
    }
    if (cfg.plot) {
        std::vector<std::string> rows, cols;
        for (double v : cfg.lambda1_grid) rows.push_back(format_double(v));
        for (double v : cfg.lambda2_grid) cols.push_back(format_double(v));
        write_text(cfg.out / "sweep.svg",
                   svg_heatmap(grid, rows, cols, "salient-space class accuracy", "lambda1", "lambda2"));
    }
}

namespace {

/// Registers every per-field override on one subcommand; `apply` runs the ones the user passed.
struct Overrides {
    std::vector<std::function<void(RunConfig&)>> actions;

    template <typename T, typename Set>
    void add(CLI::App& app, const std::string& flag, const std::string& help, Set set) {
        auto value = std::make_shared<T>();
        CLI::Option* opt = app.add_option(flag, *value, help);
        actions.push_back([opt, value, set](RunConfig& cfg) {
            if (opt->count() > 0) {
                set(cfg, *value);
            }
        });
    }

    void apply(RunConfig& cfg) const {
        for (const auto& a : actions) {
            a(cfg);
        }
    }
};

void register_options(CLI::App& app, Overrides& o, std::string& config_path, bool& plot_flag) {
    app.add_option("--config", config_path, "JSON config file; flags override its values");
    app.add_flag("--plot", plot_flag, "Also write SVG plots");
    o.add<std::string>(app, "--out", "Output directory", [](RunConfig& c, const std::string& v) { c.out = v; });
    o.add<std::uint64_t>(app, "--seed", "Seed for data synthesis, initialization, training and evaluation",
                         [](RunConfig& c, std::uint64_t v) { c.seed = v; });
    o.add<std::string>(app, "--target", "Target CSV", [](RunConfig& c, const std::string& v) { c.target = v; });
    o.add<std::string>(app, "--background", "Background CSV",
                       [](RunConfig& c, const std::string& v) { c.background = v; });
    o.add<std::string>(app, "--checkpoint", "Model checkpoint",
                       [](RunConfig& c, const std::string& v) { c.checkpoint = v; });
    o.add<std::string>(app, "--label-column", "Class label column name",
                       [](RunConfig& c, const std::string& v) { c.label_column = v; });

    o.add<std::size_t>(app, "--synth-background-dim", "True background latent dim",
                       [](RunConfig& c, std::size_t v) { c.synth.background_dim = v; });
    o.add<std::size_t>(app, "--synth-salient-dim", "True salient latent dim",
                       [](RunConfig& c, std::size_t v) { c.synth.salient_dim = v; });
    o.add<std::size_t>(app, "--synth-input-dim", "Observed dimension",
                       [](RunConfig& c, std::size_t v) { c.synth.input_dim = v; });
    o.add<std::size_t>(app, "--n-target", "Synthetic target rows",
                       [](RunConfig& c, std::size_t v) { c.synth.n_target = v; });
    o.add<std::size_t>(app, "--m-background", "Synthetic background rows",
                       [](RunConfig& c, std::size_t v) { c.synth.m_background = v; });
    o.add<std::size_t>(app, "--n-classes", "Synthetic target classes",
                       [](RunConfig& c, std::size_t v) { c.synth.n_classes = v; });
    o.add<double>(app, "--class-separation", "Distance between class means",
                  [](RunConfig& c, double v) { c.synth.class_separation = v; });
    o.add<double>(app, "--noise-sigma", "Observation noise", [](RunConfig& c, double v) { c.synth.noise_sigma = v; });
    o.add<std::string>(app, "--decoder-style", "linear or random_relu_mlp",
                       [](RunConfig& c, const std::string& v) { c.synth.decoder_style = decoder_style_from_string(v); });

    o.add<std::size_t>(app, "--background-dim", "Model background latent dim",
                       [](RunConfig& c, std::size_t v) { c.background_dim = v; });
    o.add<std::size_t>(app, "--salient-dim", "Model salient latent dim",
                       [](RunConfig& c, std::size_t v) { c.salient_dim = v; });
    o.add<std::size_t>(app, "--hidden-dim", "Hidden width", [](RunConfig& c, std::size_t v) { c.hidden_dim = v; });
    o.add<std::string>(app, "--likelihood", "gaussian_unit_variance or bernoulli",
                       [](RunConfig& c, const std::string& v) { c.likelihood = likelihood_from_string(v); });
    o.add<bool>(app, "--zero-bias-decoder", "Pin decoder biases at zero (true/false)",
                [](RunConfig& c, bool v) { c.train.zero_bias_decoder = v; });

    o.add<double>(app, "--lambda1", "Salient-to-reference MMD weight",
                  [](RunConfig& c, double v) { c.train.lambda1 = v; });
    o.add<double>(app, "--lambda2", "Background-latent matching MMD weight",
                  [](RunConfig& c, double v) { c.train.lambda2 = v; });
    o.add<double>(app, "--lr", "Adam learning rate", [](RunConfig& c, double v) { c.train.lr = v; });
    o.add<std::size_t>(app, "--batch-size", "Minibatch size",
                       [](RunConfig& c, std::size_t v) { c.train.batch_size = v; });
    o.add<std::size_t>(app, "--epochs", "Training epochs", [](RunConfig& c, std::size_t v) { c.train.epochs = v; });
    o.add<std::string>(app, "--kernel", "median, fixed:<gamma> or multi:<g1>,<g2>,...",
                       [](RunConfig& c, const std::string& v) { c.train.kernel = parse_kernel_flag(v); });

    o.add<std::size_t>(app, "--n-seeds", "Evaluation seeds", [](RunConfig& c, std::size_t v) { c.n_seeds = v; });
    o.add<std::size_t>(app, "--n-gen", "Generated samples for sample-quality MMD",
                       [](RunConfig& c, std::size_t v) { c.n_gen = v; });
    o.add<std::size_t>(app, "--n-rows", "Rows to reconstruct", [](RunConfig& c, std::size_t v) { c.n_rows = v; });
    o.add<std::vector<double>>(app, "--lambda1-grid", "Sweep values for lambda1",
                               [](RunConfig& c, const std::vector<double>& v) { c.lambda1_grid = v; });
    o.add<std::vector<double>>(app, "--lambda2-grid", "Sweep values for lambda2",
                               [](RunConfig& c, const std::vector<double>& v) { c.lambda2_grid = v; });
}

RunConfig read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file " + path);
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Contrastive analysis with the moment matching contrastive VAE"};
    app.require_subcommand(1);
    const std::vector<std::string> names = {"synth", "train", "embed", "evaluate", "generate", "sweep"};
    const std::vector<std::string> descriptions = {
        "Write a synthetic target/background pair with ground-truth latents",
        "Train a model and write its checkpoint and per-epoch log",
        "Write posterior-mean embeddings (and optional PCA scatter plots)",
        "Write adherence, separation and sample-quality metrics",
        "Write full, background-only and salient-only reconstructions",
        "Train one model per (lambda1, lambda2) cell and tabulate salient-class accuracy"};
    std::vector<Overrides> overrides(names.size());
    std::vector<std::string> config_paths(names.size());
    std::vector<CLI::App*> subs;
    // CLI11 binds flags by address, so the storage must not move.
    auto plot_storage = std::make_unique<bool[]>(names.size());
    for (std::size_t k = 0; k < names.size(); ++k) {
        plot_storage[k] = false;
        CLI::App* sub = app.add_subcommand(names[k], descriptions[k]);
        register_options(*sub, overrides[k], config_paths[k], plot_storage[k]);
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kSuccess : kUserError;
    }

    try {
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (!subs[k]->parsed()) {
                continue;
            }
            RunConfig cfg = config_paths[k].empty() ? RunConfig{} : read_config_file(config_paths[k]);
            overrides[k].apply(cfg);
            if (plot_storage[k]) {
                cfg.plot = true;
            }
            cfg.command = names[k];
            cfg.resolve();
            if (names[k] == "synth") cmd_synth(cfg);
            if (names[k] == "train") cmd_train(cfg, out);
            if (names[k] == "embed") cmd_embed(cfg);
            if (names[k] == "evaluate") cmd_evaluate(cfg);
            if (names[k] == "generate") cmd_generate(cfg);
            if (names[k] == "sweep") cmd_sweep(cfg, out);
            out << names[k] << ": wrote " << cfg.out.string() << '\n';
        }
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kNumericalError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUserError;
    }
    return kSuccess;
}

}  // namespace mmcvae::cli
