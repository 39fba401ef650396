#include "mmcvae/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace mmcvae {

namespace {

constexpr const char* kMagic = "mmcvae-checkpoint";
constexpr int kVersion = 1;

std::string expect_key(std::istream& in, const std::string& key) {
    std::string got;
    if (!(in >> got) || got != key) {
        throw ParseError("checkpoint: expected '" + key + "', found '" + got + "'");
    }
    std::string value;
    if (!(in >> value)) {
        throw ParseError("checkpoint: missing value for '" + key + "'");
    }
    return value;
}

std::size_t parse_count(const std::string& token) {
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw ParseError("checkpoint: invalid count '" + token + "'");
    }
    return value;
}

}  // namespace

std::string checkpoint_to_string(const MmcVaeModel& model) {
    model.validate();
    std::ostringstream out;
    const ModelShape& s = model.shape;
    out << kMagic << ' ' << kVersion << '\n';
    out << "input_dim " << s.input_dim << '\n';
    out << "background_dim " << s.background_dim << '\n';
    out << "salient_dim " << s.salient_dim << '\n';
    out << "hidden_dim " << s.hidden_dim << '\n';
    out << "likelihood " << to_string(s.likelihood) << '\n';
    out << "zero_bias_decoder " << (s.zero_bias_decoder ? 1 : 0) << '\n';
    out << "s_prime";
    for (double v : model.s_prime) {
        out << ' ' << format_double(v);
    }
    out << '\n';
    for (const Param* p : model.parameters()) {
        out << "param " << p->name << ' ' << p->value.rows() << ' ' << p->value.cols() << '\n';
        for (std::size_t i = 0; i < p->value.rows(); ++i) {
            auto row = p->value.row(i);
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (j > 0) {
                    out << ' ';
                }
                out << format_double(row[j]);
            }
            out << '\n';
        }
    }
    out << "end\n";
    return out.str();
}

MmcVaeModel checkpoint_from_string(const std::string& text) {
    std::istringstream in(text);
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kMagic) {
        throw ParseError("checkpoint: missing '" + std::string(kMagic) + "' header");
    }
    if (version != kVersion) {
        throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    }
    ModelShape shape;
    shape.input_dim = parse_count(expect_key(in, "input_dim"));
    shape.background_dim = parse_count(expect_key(in, "background_dim"));
    shape.salient_dim = parse_count(expect_key(in, "salient_dim"));
    shape.hidden_dim = parse_count(expect_key(in, "hidden_dim"));
    shape.likelihood = likelihood_from_string(expect_key(in, "likelihood"));
    shape.zero_bias_decoder = expect_key(in, "zero_bias_decoder") == "1";
    shape.validate();

    std::string key;
    if (!(in >> key) || key != "s_prime") {
        throw ParseError("checkpoint: expected 's_prime'");
    }
    std::vector<double> s_prime(shape.salient_dim);
    for (double& v : s_prime) {
        std::string token;
        in >> token;
        v = parse_double(token);
    }

    // Start from a zero-initialized model with the right shapes, then overwrite.
    Rng rng(0);
    MmcVaeModel model = MmcVaeModel::initialize(shape, rng, s_prime);
    std::map<std::string, Param*> by_name;
    for (Param* p : model.parameters()) {
        by_name[p->name] = p;
    }
    std::size_t loaded = 0;
    while (in >> key) {
        if (key == "end") {
            break;
        }
        if (key != "param") {
            throw ParseError("checkpoint: unexpected token '" + key + "'");
        }
        std::string name, rows_tok, cols_tok;
        in >> name >> rows_tok >> cols_tok;
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw ParseError("checkpoint: unknown parameter '" + name + "'");
        }
        Param& p = *it->second;
        const std::size_t rows = parse_count(rows_tok), cols = parse_count(cols_tok);
        if (rows != p.value.rows() || cols != p.value.cols()) {
            throw DimensionError("checkpoint: parameter " + name + " is " + rows_tok + "x" + cols_tok +
                                 " but the architecture requires " + p.value.shape_string());
        }
        for (double& v : p.value.values()) {
            std::string token;
            if (!(in >> token)) {
                throw ParseError("checkpoint: truncated values for " + name);
            }
            v = parse_double(token);
        }
        ++loaded;
    }
    if (key != "end") {
        throw ParseError("checkpoint: missing 'end' marker");
    }
    if (loaded != by_name.size()) {
        throw ParseError("checkpoint: expected " + std::to_string(by_name.size()) + " parameters, found " +
                         std::to_string(loaded));
    }
    return model;
}

void save_checkpoint(const MmcVaeModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write checkpoint to " + path.string());
    }
    out << checkpoint_to_string(model);
    if (!out) {
        throw ConfigError("failed writing checkpoint " + path.string());
    }
}

MmcVaeModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open checkpoint " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return checkpoint_from_string(buf.str());
}

}  // namespace mmcvae
