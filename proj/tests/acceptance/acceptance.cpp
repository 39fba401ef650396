// Runs AC-1..AC-8 and prints one PASS/FAIL line per criterion.
// Usage: mmcvae_acceptance [AC-n ...]   (no arguments runs all of them)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "cli.hpp"
#include "mmcvae/eval.hpp"
#include "mmcvae/train.hpp"
#include "oracles.hpp"
#include "toy.hpp"

using namespace mmcvae;

namespace {

struct Result {
    bool pass = false;
    std::string detail;
};

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += (i > 0 ? " " : "") + fmt("%.3f", v[i]);
    }
    return s;
}

// ---- synthetic runs shared by AC-3, AC-7 and AC-8 ------------------------------------

const SynthData& synthetic(std::uint64_t seed) {
    static std::map<std::uint64_t, SynthData> cache;
    auto it = cache.find(seed);
    if (it == cache.end()) {
        SynthConfig cfg;
        cfg.seed = seed;
        Rng rng(seed);
        it = cache.emplace(seed, synth_contrastive(cfg, rng)).first;
    }
    return it->second;
}

/// The CLI's default architecture and TrainConfig, trained on the seed's synthetic data.
const MmcVaeModel& trained(std::uint64_t seed, double lambda1, double lambda2, bool zero_bias = false) {
    static std::map<std::tuple<std::uint64_t, double, double, bool>, MmcVaeModel> cache;
    const auto key = std::make_tuple(seed, lambda1, lambda2, zero_bias);
    auto it = cache.find(key);
    if (it == cache.end()) {
        const SynthData& data = synthetic(seed);
        const cli::RunConfig defaults;
        ModelShape shape;
        shape.input_dim = data.target.dim();
        shape.background_dim = defaults.background_dim;
        shape.salient_dim = defaults.salient_dim;
        shape.hidden_dim = defaults.hidden_dim;
        shape.likelihood = defaults.likelihood;
        shape.zero_bias_decoder = zero_bias;
        Rng init = Rng::derive(seed, 0);
        MmcVaeModel model = MmcVaeModel::initialize(shape, init);
        TrainConfig cfg;
        cfg.seed = seed;
        cfg.lambda1 = lambda1;
        cfg.lambda2 = lambda2;
        cfg.zero_bias_decoder = zero_bias;
        Timer t;
        fit(model, data.target, data.background, cfg);
        std::printf("  trained seed %llu lambda1 %g lambda2 %g%s in %.1fs\n", static_cast<unsigned long long>(seed),
                    lambda1, lambda2, zero_bias ? " zero-bias" : "", t.seconds());
        std::fflush(stdout);
        it = cache.emplace(key, std::move(model)).first;
    }
    return it->second;
}

// ---- AC-1 ----------------------------------------------------------------------------

Result ac1() {
    Timer t;
    double worst = 0.0;
    std::string where;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        MmcVaeModel model = toy::make_model(6, 8, 2, 2, seed);
        Rng rng(100 + seed);
        const Matrix x = oracle::random_matrix(rng, 5, 6), b = oracle::random_matrix(rng, 4, 6);
        const toy::GradientCheck check = toy::check_total_loss_gradient(model, x, b, 1.0, 1.0, KernelConfig{}, 7 + seed);
        if (check.worst > worst) {
            worst = check.worst;
            where = check.worst_param;
        }
    }
    const double secs = t.seconds();
    return {worst < 1e-4 && secs < 10.0,
            "max relative error " + fmt("%.2e", worst) + " (" + where + "), " + fmt("%.1fs", secs)};
}

// ---- AC-2 ----------------------------------------------------------------------------

Matrix shifted_normal(Rng& rng, std::size_t n, double shift) {
    Matrix m = sample_std_normal(rng, n, 1);
    for (double& v : m.values()) {
        v += shift;
    }
    return m;
}

Result ac2() {
    Timer t;
    Rng rng(2024);
    double oracle_err = 0.0, tile_err = 0.0, self_err = 0.0;
    for (int i = 0; i < 20; ++i) {
        const std::size_t n = 3 + rng.uniform_index(30), m = 3 + rng.uniform_index(30), d = 1 + rng.uniform_index(5);
        const Matrix x = oracle::random_matrix(rng, n, d), y = oracle::random_matrix(rng, m, d, 1.5);
        const double gamma = 0.05 + rng.uniform();
        oracle_err = std::max(oracle_err, std::abs(mmd_biased(x, y, KernelConfig::fixed(gamma)) - oracle::mmd(x, y, gamma)));
        const double med = oracle::median_gamma(vconcat(x, y));
        oracle_err = std::max(oracle_err, std::abs(mmd_biased(x, y, KernelConfig::median()) - oracle::mmd(x, y, med)));

        const Matrix c = oracle::random_matrix(rng, 1, d);
        for (const KernelConfig& cfg : {KernelConfig::fixed(gamma), KernelConfig::multi_scale({0.1, gamma, 10.0})}) {
            for (std::size_t copies : {std::size_t{1}, std::size_t{4}, n}) {
                tile_err = std::max(tile_err, std::abs(mmd_to_constant(x, c.row(0), cfg) -
                                                       mmd_biased(x, tile_row(c.row(0), copies), cfg)));
            }
        }
        tile_err = std::max(tile_err, std::abs(mmd_to_constant(x, c.row(0), KernelConfig::median()) -
                                               mmd_biased(x, tile_row(c.row(0), 1), KernelConfig::median())));
        self_err = std::max(self_err, std::abs(mmd_biased(x, x, KernelConfig::median())));
    }

    Rng data(7), perm(8);
    const Matrix a = shifted_normal(data, 200, 0.0), b = shifted_normal(data, 200, 3.0);
    const double p_shift = permutation_test(a, b, KernelConfig::median(), 500, perm);
    int accepted = 0;
    for (int r = 0; r < 20; ++r) {
        Rng d2(1000 + r), p2(2000 + r);
        const Matrix u = shifted_normal(d2, 200, 0.0), v = shifted_normal(d2, 200, 0.0);
        accepted += permutation_test(u, v, KernelConfig::median(), 200, p2) > 0.05 ? 1 : 0;
    }
    const double secs = t.seconds();
    const bool pass = oracle_err < 1e-12 && tile_err < 1e-12 && self_err < 1e-12 && p_shift < 0.01 && accepted >= 18 &&
                      secs < 30.0;
    return {pass, "oracle " + fmt("%.1e", oracle_err) + ", tiled " + fmt("%.1e", tile_err) + ", self " +
                      fmt("%.1e", self_err) + ", shifted p " + fmt("%.4f", p_shift) + ", null accepted " +
                      std::to_string(accepted) + "/20, " + fmt("%.1fs", secs)};
}

// ---- AC-3 ----------------------------------------------------------------------------

struct Ac3Metrics {
    double s_class, z_class, z_origin, s_vs_sprime;
};

Ac3Metrics metrics_for(std::uint64_t seed, double lambda1, double lambda2) {
    const MmcVaeModel& model = trained(seed, lambda1, lambda2);
    const SynthData& data = synthetic(seed);
    const SeparationMetrics sep = separation_report(model, data.target, seed);
    const AdherenceMetrics adh = assumption_report(model, data.target, data.background, seed);
    return {sep.logistic_s_class, sep.logistic_z_class, adh.logistic_z_origin, adh.logistic_s_vs_sprime};
}

Result ac3() {
    Timer t;
    const TrainConfig defaults;
    std::vector<double> s_class, z_class, z_origin, s_sp, abl_origin, abl_sp;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Ac3Metrics m = metrics_for(seed, defaults.lambda1, defaults.lambda2);
        s_class.push_back(m.s_class);
        z_class.push_back(m.z_class);
        z_origin.push_back(m.z_origin);
        s_sp.push_back(m.s_vs_sprime);
        const Ac3Metrics a = metrics_for(seed, 0.0, 0.0);
        abl_origin.push_back(a.z_origin);
        abl_sp.push_back(a.s_vs_sprime);
    }
    const double secs = t.seconds();
    const bool a = median(s_class) >= 0.90, b = median(z_class) <= 0.65, c = median(z_origin) <= 0.65,
               d = median(s_sp) <= 0.65, e = median(abl_origin) > median(z_origin),
               f = median(abl_sp) > median(s_sp), g = secs < 1800.0;
    auto mark = [](bool ok) { return ok ? "ok" : "FAIL"; };
    std::ostringstream out;
    out << "median (a) s_class " << fmt("%.3f", median(s_class)) << " " << mark(a) << "; (b) z_class "
        << fmt("%.3f", median(z_class)) << " " << mark(b) << "; (c) z_origin " << fmt("%.3f", median(z_origin))
        << " " << mark(c) << "; (d) s_b vs s' " << fmt("%.3f", median(s_sp)) << " " << mark(d)
        << "; ablation z_origin " << fmt("%.3f", median(abl_origin)) << " " << mark(e) << ", s_b vs s' "
        << fmt("%.3f", median(abl_sp)) << " " << mark(f) << "; " << fmt("%.0fs", secs) << " " << mark(g)
        << "\n      per seed s_class [" << join(s_class) << "] z_class [" << join(z_class) << "] z_origin ["
        << join(z_origin) << "] s_vs_s' [" << join(s_sp) << "] ablation z_origin [" << join(abl_origin)
        << "] s_vs_s' [" << join(abl_sp) << "]";
    return {a && b && c && d && e && f && g, out.str()};
}

// ---- AC-4 ----------------------------------------------------------------------------

Result ac4() {
    Timer t;
    Rng rng(44);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        const std::size_t d = 1 + rng.uniform_index(4);
        GaussianPosterior post{Matrix(1, d), Matrix(1, d)};
        for (std::size_t j = 0; j < d; ++j) {
            post.mu(0, j) = rng.normal();
            post.logvar(0, j) = 3.0 * rng.uniform() - 1.5;
        }
        const double closed = kl_std_normal(post);
        // E_q[log q(z) − log p(z)] with z = μ + σε.
        const std::size_t samples = 1000000;
        double sum = 0.0;
        for (std::size_t k = 0; k < samples; ++k) {
            double log_ratio = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double eps = rng.normal();
                const double z = post.mu(0, j) + std::exp(0.5 * post.logvar(0, j)) * eps;
                log_ratio += -0.5 * post.logvar(0, j) - 0.5 * eps * eps + 0.5 * z * z;
            }
            sum += log_ratio;
        }
        const double mc = sum / static_cast<double>(samples);
        worst = std::max(worst, std::abs(mc - closed) / std::abs(closed));
    }
    const GaussianPosterior zero{Matrix(1, 3), Matrix(1, 3)};
    const double at_zero = kl_std_normal(zero);
    const double secs = t.seconds();
    return {worst < 0.02 && at_zero == 0.0 && secs < 10.0,
            "max relative MC gap " + fmt("%.4f", worst) + ", KL(0,0) = " + fmt("%g", at_zero) + ", " +
                fmt("%.1fs", secs)};
}

// ---- AC-5 ----------------------------------------------------------------------------

Result ac5() {
    Timer t;
    Rng rng(55);
    double sil_err = 0.0;
    for (int i = 0; i < 20; ++i) {
        const Matrix x = oracle::random_matrix(rng, 50, 1 + rng.uniform_index(4));
        std::vector<int> labels(50);
        const int k = 2 + static_cast<int>(rng.uniform_index(3));
        for (std::size_t j = 0; j < 50; ++j) {
            labels[j] = static_cast<int>(j % static_cast<std::size_t>(k));
        }
        rng.shuffle(std::span<int>(labels));
        sil_err = std::max(sil_err, std::abs(silhouette(x, labels) - oracle::silhouette(x, labels)));
    }

    double pca_err = 0.0;
    for (int i = 0; i < 10; ++i) {
        Matrix x = oracle::random_matrix(rng, 60, 2 + rng.uniform_index(5));
        for (std::size_t r = 0; r < x.rows(); ++r) {
            x(r, 0) *= 4.0;
            x(r, 1) += 0.7 * x(r, 0);
        }
        const auto eig = oracle::jacobi_eigenvalues(oracle::covariance(x));
        const PcaResult p = pca_2d(x);
        pca_err = std::max({pca_err, std::abs(p.explained_variance[0] - eig[0]),
                            std::abs(p.explained_variance[1] - eig[1])});
    }

    double worst_separable = 1.0, worst_permuted = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng r(500 + seed);
        const std::size_t n = 1000;
        Matrix x = oracle::random_matrix(r, n, 3);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = i % 2 == 0 ? 1 : 0;
            x(i, 0) += y[i] == 1 ? 4.0 : -4.0;
            if (std::abs(x(i, 0)) < 0.5) {
                x(i, 0) = y[i] == 1 ? 0.5 : -0.5;
            }
        }
        worst_separable = std::min(worst_separable, holdout_accuracy(x, y, seed));
        std::vector<int> shuffled = y;
        r.shuffle(std::span<int>(shuffled));
        worst_permuted = std::max(worst_permuted, std::abs(holdout_accuracy(x, shuffled, seed) - 0.5));
    }
    const double secs = t.seconds();
    const bool pass = sil_err < 1e-12 && pca_err < 1e-8 && worst_separable == 1.0 && worst_permuted <= 0.1 && secs < 30.0;
    return {pass, "silhouette " + fmt("%.1e", sil_err) + ", pca " + fmt("%.1e", pca_err) + ", separable min acc " +
                      fmt("%.3f", worst_separable) + ", permuted max |acc-0.5| " + fmt("%.3f", worst_permuted) + ", " +
                      fmt("%.1fs", secs)};
}

// ---- AC-6 ----------------------------------------------------------------------------

Result ac6() {
    Timer t;
    const std::filesystem::path dir = oracle::scratch_dir("acceptance_ac6");
    cli::RunConfig base;
    base.out = dir / "data";
    base.resolve();
    cli::cmd_synth(base);
    base.target = dir / "data" / "target.csv";
    base.background = dir / "data" / "background.csv";
    std::ostringstream log;
    for (const char* run : {"train_a", "train_b"}) {
        cli::RunConfig cfg = base;
        cfg.out = dir / run;
        cfg.resolve();
        cli::cmd_train(cfg, log);
    }
    const bool same_ckpt = oracle::read_file(dir / "train_a" / "model.ckpt") ==
                           oracle::read_file(dir / "train_b" / "model.ckpt");
    for (const char* run : {"eval_a", "eval_b"}) {
        cli::RunConfig cfg = base;
        cfg.checkpoint = dir / "train_a" / "model.ckpt";
        cfg.out = dir / run;
        cfg.resolve();
        cli::cmd_evaluate(cfg);
    }
    const bool same_report =
        oracle::read_file(dir / "eval_a" / "report.json") == oracle::read_file(dir / "eval_b" / "report.json") &&
        oracle::read_file(dir / "eval_a" / "report.csv") == oracle::read_file(dir / "eval_b" / "report.csv");
    return {same_ckpt && same_report, std::string("checkpoints ") + (same_ckpt ? "identical" : "DIFFER") +
                                          ", reports " + (same_report ? "identical" : "DIFFER") + ", " +
                                          fmt("%.0fs", t.seconds())};
}

// ---- AC-7 ----------------------------------------------------------------------------

/// Mean over class pairs of the distance between per-class mean rows.
double class_mean_gap(const Matrix& rows, const std::vector<int>& labels) {
    std::map<int, std::vector<double>> sums;
    std::map<int, double> counts;
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        auto& s = sums[labels[i]];
        s.resize(rows.cols(), 0.0);
        for (std::size_t j = 0; j < rows.cols(); ++j) {
            s[j] += rows(i, j);
        }
        counts[labels[i]] += 1.0;
    }
    double total = 0.0;
    int pairs = 0;
    for (auto a = sums.begin(); a != sums.end(); ++a) {
        for (auto b = std::next(a); b != sums.end(); ++b) {
            double sq = 0.0;
            for (std::size_t j = 0; j < rows.cols(); ++j) {
                const double diff = a->second[j] / counts[a->first] - b->second[j] / counts[b->first];
                sq += diff * diff;
            }
            total += std::sqrt(sq);
            ++pairs;
        }
    }
    return total / pairs;
}

Result ac7() {
    Timer t;
    const TrainConfig defaults;
    std::vector<double> ratios;
    bool biases_zero = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const MmcVaeModel& model = trained(seed, defaults.lambda1, defaults.lambda2, true);
        for (const Param* p : model.parameters()) {
            if (p->name.rfind("decoder.", 0) == 0 && p->name.size() > 5 &&
                p->name.compare(p->name.size() - 5, 5, ".bias") == 0) {
                biases_zero = biases_zero && std::all_of(p->value.values().begin(), p->value.values().end(),
                                                         [](double v) { return v == 0.0; });
            }
        }
        const LabeledDataset& target = synthetic(seed).target;
        const double bg = class_mean_gap(reconstruct_partial(model, target.features, KeepLatents::background_only),
                                         *target.class_labels);
        const double sal = class_mean_gap(reconstruct_partial(model, target.features, KeepLatents::salient_only),
                                          *target.class_labels);
        ratios.push_back(bg / sal);
    }
    const double med = median(ratios);
    return {biases_zero && med < 0.25, std::string("decoder biases ") + (biases_zero ? "exactly 0" : "NONZERO") +
                                           ", median background/salient class gap ratio " + fmt("%.3f", med) +
                                           " [" + join(ratios) + "], " + fmt("%.0fs", t.seconds())};
}

// ---- AC-8 ----------------------------------------------------------------------------

Result ac8() {
    Timer t;
    const std::vector<double> grid{0.0, 10.0, 100.0, 1000.0};
    std::vector<std::vector<double>> cell_median(grid.size(), std::vector<double>(grid.size()));
    for (std::size_t a = 0; a < grid.size(); ++a) {
        for (std::size_t b = 0; b < grid.size(); ++b) {
            std::vector<double> acc;
            for (std::uint64_t seed = 0; seed < 3; ++seed) {
                acc.push_back(separation_report(trained(seed, grid[a], grid[b]), synthetic(seed).target, seed)
                                  .logistic_s_class);
            }
            cell_median[a][b] = median(acc);
        }
    }
    double best = -1.0;
    std::string best_cell;
    for (std::size_t a = 1; a + 1 < grid.size(); ++a) {
        for (std::size_t b = 1; b + 1 < grid.size(); ++b) {
            if (cell_median[a][b] > best) {
                best = cell_median[a][b];
                best_cell = "(" + fmt("%g", grid[a]) + "," + fmt("%g", grid[b]) + ")";
            }
        }
    }
    const double corner = cell_median[0][0];
    std::ostringstream table;
    for (std::size_t a = 0; a < grid.size(); ++a) {
        table << "\n      lambda1 " << fmt("%-6g", grid[a]) << " [" << join(cell_median[a]) << "]";
    }
    return {best - corner >= 0.05, "best interior " + best_cell + " " + fmt("%.3f", best) + " vs (0,0) " +
                                       fmt("%.3f", corner) + ", gain " + fmt("%+.3f", best - corner) + ", " +
                                       fmt("%.0fs", t.seconds()) + table.str()};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Result()>>> criteria{
        {"AC-1", ac1}, {"AC-2", ac2}, {"AC-3", ac3}, {"AC-4", ac4},
        {"AC-5", ac5}, {"AC-6", ac6}, {"AC-7", ac7}, {"AC-8", ac8}};
    std::vector<std::string> selected(argv + 1, argv + argc);
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), name) == selected.end()) {
            continue;
        }
        Result r;
        try {
            r = run();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        failures += r.pass ? 0 : 1;
        std::printf("%s %s: %s\n", r.pass ? "PASS" : "FAIL", name.c_str(), r.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
