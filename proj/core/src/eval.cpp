#include "mmcvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mmcvae/format.hpp"

namespace mmcvae {

namespace {

double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double sigmoid(double v) {
    if (v >= 0.0) {
        return 1.0 / (1.0 + std::exp(-v));
    }
    const double e = std::exp(v);
    return e / (1.0 + e);
}

double objective_at(const Matrix& x, const std::vector<int>& y, const std::vector<double>& w, double b, double l2) {
    const double n = static_cast<double>(x.rows());
    double loss = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double z = b;
        auto row = x.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            z += w[j] * row[j];
        }
        loss += y[i] == 1 ? softplus(-z) : softplus(z);
    }
    double reg = 0.0;
    for (double v : w) {
        reg += v * v;
    }
    return loss / n + 0.5 * l2 * reg / n;
}

void check_binary(const Matrix& x, const std::vector<int>& y) {
    if (x.rows() != y.size()) {
        throw DimensionError("logistic_fit: " + std::to_string(x.rows()) + " rows but " + std::to_string(y.size()) +
                             " labels");
    }
    std::size_t ones = 0, zeros = 0;
    for (int label : y) {
        if (label == 1) {
            ++ones;
        } else if (label == 0) {
            ++zeros;
        } else {
            throw ConfigError("logistic_fit: labels must be 0 or 1, got " + std::to_string(label));
        }
    }
    if (ones < 2 || zeros < 2) {
        throw ConfigError("logistic_fit: need at least 2 samples of each class (got " + std::to_string(zeros) +
                          " and " + std::to_string(ones) + ")");
    }
}

// Canonical row order: by label, then lexicographic coordinates, then original index.
std::vector<std::size_t> canonical_order(const Matrix& points, const std::vector<int>& labels) {
    std::vector<std::size_t> order(points.rows());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (labels[a] != labels[b]) {
            return labels[a] < labels[b];
        }
        auto ra = points.row(a), rb = points.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    return order;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        acc += d * d;
    }
    return std::sqrt(acc);
}

std::vector<int> origin_labels(std::size_t n_target, std::size_t n_background) {
    std::vector<int> labels(n_target, 1);
    labels.resize(n_target + n_background, 0);
    return labels;
}

}  // namespace

double LogisticModel::decision(std::span<const double> row) const {
    if (row.size() != weights.size()) {
        throw DimensionError("logistic decision: row has " + std::to_string(row.size()) + " features, model has " +
                             std::to_string(weights.size()));
    }
    double z = bias;
    for (std::size_t j = 0; j < row.size(); ++j) {
        z += weights[j] * row[j];
    }
    return z;
}

LogisticModel logistic_fit(const Matrix& x, const std::vector<int>& y, std::size_t max_iter, double l2) {
    check_binary(x, y);
    if (!(l2 >= 0.0)) {
        throw ConfigError("logistic_fit: l2 must be non-negative");
    }
    const std::size_t n = x.rows(), k = x.cols();
    const double dn = static_cast<double>(n);
    LogisticModel model;
    model.weights.assign(k, 0.0);

    std::vector<double> grad_w(k);
    double step = 1.0;
    double current = objective_at(x, y, model.weights, model.bias, l2);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        std::fill(grad_w.begin(), grad_w.end(), 0.0);
        double grad_b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            auto row = x.row(i);
            const double r = sigmoid(model.decision(row)) - static_cast<double>(y[i]);
            for (std::size_t j = 0; j < k; ++j) {
                grad_w[j] += r * row[j];
            }
            grad_b += r;
        }
        double grad_sq = 0.0, grad_inf = std::abs(grad_b / dn);
        for (std::size_t j = 0; j < k; ++j) {
            grad_w[j] = grad_w[j] / dn + l2 * model.weights[j] / dn;
            grad_sq += grad_w[j] * grad_w[j];
            grad_inf = std::max(grad_inf, std::abs(grad_w[j]));
        }
        grad_b /= dn;
        grad_sq += grad_b * grad_b;
        model.iterations = iter;
        if (grad_inf < 1e-6) {
            model.converged = true;
            return model;
        }

        // Armijo backtracking, starting from twice the last accepted step.
        step = std::min(step * 2.0, 1e6);
        std::vector<double> trial_w(k);
        double trial_b = 0.0, trial = 0.0;
        for (int attempt = 0; attempt < 60; ++attempt) {
            for (std::size_t j = 0; j < k; ++j) {
                trial_w[j] = model.weights[j] - step * grad_w[j];
            }
            trial_b = model.bias - step * grad_b;
            trial = objective_at(x, y, trial_w, trial_b, l2);
            if (trial <= current - 1e-4 * step * grad_sq) {
                break;
            }
            step *= 0.5;
        }
        if (!(trial < current)) {
            // No further decrease is representable.
            model.converged = true;
            return model;
        }
        model.weights = trial_w;
        model.bias = trial_b;
        current = trial;
    }
    model.iterations = max_iter;
    return model;
}

double logistic_objective(const LogisticModel& model, const Matrix& x, const std::vector<int>& y, double l2) {
    check_binary(x, y);
    return objective_at(x, y, model.weights, model.bias, l2);
}

void Embeddings::validate() const {
    if (labels.size() != points.rows() || origin.size() != points.rows()) {
        throw DimensionError("embeddings: " + std::to_string(points.rows()) + " points, " +
                             std::to_string(labels.size()) + " labels, " + std::to_string(origin.size()) +
                             " origins");
    }
}

double holdout_accuracy(const Matrix& points, const std::vector<int>& labels, std::uint64_t seed,
                        double train_fraction) {
    if (points.rows() != labels.size()) {
        throw DimensionError("holdout_accuracy: row/label count mismatch");
    }
    const auto order = canonical_order(points, labels);
    const Matrix sorted = select_rows(points, order);
    std::vector<int> sorted_labels(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        sorted_labels[i] = labels[order[i]];
    }
    std::vector<int> classes(sorted_labels);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() < 2) {
        throw ConfigError("holdout_accuracy: need at least two distinct labels");
    }

    Rng rng(seed);
    const SplitIndices split = split_indices(sorted.rows(), &sorted_labels, train_fraction, rng);
    const Matrix train = select_rows(sorted, split.train);
    const Matrix test = select_rows(sorted, split.test);
    std::vector<int> train_labels, test_labels;
    for (std::size_t i : split.train) {
        train_labels.push_back(sorted_labels[i]);
    }
    for (std::size_t i : split.test) {
        test_labels.push_back(sorted_labels[i]);
    }

    // Binary: one model on {first class → 0, second → 1}. Otherwise one-vs-rest.
    std::vector<LogisticModel> models;
    const std::size_t n_models = classes.size() == 2 ? 1 : classes.size();
    for (std::size_t c = 0; c < n_models; ++c) {
        const int positive = classes.size() == 2 ? classes[1] : classes[c];
        std::vector<int> binary(train_labels.size());
        for (std::size_t i = 0; i < binary.size(); ++i) {
            binary[i] = train_labels[i] == positive ? 1 : 0;
        }
        models.push_back(logistic_fit(train, binary));
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.rows(); ++i) {
        int predicted = 0;
        if (classes.size() == 2) {
            predicted = models[0].predict(test.row(i)) == 1 ? classes[1] : classes[0];
        } else {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < models.size(); ++c) {
                const double score = models[c].decision(test.row(i));
                if (score > best) {
                    best = score;
                    predicted = classes[c];
                }
            }
        }
        if (predicted == test_labels[i]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test.rows());
}

double accuracy_80_20(const Embeddings& emb, LabelSource source, std::uint64_t seed) {
    emb.validate();
    if (source == LabelSource::class_label) {
        return holdout_accuracy(emb.points, emb.labels, seed);
    }
    std::vector<int> labels(emb.origin.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i] = emb.origin[i] == Origin::target ? 1 : 0;
    }
    return holdout_accuracy(emb.points, labels, seed);
}

SilhouetteResult silhouette_detailed(const Matrix& points, const std::vector<int>& labels) {
    const std::size_t n = points.rows();
    if (labels.size() != n) {
        throw DimensionError("silhouette: row/label count mismatch");
    }
    std::map<int, std::size_t> index;
    for (int label : labels) {
        index.emplace(label, index.size());
    }
    const std::size_t n_clusters = index.size();
    if (n_clusters < 2) {
        throw ConfigError("silhouette: need at least 2 clusters");
    }
    std::vector<std::size_t> cluster(n), counts(n_clusters, 0);
    for (std::size_t i = 0; i < n; ++i) {
        cluster[i] = index.at(labels[i]);
        ++counts[cluster[i]];
    }

    SilhouetteResult out;
    std::vector<double> sums(n_clusters);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(sums.begin(), sums.end(), 0.0);
        auto pi = points.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                sums[cluster[j]] += euclidean(pi, points.row(j));
            }
        }
        const std::size_t own = cluster[i];
        if (counts[own] == 1) {
            continue;  // contributes 0
        }
        const double a = sums[own] / static_cast<double>(counts[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n_clusters; ++c) {
            if (c != own) {
                b = std::min(b, sums[c] / static_cast<double>(counts[c]));
            }
        }
        const double denom = std::max(a, b);
        if (!(denom > 0.0)) {
            out.degenerate = true;
            continue;
        }
        total += (b - a) / denom;
    }
    out.score = total / static_cast<double>(n);
    return out;
}

double silhouette(const Matrix& points, const std::vector<int>& labels) {
    return silhouette_detailed(points, labels).score;
}

PcaResult pca_2d(const Matrix& x) {
    const std::size_t n = x.rows(), k = x.cols();
    if (n < 3 || k < 2) {
        throw DimensionError("pca_2d: need at least 3 rows and 2 columns, got " + x.shape_string());
    }
    const auto means = column_means(x);
    Eigen::MatrixXd centered(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x(i, j) - means[j];
        }
    }
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("pca_2d: eigendecomposition failed");
    }
    const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
    const Eigen::MatrixXd& vectors = solver.eigenvectors();
    const double top = values(static_cast<Eigen::Index>(k - 1));
    if (!(top > 1e-300)) {
        throw NumericalError("pca_2d: data has rank 0");
    }

    PcaResult out;
    out.components = Matrix(2, k);
    for (std::size_t c = 0; c < 2; ++c) {
        const auto col = static_cast<Eigen::Index>(k - 1 - c);
        out.explained_variance[c] = std::max(0.0, values(col));
        Eigen::Index arg = 0;
        vectors.col(col).cwiseAbs().maxCoeff(&arg);
        const double sign = vectors(arg, col) < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < k; ++j) {
            out.components(c, j) = sign * vectors(static_cast<Eigen::Index>(j), col);
        }
    }
    out.coordinates = Matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                acc += centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * out.components(c, j);
            }
            out.coordinates(i, c) = acc;
        }
    }
    return out;
}

AdherenceMetrics assumption_report(const MmcVaeModel& model, const LabeledDataset& target,
                                   const LabeledDataset& background, std::uint64_t seed) {
    const Matrix zx = encode(model, target.features, LatentBlock::background).mu;
    const Matrix zb = encode(model, background.features, LatentBlock::background).mu;
    const Matrix sb = encode(model, background.features, LatentBlock::salient).mu;

    AdherenceMetrics out;
    const Matrix z_all = vconcat(zx, zb);
    const auto z_labels = origin_labels(zx.rows(), zb.rows());
    out.logistic_z_origin = holdout_accuracy(z_all, z_labels, seed);
    out.silhouette_z_origin = silhouette(z_all, z_labels);

    const Matrix s_all = vconcat(sb, tile_row(model.s_prime, sb.rows()));
    const auto s_labels = origin_labels(sb.rows(), sb.rows());
    out.logistic_s_vs_sprime = holdout_accuracy(s_all, s_labels, seed);
    const SilhouetteResult sil = silhouette_detailed(s_all, s_labels);
    out.silhouette_s_vs_sprime = sil.score;
    out.silhouette_s_degenerate = sil.degenerate;
    return out;
}

SeparationMetrics separation_report(const MmcVaeModel& model, const LabeledDataset& target, std::uint64_t seed) {
    if (!target.has_labels()) {
        throw ConfigError("separation_report: target dataset has no class labels");
    }
    const Matrix zx = encode(model, target.features, LatentBlock::background).mu;
    const Matrix sx = encode(model, target.features, LatentBlock::salient).mu;
    const auto& labels = *target.class_labels;
    SeparationMetrics out;
    out.logistic_s_class = holdout_accuracy(sx, labels, seed);
    out.silhouette_s_class = silhouette(sx, labels);
    out.logistic_z_class = holdout_accuracy(zx, labels, seed);
    out.silhouette_z_class = silhouette(zx, labels);
    return out;
}

double sample_quality_mmd(const MmcVaeModel& model, const Matrix& real, Origin origin, std::size_t n_gen, Rng& rng,
                          const KernelConfig& kernel) {
    if (n_gen < 2) {
        throw ConfigError("sample_quality_mmd: n_gen must be at least 2");
    }
    const Matrix z = sample_std_normal(rng, n_gen, model.shape.background_dim);
    const Matrix s = origin == Origin::target ? sample_std_normal(rng, n_gen, model.shape.salient_dim)
                                              : tile_row(model.s_prime, n_gen);
    return mmd_biased(generate(model, z, s), real, kernel);
}

MetricSummary MetricSummary::from(std::vector<double> values) {
    MetricSummary out;
    out.per_seed = std::move(values);
    if (out.per_seed.empty()) {
        return out;
    }
    double acc = 0.0;
    for (double v : out.per_seed) {
        acc += v;
    }
    out.mean = acc / static_cast<double>(out.per_seed.size());
    if (out.per_seed.size() > 1) {
        double sq = 0.0;
        for (double v : out.per_seed) {
            sq += (v - out.mean) * (v - out.mean);
        }
        out.stddev = std::sqrt(sq / static_cast<double>(out.per_seed.size() - 1));
    }
    return out;
}

EvalReport evaluate_model(const MmcVaeModel& model, const LabeledDataset& target, const LabeledDataset& background,
                          const EvalOptions& options) {
    if (options.seeds.empty()) {
        throw ConfigError("evaluate_model: at least one evaluation seed is required");
    }
    EvalReport report;
    report.seeds = options.seeds;
    report.has_separation = target.has_labels();
    if (!report.has_separation) {
        report.notices.push_back("target dataset has no class labels; separation section skipped");
    }

    std::vector<double> lzo, szo, lss, sss, lsc, ssc, lzc, szc, mb, mt;
    for (std::uint64_t seed : options.seeds) {
        const AdherenceMetrics a = assumption_report(model, target, background, seed);
        lzo.push_back(a.logistic_z_origin);
        szo.push_back(a.silhouette_z_origin);
        lss.push_back(a.logistic_s_vs_sprime);
        sss.push_back(a.silhouette_s_vs_sprime);
        report.silhouette_s_degenerate = report.silhouette_s_degenerate || a.silhouette_s_degenerate;
        if (report.has_separation) {
            const SeparationMetrics s = separation_report(model, target, seed);
            lsc.push_back(s.logistic_s_class);
            ssc.push_back(s.silhouette_s_class);
            lzc.push_back(s.logistic_z_class);
            szc.push_back(s.silhouette_z_class);
        }
        Rng rng = Rng::derive(seed, 0x5a4d);
        mb.push_back(sample_quality_mmd(model, background.features, Origin::background, options.n_gen, rng,
                                        options.kernel));
        mt.push_back(sample_quality_mmd(model, target.features, Origin::target, options.n_gen, rng, options.kernel));
    }
    if (report.silhouette_s_degenerate) {
        report.notices.push_back("silhouette for s_b vs s' hit zero-distance points; those points scored 0");
    }
    report.logistic_z_origin = MetricSummary::from(lzo);
    report.silhouette_z_origin = MetricSummary::from(szo);
    report.logistic_s_vs_sprime = MetricSummary::from(lss);
    report.silhouette_s_vs_sprime = MetricSummary::from(sss);
    report.logistic_s_class = MetricSummary::from(lsc);
    report.silhouette_s_class = MetricSummary::from(ssc);
    report.logistic_z_class = MetricSummary::from(lzc);
    report.silhouette_z_class = MetricSummary::from(szc);
    report.mmd_background = MetricSummary::from(mb);
    report.mmd_target = MetricSummary::from(mt);
    return report;
}

namespace {

struct Row {
    const char* section;
    const char* name;
    const MetricSummary* metric;
};

std::vector<Row> report_rows(const EvalReport& r) {
    std::vector<Row> rows = {
        {"adherence", "logistic_z_origin", &r.logistic_z_origin},
        {"adherence", "silhouette_z_origin", &r.silhouette_z_origin},
        {"adherence", "logistic_s_vs_sprime", &r.logistic_s_vs_sprime},
        {"adherence", "silhouette_s_vs_sprime", &r.silhouette_s_vs_sprime},
    };
    if (r.has_separation) {
        rows.insert(rows.end(), {
                                    {"separation", "logistic_s_class", &r.logistic_s_class},
                                    {"separation", "silhouette_s_class", &r.silhouette_s_class},
                                    {"separation", "logistic_z_class", &r.logistic_z_class},
                                    {"separation", "silhouette_z_class", &r.silhouette_z_class},
                                });
    }
    rows.insert(rows.end(), {
                                {"sample_quality", "mmd_background", &r.mmd_background},
                                {"sample_quality", "mmd_target", &r.mmd_target},
                            });
    return rows;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["seeds"] = report.seeds;
    j["spread"] = "sample standard deviation over evaluation seeds";
    for (const Row& row : report_rows(report)) {
        j[row.section][row.name] = {
            {"mean", row.metric->mean}, {"std", row.metric->stddev}, {"per_seed", row.metric->per_seed}};
    }
    j["adherence"]["silhouette_s_vs_sprime_degenerate"] = report.silhouette_s_degenerate;
    j["notices"] = report.notices;
    return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "section,metric,mean,std";
    for (std::uint64_t seed : report.seeds) {
        out << ",seed_" << seed;
    }
    out << '\n';
    for (const Row& row : report_rows(report)) {
        out << row.section << ',' << row.name << ',' << format_double(row.metric->mean) << ','
            << format_double(row.metric->stddev);
        for (double v : row.metric->per_seed) {
            out << ',' << format_double(v);
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace mmcvae
