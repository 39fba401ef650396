#ifndef MMCVAE_TESTS_ORACLES_HPP
#define MMCVAE_TESTS_ORACLES_HPP

// Independent brute-force reference implementations used by the tests.
// None of these call into the library's numerical routines.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mmcvae/tensor.hpp"

namespace oracle {

using mmcvae::Matrix;

inline Matrix random_matrix(mmcvae::Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            m(i, j) = scale * (2.0 * rng.uniform() - 1.0);
        }
    }
    return m;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += a(i, k) * b(k, j);
            }
            out(i, j) = acc;
        }
    }
    return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)));
        }
    }
    return worst;
}

inline double sq_dist(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) {
        const double d = a(i, k) - b(j, k);
        acc += d * d;
    }
    return acc;
}

/// Three-term V-statistic with one explicit bandwidth, written as plain double loops.
inline double mmd(const Matrix& x, const Matrix& y, double gamma) {
    const double n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
    double kxx = 0.0, kxy = 0.0, kyy = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.rows(); ++j) {
            kxx += std::exp(-gamma * sq_dist(x, i, x, j));
        }
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < y.rows(); ++j) {
            kxy += std::exp(-gamma * sq_dist(x, i, y, j));
        }
    }
    for (std::size_t i = 0; i < y.rows(); ++i) {
        for (std::size_t j = 0; j < y.rows(); ++j) {
            kyy += std::exp(-gamma * sq_dist(y, i, y, j));
        }
    }
    return kxx / (n * n) - 2.0 * kxy / (n * m) + kyy / (m * m);
}

/// Median of all pairwise squared distances in the stacked set, as a sorted-list lookup.
inline double median_gamma(const Matrix& pooled) {
    std::vector<double> d;
    for (std::size_t i = 0; i < pooled.rows(); ++i) {
        for (std::size_t j = i + 1; j < pooled.rows(); ++j) {
            d.push_back(sq_dist(pooled, i, pooled, j));
        }
    }
    std::sort(d.begin(), d.end());
    const std::size_t k = d.size();
    const double med = k % 2 == 1 ? d[k / 2] : 0.5 * (d[k / 2 - 1] + d[k / 2]);
    return med > 0.0 ? 1.0 / (2.0 * med) : 1.0;
}

/// Silhouette straight from the definition, one point at a time.
inline double silhouette(const Matrix& points, const std::vector<int>& labels) {
    const std::size_t n = points.rows();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::map<int, std::pair<double, std::size_t>> by_label;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) {
                continue;
            }
            auto& entry = by_label[labels[j]];
            entry.first += std::sqrt(sq_dist(points, i, points, j));
            entry.second += 1;
        }
        auto own = by_label.find(labels[i]);
        if (own == by_label.end()) {
            continue;  // singleton cluster
        }
        const double a = own->second.first / static_cast<double>(own->second.second);
        double b = 1e300;
        for (const auto& [label, entry] : by_label) {
            if (label != labels[i]) {
                b = std::min(b, entry.first / static_cast<double>(entry.second));
            }
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, sorted descending.
inline std::vector<double> jacobi_eigenvalues(Matrix a) {
    const std::size_t n = a.rows();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                off += a(p, q) * a(p, q);
            }
        }
        if (off < 1e-30) {
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        values[i] = a(i, i);
    }
    std::sort(values.rbegin(), values.rend());
    return values;
}

/// Sample covariance with the n − 1 denominator.
inline Matrix covariance(const Matrix& x) {
    const std::size_t n = x.rows(), k = x.cols();
    std::vector<double> mean(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            mean[j] += x(i, j) / static_cast<double>(n);
        }
    }
    Matrix cov(k, k);
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
            }
            cov(a, b) = acc / static_cast<double>(n - 1);
        }
    }
    return cov;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("mmcvae_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace oracle

#endif
