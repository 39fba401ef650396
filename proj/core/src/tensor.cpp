#include "mmcvae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace mmcvae {

namespace {

std::string shape_of(const Matrix& m) { return m.shape_string(); }

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols) {
        throw DimensionError("matrix data has " + std::to_string(values_.size()) + " entries, expected " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t n = rows.size();
    std::size_t k = n == 0 ? 0 : rows.begin()->size();
    std::vector<double> values;
    values.reserve(n * k);
    for (const auto& r : rows) {
        if (r.size() != k) {
            throw DimensionError("ragged initializer for Matrix");
        }
        values.insert(values.end(), r.begin(), r.end());
    }
    return Matrix(n, k, std::move(values));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = 1.0;
    }
    return out;
}

Matrix Matrix::row_vector(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Param::Param(std::string param_name, Matrix initial)
    : name(std::move(param_name)), value(std::move(initial)), grad(value.rows(), value.cols()) {}

void Param::zero_grad() { grad.fill(0.0); }

// ---------------------------------------------------------------------------
// Rng

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t state = seed;
    std::uint64_t a = splitmix64(state);
    state ^= stream * 0xd1b54a32d192ed03ULL;
    std::uint64_t b = splitmix64(state);
    return Rng(a ^ (b << 1));
}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    if (cached_normal_) {
        double v = *cached_normal_;
        cached_normal_.reset();
        return v;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    return radius * std::cos(angle);
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) {
        throw ConfigError("uniform_index requires n > 0");
    }
    const std::uint64_t bound = n;
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        std::uint64_t r = engine_();
        if (r >= threshold) {
            return static_cast<std::size_t>(r % bound);
        }
    }
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    shuffle(std::span<std::size_t>(order));
    return order;
}

// ---------------------------------------------------------------------------
// Linear algebra

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: cannot multiply " + shape_of(a) + " by " + shape_of(b));
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix out(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        double* dst = out.row(i).data();
        const double* arow = a.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b.row(p).data();
            for (std::size_t j = 0; j < m; ++j) {
                dst[j] += av * brow[j];
            }
        }
    }
    return out;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_at_b: cannot multiply transpose of " + shape_of(a) + " by " + shape_of(b));
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix out(k, m);
    // Summation over the shared row index runs in increasing order for each output cell.
    for (std::size_t r = 0; r < n; ++r) {
        const double* arow = a.row(r).data();
        const double* brow = b.row(r).data();
        for (std::size_t i = 0; i < k; ++i) {
            const double av = arow[i];
            double* dst = out.row(i).data();
            for (std::size_t j = 0; j < m; ++j) {
                dst[j] += av * brow[j];
            }
        }
    }
    return out;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_a_bt: cannot multiply " + shape_of(a) + " by transpose of " + shape_of(b));
    }
    return matmul(a, transpose(b));
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    Matrix out = a;
    out += b;
    return out;
}

Matrix& operator+=(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    auto dst = a.values();
    auto src = b.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
    return a;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "subtract");
    Matrix out = a;
    auto dst = out.values();
    auto src = b.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] -= src[i];
    }
    return out;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix out = a;
    for (double& v : out.values()) {
        v *= s;
    }
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out = a;
    auto dst = out.values();
    auto src = b.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] *= src[i];
    }
    return out;
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("hconcat: row mismatch " + shape_of(a) + " vs " + shape_of(b));
    }
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        std::copy(a.row(i).begin(), a.row(i).end(), dst.begin());
        std::copy(b.row(i).begin(), b.row(i).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
    }
    return out;
}

Matrix slice_cols(const Matrix& a, std::size_t first, std::size_t count) {
    if (first + count > a.cols()) {
        throw DimensionError("slice_cols: columns [" + std::to_string(first) + ", " + std::to_string(first + count) +
                             ") out of range for " + shape_of(a));
    }
    Matrix out(a.rows(), count);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto src = a.row(i).subspan(first, count);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Matrix select_rows(const Matrix& a, std::span<const std::size_t> indices) {
    Matrix out(indices.size(), a.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= a.rows()) {
            throw DimensionError("select_rows: index " + std::to_string(indices[i]) + " out of range for " +
                                 shape_of(a));
        }
        auto src = a.row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Matrix tile_row(std::span<const double> row, std::size_t count) {
    Matrix out(count, row.size());
    for (std::size_t i = 0; i < count; ++i) {
        std::copy(row.begin(), row.end(), out.row(i).begin());
    }
    return out;
}

Matrix vconcat(const Matrix& a, const Matrix& b) {
    if (a.empty()) {
        return b;
    }
    if (b.empty()) {
        return a;
    }
    if (a.cols() != b.cols()) {
        throw DimensionError("vconcat: column mismatch " + shape_of(a) + " vs " + shape_of(b));
    }
    std::vector<double> values(a.values().begin(), a.values().end());
    values.insert(values.end(), b.values().begin(), b.values().end());
    return Matrix(a.rows() + b.rows(), a.cols(), std::move(values));
}

std::vector<double> column_means(const Matrix& a) {
    std::vector<double> means(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            means[j] += a(i, j);
        }
    }
    if (a.rows() > 0) {
        for (double& m : means) {
            m /= static_cast<double>(a.rows());
        }
    }
    return means;
}

bool all_finite(const Matrix& a) {
    return std::all_of(a.values().begin(), a.values().end(), [](double v) { return std::isfinite(v); });
}

double frobenius_norm(const Matrix& a) {
    double acc = 0.0;
    for (double v : a.values()) {
        acc += v * v;
    }
    return std::sqrt(acc);
}

double sum(const Matrix& a) {
    double acc = 0.0;
    for (double v : a.values()) {
        acc += v;
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Layers

Matrix affine_forward(const Matrix& x, const Param& weight, const Param& bias, bool zero_bias) {
    if (x.cols() != weight.value.rows()) {
        throw DimensionError("affine_forward: input " + shape_of(x) + " does not match weight " +
                             shape_of(weight.value));
    }
    if (bias.value.rows() != 1 || bias.value.cols() != weight.value.cols()) {
        throw DimensionError("affine_forward: bias " + shape_of(bias.value) + " does not match weight " +
                             shape_of(weight.value));
    }
    Matrix out = matmul(x, weight.value);
    if (!zero_bias) {
        auto b = bias.value.row(0);
        for (std::size_t i = 0; i < out.rows(); ++i) {
            auto r = out.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) {
                r[j] += b[j];
            }
        }
    }
    return out;
}

Matrix affine_backward(const Matrix& upstream, const Matrix& input, Param& weight, Param& bias, bool zero_bias,
                       bool want_input_grad) {
    if (upstream.rows() != input.rows() || upstream.cols() != weight.value.cols() ||
        input.cols() != weight.value.rows()) {
        throw DimensionError("affine_backward: upstream " + shape_of(upstream) + ", input " + shape_of(input) +
                             ", weight " + shape_of(weight.value));
    }
    weight.grad += matmul_at_b(input, upstream);
    if (!zero_bias) {
        auto g = bias.grad.row(0);
        for (std::size_t i = 0; i < upstream.rows(); ++i) {
            auto u = upstream.row(i);
            for (std::size_t j = 0; j < u.size(); ++j) {
                g[j] += u[j];
            }
        }
    }
    if (!want_input_grad) {
        return Matrix();
    }
    return matmul_a_bt(upstream, weight.value);
}

Matrix relu_forward(const Matrix& x) {
    Matrix out = x;
    for (double& v : out.values()) {
        v = v > 0.0 ? v : 0.0;
    }
    return out;
}

Matrix relu_backward(const Matrix& upstream, const Matrix& input) {
    require_same_shape(upstream, input, "relu_backward");
    Matrix out = upstream;
    auto dst = out.values();
    auto in = input.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (!(in[i] > 0.0)) {
            dst[i] = 0.0;
        }
    }
    return out;
}

Matrix leaky_relu_forward(const Matrix& x, double negative_slope) {
    Matrix out = x;
    for (double& v : out.values()) {
        v = v > 0.0 ? v : negative_slope * v;
    }
    return out;
}

Matrix leaky_relu_backward(const Matrix& upstream, const Matrix& input, double negative_slope) {
    require_same_shape(upstream, input, "leaky_relu_backward");
    Matrix out = upstream;
    auto dst = out.values();
    auto in = input.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (!(in[i] > 0.0)) {
            dst[i] *= negative_slope;
        }
    }
    return out;
}

Matrix sample_std_normal(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix out(rows, cols);
    for (double& v : out.values()) {
        v = rng.normal();
    }
    return out;
}

std::vector<Matrix> numeric_gradient(const std::function<double()>& loss, std::span<Param* const> params,
                                     double h) {
    if (!(h > 0.0)) {
        throw ConfigError("numeric_gradient: step must be positive");
    }
    std::vector<Matrix> grads;
    grads.reserve(params.size());
    for (Param* p : params) {
        Matrix g(p->value.rows(), p->value.cols());
        auto values = p->value.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            values[i] = original + h;
            const double up = loss();
            values[i] = original - h;
            const double down = loss();
            values[i] = original;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericalError("numeric_gradient: non-finite loss while probing " + p->name + "[" +
                                     std::to_string(i) + "]");
            }
            g.values()[i] = (up - down) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

double relative_error(const Matrix& a, const Matrix& b, double floor) {
    const double denom = std::max({frobenius_norm(a), frobenius_norm(b), floor});
    return frobenius_norm(a - b) / denom;
}

}  // namespace mmcvae
