#ifndef MMCVAE_TENSOR_HPP
#define MMCVAE_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmcvae/errors.hpp"

/**
 * @file tensor.hpp
 * @brief Dense row-major matrices, trainable parameters, a portable seeded
 * generator and the handful of differentiable layers the MLPs need.
 *
 * All reductions run sequentially over the inner index, so every result is
 * bitwise reproducible for identical inputs.
 */

namespace mmcvae {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);
    static Matrix row_vector(std::span<const double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    void fill(double value);
    std::string shape_string() const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

/// A trainable tensor with its accumulated gradient.
struct Param {
    Param() = default;
    Param(std::string param_name, Matrix initial);

    void zero_grad();

    std::string name;
    Matrix value;
    Matrix grad;
};

/**
 * Seedable generator whose draw sequence is identical on every platform.
 *
 * The engine is `std::mt19937_64`, whose output sequence is fixed by the
 * standard. Distributions are implemented here rather than taken from
 * `<random>`, since the standard leaves those implementation-defined.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Independent stream for a (seed, stream id) pair, mixed with splitmix64.
    static Rng derive(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Standard normal via Box–Muller; the second deviate of each pair is cached.
    double normal();
    /// Uniform integer on [0, n), unbiased.
    std::size_t uniform_index(std::size_t n);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 engine_;
    std::optional<double> cached_normal_;
};

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose of `a`.
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
/// a·bᵀ.
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix& operator+=(Matrix& a, const Matrix& b);

/// Concatenate column blocks: [a ‖ b].
Matrix hconcat(const Matrix& a, const Matrix& b);
/// Columns [first, first + count).
Matrix slice_cols(const Matrix& a, std::size_t first, std::size_t count);
Matrix select_rows(const Matrix& a, std::span<const std::size_t> indices);
/// Stack `count` copies of a 1×k row.
Matrix tile_row(std::span<const double> row, std::size_t count);
/// Stack a on top of b.
Matrix vconcat(const Matrix& a, const Matrix& b);
std::vector<double> column_means(const Matrix& a);

bool all_finite(const Matrix& a);
double frobenius_norm(const Matrix& a);
double sum(const Matrix& a);

/// y = x·W + b (row-broadcast). With `zero_bias` the stored bias is ignored.
Matrix affine_forward(const Matrix& x, const Param& weight, const Param& bias, bool zero_bias);

/**
 * Backward pass of `affine_forward`.
 *
 * Accumulates dL/dW and (unless `zero_bias`) dL/db into the params and
 * returns dL/dx, or an empty matrix when `want_input_grad` is false.
 */
Matrix affine_backward(const Matrix& upstream, const Matrix& input, Param& weight, Param& bias,
                       bool zero_bias, bool want_input_grad = true);

Matrix relu_forward(const Matrix& x);
/// Gradient is masked where the forward input was <= 0 (subgradient 0 at 0).
Matrix relu_backward(const Matrix& upstream, const Matrix& input);

Matrix leaky_relu_forward(const Matrix& x, double negative_slope);
Matrix leaky_relu_backward(const Matrix& upstream, const Matrix& input, double negative_slope);

Matrix sample_std_normal(Rng& rng, std::size_t rows, std::size_t cols);

/**
 * Central finite-difference gradient of `loss` with respect to every scalar
 * in `params`: (f(p+h) - f(p-h)) / 2h. Parameter values are restored after
 * each probe. Throws NumericalError if any probe evaluates to a non-finite loss.
 */
std::vector<Matrix> numeric_gradient(const std::function<double()>& loss,
                                     std::span<Param* const> params, double h = 1e-5);

/// ‖a − b‖ / max(‖a‖, ‖b‖, floor); the floor keeps all-zero gradients comparable.
double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-8);

}  // namespace mmcvae

#endif
