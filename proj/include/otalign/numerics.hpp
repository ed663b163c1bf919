#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace otalign {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Entries are validated finite when the
// matrix is constructed from external data; in-place computation is the
// caller's responsibility.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, Vector data);
    static Matrix identity(std::size_t n);
    static Matrix constant(std::size_t rows, std::size_t cols, double value);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    Vector& data() { return data_; }
    const Vector& data() const { return data_; }

    bool all_finite() const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

// Splittable deterministic generator. The draw sequence is a pure function of
// the seed; child streams are derived from the original seed and a label, so
// they do not depend on how many draws the parent has made.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }
    SeededRng child(std::string_view label) const;

    std::uint64_t next_u64();
    // Uniform in [0, 1).
    double next_unit();
    double next_gaussian(double mean, double sigma);

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

// L2 distance between every row of a and every row of b. Throws
// ValidationError on empty input or column mismatch.
Matrix pairwise_euclidean(const Matrix& a, const Matrix& b);

// Central-difference gradient estimate of f at x with step h. Throws
// NumericalError (naming the coordinate) if f evaluates non-finite.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x, double h);

// dim i.i.d. draws from N(mean, sigma^2); sigma == 0 yields the constant
// mean vector.
Vector gaussian_sample(SeededRng& rng, std::size_t dim, double mean, double sigma);

// Compensated (Neumaier) summation; the result does not depend on how the
// caller would have chunked the input.
double compensated_sum(std::span<const double> values);
double compensated_mean(std::span<const double> values);

// Numerically shifted softmax.
Vector softmax(std::span<const double> logits);

// Small dense helpers used across the library.
Vector matvec(const Matrix& m, const Vector& x);
Vector matvec_transposed(const Matrix& m, const Vector& x);
Matrix matmul(const Matrix& a, const Matrix& b);
void add_outer(Matrix& acc, std::span<const double> u, std::span<const double> v, double scale);
void axpy(Vector& y, double alpha, const Vector& x);
double dot(std::span<const double> a, std::span<const double> b);
double l2_distance(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

} // namespace otalign
