#include "otalign/numerics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "otalign/error.hpp"

namespace otalign {

namespace {

bool finite_all(const Vector& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, Vector data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ValidationError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                              std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    if (!finite_all(data_)) {
        throw ValidationError("matrix entries must be finite");
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::constant(std::size_t rows, std::size_t cols, double value) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = value;
    return m;
}

bool Matrix::all_finite() const { return finite_all(data_); }

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

SeededRng SeededRng::child(std::string_view label) const {
    std::uint64_t mix = seed_ ^ fnv1a64(label);
    // One extra scramble so nearby labels land far apart.
    std::uint64_t s = mix;
    return SeededRng(splitmix64(s));
}

std::uint64_t SeededRng::next_u64() { return splitmix64(state_); }

double SeededRng::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::next_gaussian(double mean, double sigma) {
    if (sigma == 0.0) {
        // Still consume two draws so a stream's position does not depend on sigma.
        next_u64();
        next_u64();
        return mean;
    }
    // Box-Muller; u1 in (0, 1] keeps the log finite.
    double u1 = 1.0 - next_unit();
    double u2 = next_unit();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + sigma * z;
}

Matrix pairwise_euclidean(const Matrix& a, const Matrix& b) {
    if (a.rows() == 0 || b.rows() == 0) {
        throw ValidationError("pairwise_euclidean: empty batch");
    }
    if (a.cols() != b.cols()) {
        throw ValidationError("pairwise_euclidean: dimension mismatch (" + std::to_string(a.cols()) + " vs " +
                              std::to_string(b.cols()) + ")");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            out(i, j) = l2_distance(a.row(i), b.row(j));
        }
    }
    return out;
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
    if (!(h > 0.0)) {
        throw ValidationError("finite_diff_grad: step must be positive");
    }
    Vector grad(x.size(), 0.0);
    Vector probe = x;
    for (std::size_t k = 0; k < x.size(); ++k) {
        double orig = probe[k];
        probe[k] = orig + h;
        double fp = f(probe);
        probe[k] = orig - h;
        double fm = f(probe);
        probe[k] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericalError("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(k));
        }
        grad[k] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

Vector gaussian_sample(SeededRng& rng, std::size_t dim, double mean, double sigma) {
    if (sigma < 0.0) {
        throw ValidationError("gaussian_sample: sigma must be >= 0");
    }
    Vector out(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        out[i] = rng.next_gaussian(mean, sigma);
    }
    return out;
}

double compensated_sum(std::span<const double> values) {
    double sum = 0.0;
    double comp = 0.0;
    for (double x : values) {
        double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    return sum + comp;
}

double compensated_mean(std::span<const double> values) {
    if (values.empty()) return 0.0;
    return compensated_sum(values) / static_cast<double>(values.size());
}

Vector softmax(std::span<const double> logits) {
    Vector out(logits.size(), 0.0);
    if (logits.empty()) return out;
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

Vector matvec(const Matrix& m, const Vector& x) {
    if (x.size() != m.cols()) {
        throw ValidationError("matvec: dimension mismatch");
    }
    Vector y(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        y[i] = dot(m.row(i), x);
    }
    return y;
}

Vector matvec_transposed(const Matrix& m, const Vector& x) {
    if (x.size() != m.rows()) {
        throw ValidationError("matvec_transposed: dimension mismatch");
    }
    Vector y(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        double xi = x[i];
        for (std::size_t j = 0; j < m.cols(); ++j) {
            y[j] += xi * r[j];
        }
    }
    return y;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ValidationError("matmul: dimension mismatch");
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            auto brow = b.row(k);
            auto crow = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    return c;
}

void add_outer(Matrix& acc, std::span<const double> u, std::span<const double> v, double scale) {
    if (acc.rows() != u.size() || acc.cols() != v.size()) {
        throw ValidationError("add_outer: dimension mismatch");
    }
    for (std::size_t i = 0; i < u.size(); ++i) {
        double s = scale * u[i];
        auto row = acc.row(i);
        for (std::size_t j = 0; j < v.size(); ++j) {
            row[j] += s * v[j];
        }
    }
}

void axpy(Vector& y, double alpha, const Vector& x) {
    if (y.size() != x.size()) {
        throw ValidationError("axpy: dimension mismatch");
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] += alpha * x[i];
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double l2_norm(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

} // namespace otalign
