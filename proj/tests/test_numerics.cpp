#include <doctest.h>

#include <cmath>

#include "otalign/error.hpp"
#include "otalign/numerics.hpp"

using namespace otalign;

namespace {

// Scalar-loop oracle for one pairwise distance, kept independent of
// pairwise_euclidean's implementation.
double slow_distance(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) {
        double d = a(i, k) - b(j, k);
        s += d * d;
    }
    return std::sqrt(s);
}

Matrix random_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = scale * (2.0 * rng.next_unit() - 1.0);
    return m;
}

} // namespace

TEST_CASE("pairwise_euclidean hand values") {
    Matrix a(1, 2, {0.0, 0.0});
    Matrix b(1, 2, {3.0, 4.0});
    CHECK(pairwise_euclidean(a, b)(0, 0) == doctest::Approx(5.0).epsilon(1e-15));

    Matrix c(1, 2, {1.0, 2.0});
    CHECK(pairwise_euclidean(c, c)(0, 0) == 0.0);

    Matrix d(2, 2, {0.0, 0.0, 1.0, 0.0});
    Matrix e(1, 2, {0.0, 1.0});
    Matrix out = pairwise_euclidean(d, e);
    CHECK(out(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(out(1, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("pairwise_euclidean matches the scalar oracle") {
    SeededRng rng(11);
    Matrix a = random_matrix(rng, 7, 5);
    Matrix b = random_matrix(rng, 4, 5);
    Matrix out = pairwise_euclidean(a, b);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            CHECK(out(i, j) == doctest::Approx(slow_distance(a, i, b, j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("pairwise_euclidean self-distance is exactly symmetric with zero diagonal") {
    SeededRng rng(12);
    Matrix a = random_matrix(rng, 9, 6, 3.0);
    Matrix out = pairwise_euclidean(a, a);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        CHECK(out(i, i) == 0.0);
        for (std::size_t j = 0; j < a.rows(); ++j) {
            CHECK(out(i, j) == out(j, i)); // bitwise
        }
    }
}

TEST_CASE("pairwise_euclidean satisfies the triangle inequality on sampled triples") {
    SeededRng rng(13);
    Matrix a = random_matrix(rng, 12, 4, 5.0);
    Matrix d = pairwise_euclidean(a, a);
    for (int t = 0; t < 200; ++t) {
        std::size_t i = rng.next_u64() % a.rows();
        std::size_t j = rng.next_u64() % a.rows();
        std::size_t k = rng.next_u64() % a.rows();
        CHECK(d(i, j) <= d(i, k) + d(k, j) + 1e-12);
    }
}

TEST_CASE("pairwise_euclidean rejects bad input") {
    Matrix a(1, 2, {0.0, 0.0});
    Matrix b(1, 3, {0.0, 0.0, 0.0});
    CHECK_THROWS_AS(pairwise_euclidean(a, b), ValidationError);
    Matrix empty;
    CHECK_THROWS_AS(pairwise_euclidean(empty, a), ValidationError);
}

TEST_CASE("finite_diff_grad on a quadratic") {
    auto sum_sq = [](const Vector& x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return s;
    };
    Vector g = finite_diff_grad(sum_sq, {1.0, 2.0}, 1e-5);
    CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-8));

    auto constant = [](const Vector&) { return 7.5; };
    Vector gz = finite_diff_grad(constant, {0.3, -2.0, 5.0}, 1e-5);
    for (double v : gz) CHECK(v == 0.0);
}

TEST_CASE("finite_diff_grad matches analytic derivative of random degree-2 polynomials") {
    SeededRng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        std::size_t dim = 3;
        Vector lin = gaussian_sample(rng, dim, 0.0, 1.0);
        Vector quad = gaussian_sample(rng, dim, 0.0, 1.0);
        auto poly = [&](const Vector& x) {
            double s = 0.0;
            for (std::size_t i = 0; i < dim; ++i) s += lin[i] * x[i] + quad[i] * x[i] * x[i];
            return s;
        };
        Vector x = gaussian_sample(rng, dim, 0.0, 2.0);
        Vector g = finite_diff_grad(poly, x, 1e-5);
        for (std::size_t i = 0; i < dim; ++i) {
            double exact = lin[i] + 2.0 * quad[i] * x[i];
            CHECK(g[i] == doctest::Approx(exact).epsilon(1e-7));
        }
    }
}

TEST_CASE("finite_diff_grad reports non-finite evaluations with the coordinate") {
    auto bad = [](const Vector& x) { return x[1] > 0.5 ? std::numeric_limits<double>::infinity() : 0.0; };
    try {
        finite_diff_grad(bad, {0.0, 0.5}, 1e-1);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("coordinate 1") != std::string::npos);
    }
    CHECK_THROWS_AS(finite_diff_grad([](const Vector&) { return 0.0; }, {1.0}, 0.0), ValidationError);
}

TEST_CASE("gaussian_sample basics") {
    SeededRng rng(5);
    Vector z = gaussian_sample(rng, 3, 0.0, 0.0);
    CHECK(z == Vector{0.0, 0.0, 0.0});

    SeededRng r1(99), r2(99);
    CHECK(gaussian_sample(r1, 16, 0.5, 0.2) == gaussian_sample(r2, 16, 0.5, 0.2));

    CHECK_THROWS_AS(gaussian_sample(rng, 3, 0.0, -1.0), ValidationError);
}

TEST_CASE("gaussian_sample standard deviation statistics") {
    SeededRng rng(31);
    Vector v = gaussian_sample(rng, 10000, 0.0, 0.1);
    double mean = compensated_mean(v);
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size() - 1);
    double sd = std::sqrt(var);
    CHECK(sd >= 0.097);
    CHECK(sd <= 0.103);
}

TEST_CASE("seeded rng streams reproduce and children ignore parent draw position") {
    SeededRng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    SeededRng p1(7);
    SeededRng c1 = p1.child("stream");
    SeededRng p2(7);
    p2.next_u64();
    p2.next_u64();
    SeededRng c2 = p2.child("stream");
    for (int i = 0; i < 20; ++i) CHECK(c1.next_u64() == c2.next_u64());

    // Different labels diverge.
    SeededRng c3 = p1.child("other");
    CHECK(c3.next_u64() != p1.child("stream").next_u64());
}

TEST_CASE("compensated_sum handles cancellation-prone input") {
    Vector v = {1e16, 1.0, -1e16};
    CHECK(compensated_sum(v) == 1.0);
    CHECK(compensated_mean(Vector{}) == 0.0);
}

TEST_CASE("softmax normalizes and is uniform on equal logits") {
    Vector p = softmax(Vector{0.0, 0.0, 0.0, 0.0});
    for (double x : p) CHECK(x == doctest::Approx(0.25).epsilon(1e-15));
    Vector q = softmax(Vector{100.0, 0.0, -100.0});
    double sum = q[0] + q[1] + q[2];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q[0] > q[1]);
    CHECK(q[1] > q[2]);
}

TEST_CASE("matrix construction validates shape and finiteness") {
    CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), ValidationError);
    CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}), ValidationError);
    Matrix id = Matrix::identity(3);
    CHECK(id(0, 0) == 1.0);
    CHECK(id(0, 1) == 0.0);
}
