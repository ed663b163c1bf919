#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "otalign/error.hpp"
#include "otalign/losses.hpp"

using namespace otalign;
using otalign::testutil::compare_gradients;

namespace {

Matrix random_rows(SeededRng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = scale * (2.0 * rng.next_unit() - 1.0);
    return m;
}

// Independent scalar reimplementation of mean InfoNCE with in-batch
// negatives, working purely from a similarity matrix.
double infonce_oracle(const Matrix& anchors, const Matrix& positives, double tau, Similarity kind) {
    auto sim = [&](std::span<const double> x, std::span<const double> y) {
        if (kind == Similarity::NegEuclidean) return -l2_distance(x, y);
        return dot(x, y) / (l2_norm(x) * l2_norm(y));
    };
    double total = 0.0;
    const std::size_t b = anchors.rows();
    for (std::size_t i = 0; i < b; ++i) {
        double num = std::exp(sim(anchors.row(i), positives.row(i)) / tau);
        double den = num;
        for (std::size_t k = 0; k < b; ++k) {
            if (k == i) continue;
            den += std::exp(sim(anchors.row(i), anchors.row(k)) / tau);
        }
        total += -std::log(num / den);
    }
    return total / static_cast<double>(b);
}

// Per-group softmax over a flat 56-entry logit vector.
LabelVector group_softmax(const Vector& logits) {
    LabelVector out{};
    for (std::size_t g = 0; g < kNumDiseases; ++g) {
        Vector p = softmax({logits.data() + 4 * g, 4});
        for (std::size_t k = 0; k < 4; ++k) out[4 * g + k] = p[k];
    }
    return out;
}

LabelVector random_prediction(SeededRng& rng) {
    Vector logits(kLabelVectorSize);
    for (double& x : logits) x = 2.0 * rng.next_unit() - 1.0;
    return group_softmax(logits);
}

LabelVector random_onehot(SeededRng& rng) {
    DiseaseLabelSet s;
    for (auto& st : s.states) st = static_cast<DiseaseState>(rng.next_u64() % 4);
    return encode_onehot(s);
}

} // namespace

TEST_CASE("make_positive") {
    SeededRng rng(3);
    Vector anchor = {1.0, -2.0, 0.5};
    CHECK(make_positive(anchor, 0.0, rng) == anchor);

    SeededRng r1(8), r2(8);
    CHECK(make_positive(anchor, 0.1, r1) == make_positive(anchor, 0.1, r2));

    SeededRng r3(15);
    Vector big(10000, 0.0);
    Vector pos = make_positive(big, 0.1, r3);
    double mean = 0.0;
    for (double x : pos) mean += x;
    mean /= static_cast<double>(pos.size());
    double var = 0.0;
    for (double x : pos) var += (x - mean) * (x - mean);
    double sd = std::sqrt(var / static_cast<double>(pos.size() - 1));
    CHECK(sd >= 0.097);
    CHECK(sd <= 0.103);

    CHECK_THROWS_AS(make_positive(anchor, -0.1, rng), ValidationError);
}

TEST_CASE("infonce degenerate values") {
    // One anchor, no negatives: the ratio is 1.
    ContrastiveBatch solo{Matrix(1, 2, {0.3, -0.4}), Matrix(1, 2, {0.5, 0.1})};
    CHECK(infonce_ircp(solo, {}).value == doctest::Approx(0.0).epsilon(1e-15));

    // Two symmetric anchors where each positive is as similar as the single
    // negative: every anchor contributes exactly log 2.
    ContrastiveBatch pair{Matrix(2, 1, {0.0, 1.0}), Matrix(2, 1, {1.0, 0.0})};
    CHECK(infonce_ircp(pair, {}).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(infonce_ircp(pair, {.tau = 0.0}), ValidationError);
    ContrastiveBatch bad{Matrix(2, 1), Matrix(1, 1)};
    CHECK_THROWS_AS(infonce_ircp(bad, {}), ValidationError);
}

TEST_CASE("infonce matches the scalar oracle") {
    SeededRng rng(101);
    for (Similarity kind : {Similarity::NegEuclidean, Similarity::Cosine}) {
        for (int t = 0; t < 5; ++t) {
            ContrastiveBatch batch{random_rows(rng, 3, 4), random_rows(rng, 3, 4)};
            InfonceOptions opt;
            opt.tau = 0.5;
            opt.sim = kind;
            double oracle = infonce_oracle(batch.anchors, batch.positives, opt.tau, kind);
            CHECK(infonce_ircp(batch, opt).value == doctest::Approx(oracle).epsilon(1e-12));
        }
    }
}

TEST_CASE("infonce is nonnegative") {
    SeededRng rng(102);
    for (int t = 0; t < 20; ++t) {
        ContrastiveBatch batch{random_rows(rng, 5, 3, 2.0), random_rows(rng, 5, 3, 2.0)};
        CHECK(infonce_ircp(batch, {}).value >= -1e-12);
    }
}

TEST_CASE("infonce analytic gradients pass finite differences") {
    for (Similarity kind : {Similarity::NegEuclidean, Similarity::Cosine}) {
        for (bool normalize : {false, true}) {
            for (std::uint64_t seed = 1; seed <= 20; ++seed) {
                SeededRng rng(seed * 7 + (kind == Similarity::Cosine ? 1000 : 0) + (normalize ? 41 : 0));
                const std::size_t b = 4, d = 3;
                ContrastiveBatch batch{random_rows(rng, b, d), random_rows(rng, b, d)};
                InfonceOptions opt;
                opt.tau = 0.5;
                opt.sim = kind;
                opt.normalize = normalize;

                LossValue loss = infonce_ircp(batch, opt);
                const Matrix& ga = loss.gradients.at("anchors");
                const Matrix& gp = loss.gradients.at("positives");
                Vector analytic;
                analytic.insert(analytic.end(), ga.data().begin(), ga.data().end());
                analytic.insert(analytic.end(), gp.data().begin(), gp.data().end());

                Vector flat;
                flat.insert(flat.end(), batch.anchors.data().begin(), batch.anchors.data().end());
                flat.insert(flat.end(), batch.positives.data().begin(), batch.positives.data().end());
                auto f = [&](const Vector& x) {
                    ContrastiveBatch probe{Matrix(b, d, Vector(x.begin(), x.begin() + b * d)),
                                           Matrix(b, d, Vector(x.begin() + b * d, x.end()))};
                    return infonce_ircp(probe, opt).value;
                };
                auto cmp = compare_gradients(analytic, finite_diff_grad(f, flat, 1e-6));
                CHECK_MESSAGE(cmp.ok, "seed ", seed, " worst rel ", cmp.worst_rel);
            }
        }
    }
}

TEST_CASE("focal loss hand value and degeneracies") {
    // One imperfect group: l = -log 0.7, outer factor (1 - 0.7)^2.
    std::vector<LabelVector> truths(1), preds(1);
    DiseaseLabelSet t;
    t.states[0] = DiseaseState::Positive;
    truths[0] = encode_onehot(t);
    preds[0] = truths[0];
    preds[0][0] = 0.1;
    preds[0][1] = 0.7;
    preds[0][2] = 0.1;
    preds[0][3] = 0.1;

    double ell = -std::log(0.7);
    double expected = std::pow(0.3, 2.0) * ell;
    CHECK(focal_loss(preds, truths, 2.0).value == doctest::Approx(expected).epsilon(1e-12));
    CHECK(focal_loss(preds, truths, 2.0).value == doctest::Approx(0.0321007).epsilon(1e-5));

    // Perfect prediction: zero loss for any gamma.
    std::vector<LabelVector> perfect = {truths[0]};
    CHECK(focal_loss(perfect, truths, 2.0).value == 0.0);
    CHECK(focal_loss(perfect, truths, 0.0).value == 0.0);

    CHECK_THROWS_AS(focal_loss(preds, truths, -1.0), ValidationError);
}

TEST_CASE("focal loss with gamma 0 equals mean cross entropy") {
    SeededRng rng(301);
    for (int t = 0; t < 20; ++t) {
        std::size_t n = 1 + rng.next_u64() % 6;
        std::vector<LabelVector> preds, truths;
        for (std::size_t i = 0; i < n; ++i) {
            preds.push_back(random_prediction(rng));
            truths.push_back(random_onehot(rng));
        }
        double ce = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < kLabelVectorSize; ++j) {
                if (truths[i][j] != 0.0) ce -= truths[i][j] * std::log(preds[i][j]);
            }
        }
        ce /= static_cast<double>(n);
        CHECK(std::abs(focal_loss(preds, truths, 0.0).value - ce) <= 1e-12);
    }
}

TEST_CASE("focal loss is non-increasing in the true-class probability") {
    std::vector<LabelVector> truths(1);
    DiseaseLabelSet t;
    t.states[2] = DiseaseState::Negative;
    truths[0] = encode_onehot(t);
    double prev = std::numeric_limits<double>::infinity();
    for (double q = 0.05; q <= 0.95; q += 0.05) {
        std::vector<LabelVector> preds(1);
        preds[0] = truths[0];
        std::size_t g = 2;
        for (std::size_t k = 0; k < 4; ++k) preds[0][4 * g + k] = (1.0 - q) / 3.0;
        preds[0][4 * g + 2] = q;
        double v = focal_loss(preds, truths, 2.0).value;
        CHECK(v <= prev + 1e-12);
        prev = v;
    }
}

TEST_CASE("focal loss logit gradients pass finite differences") {
    for (double gamma : {0.0, 1.0, 2.0}) {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            SeededRng rng(seed * 13 + static_cast<std::uint64_t>(gamma * 100));
            std::size_t n = 2;
            std::vector<LabelVector> truths;
            Vector logits(n * kLabelVectorSize);
            for (double& x : logits) x = 2.0 * rng.next_unit() - 1.0;
            for (std::size_t i = 0; i < n; ++i) truths.push_back(random_onehot(rng));

            auto eval = [&](const Vector& z) {
                std::vector<LabelVector> preds;
                for (std::size_t i = 0; i < n; ++i) {
                    preds.push_back(group_softmax(Vector(z.begin() + i * kLabelVectorSize,
                                                         z.begin() + (i + 1) * kLabelVectorSize)));
                }
                return focal_loss(preds, truths, gamma).value;
            };

            std::vector<LabelVector> preds;
            for (std::size_t i = 0; i < n; ++i) {
                preds.push_back(
                    group_softmax(Vector(logits.begin() + i * kLabelVectorSize,
                                         logits.begin() + (i + 1) * kLabelVectorSize)));
            }
            LossValue loss = focal_loss(preds, truths, gamma);
            const Matrix& gl = loss.gradients.at("logits");
            Vector analytic(gl.data());

            auto cmp = compare_gradients(analytic, finite_diff_grad(eval, logits, 1e-6));
            CHECK_MESSAGE(cmp.ok, "gamma ", gamma, " seed ", seed, " worst rel ", cmp.worst_rel);
        }
    }
}

TEST_CASE("probability floor clamps are counted") {
    reset_probability_floor_hits();
    std::vector<LabelVector> truths(1), preds(1);
    DiseaseLabelSet t;
    t.states[0] = DiseaseState::Positive;
    truths[0] = encode_onehot(t);
    preds[0] = truths[0];
    preds[0][1] = 0.0; // hot label with zero probability
    preds[0][0] = 1.0;
    double v = focal_loss(preds, truths, 2.0).value;
    CHECK(std::isfinite(v));
    CHECK(probability_floor_hits() == 1);
    reset_probability_floor_hits();
}

TEST_CASE("report_nll values") {
    Matrix uniform = Matrix::constant(3, 4, 0.25);
    std::vector<int> targets = {0, 3, 1};
    CHECK(report_nll(uniform, targets).value == doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-12));

    Matrix sure(2, 3);
    sure(0, 1) = 1.0;
    sure(1, 2) = 1.0;
    std::vector<int> t2 = {1, 2};
    CHECK(report_nll(sure, t2).value == 0.0);

    Matrix hand(2, 4);
    hand(0, 0) = 0.5;
    hand(0, 1) = 0.5;
    hand(1, 0) = 0.25;
    hand(1, 1) = 0.75;
    std::vector<int> t3 = {0, 0};
    CHECK(report_nll(hand, t3).value == doctest::Approx(std::log(2.0) + std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("report_nll ignores padding and rejects out-of-vocabulary targets") {
    Matrix dists = Matrix::constant(5, 4, 0.25);
    std::vector<int> targets = {0, 1};
    Matrix trimmed = Matrix::constant(2, 4, 0.25);
    CHECK(report_nll(dists, targets).value == report_nll(trimmed, targets).value);

    std::vector<int> bad = {0, 7};
    CHECK_THROWS_AS(report_nll(dists, bad), ValidationError);
    std::vector<int> neg = {-1};
    CHECK_THROWS_AS(report_nll(dists, neg), ValidationError);
    CHECK_THROWS_AS(report_nll(dists, std::vector<int>{}), ValidationError);
}

TEST_CASE("total_loss") {
    CHECK(total_loss(2.0, 3.0, 0.0) == 2.0);
    CHECK(total_loss(2.0, 3.0, 1.0) == 5.0);
    double a = 1.7, b = -0.4, l1 = 0.3, l2 = 2.1;
    CHECK(total_loss(a, b, l1) + total_loss(a, b, l2) == doctest::Approx(2.0 * a + (l1 + l2) * b).epsilon(1e-15));
    CHECK_THROWS_AS(total_loss(1.0, 1.0, -0.5), ValidationError);
}
