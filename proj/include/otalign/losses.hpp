#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "otalign/label_codec.hpp"
#include "otalign/numerics.hpp"

namespace otalign {

// A scalar objective together with gradients per named input group. Gradient
// matrices share the shape of what they differentiate (vectors are 1 x dim).
struct LossValue {
    double value = 0.0;
    std::map<std::string, Matrix, std::less<>> gradients;
};

// Anchors and their noise positives, row-aligned; negatives for anchor i are
// the other anchor rows.
struct ContrastiveBatch {
    Matrix anchors;
    Matrix positives;
};

enum class Similarity {
    NegEuclidean, // -||x - y||, the default
    Cosine,
};

struct InfonceOptions {
    double tau = 0.5;
    Similarity sim = Similarity::NegEuclidean;
    bool normalize = false; // L2-normalize embeddings before the similarity
};

// Anchor plus i.i.d. Gaussian noise per coordinate.
Vector make_positive(const Vector& anchor, double sigma, SeededRng& rng);

// Mean InfoNCE over anchors with in-batch negatives. Gradient groups:
// "anchors", "positives".
LossValue infonce_ircp(const ContrastiveBatch& batch, const InfonceOptions& options);

// Mean over samples of (1 - exp(-l))^gamma * l with l the 56-entry cross
// entropy. Gradient groups: "preds" (w.r.t. probabilities) and "logits"
// (valid when preds are per-group softmax outputs). Probabilities below
// 1e-12 at a hot label are floored; see probability_floor_hits().
LossValue focal_loss(std::span<const LabelVector> preds, std::span<const LabelVector> truths, double gamma);

// Negative log-likelihood of the target tokens under per-step distributions
// (rows of step_distributions). Rows beyond the target length are ignored.
// Gradient group: "probs".
LossValue report_nll(const Matrix& step_distributions, std::span<const int> targets);

// l_rg + lambda * d_ot.
double total_loss(double l_rg, double d_ot, double lambda);

// Count of probability values clamped to the 1e-12 floor since the last
// reset (per thread).
std::size_t probability_floor_hits();
void reset_probability_floor_hits();

} // namespace otalign
