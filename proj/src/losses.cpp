#include "otalign/losses.hpp"

#include <cmath>
#include <string>

#include "otalign/error.hpp"

namespace otalign {

namespace {

constexpr double kProbFloor = 1e-12;

thread_local std::size_t g_floor_hits = 0;

double floored_log(double p) {
    if (p < kProbFloor) {
        ++g_floor_hits;
        p = kProbFloor;
    }
    return std::log(p);
}

// Similarity value plus partials w.r.t. both arguments.
struct SimGrad {
    double value = 0.0;
    Vector dx, dy;
};

SimGrad similarity(std::span<const double> x, std::span<const double> y, Similarity kind) {
    SimGrad out;
    out.dx.assign(x.size(), 0.0);
    out.dy.assign(y.size(), 0.0);
    if (kind == Similarity::NegEuclidean) {
        double d = l2_distance(x, y);
        out.value = -d;
        if (d > 1e-300) { // subgradient 0 at coincident points
            for (std::size_t k = 0; k < x.size(); ++k) {
                double diff = (x[k] - y[k]) / d;
                out.dx[k] = -diff;
                out.dy[k] = diff;
            }
        }
        return out;
    }
    double nx = l2_norm(x);
    double ny = l2_norm(y);
    if (nx < 1e-300 || ny < 1e-300) {
        out.value = 0.0; // cosine undefined at the origin; treat as orthogonal
        return out;
    }
    double d = dot(x, y);
    double c = d / (nx * ny);
    out.value = c;
    for (std::size_t k = 0; k < x.size(); ++k) {
        out.dx[k] = y[k] / (nx * ny) - c * x[k] / (nx * nx);
        out.dy[k] = x[k] / (nx * ny) - c * y[k] / (ny * ny);
    }
    return out;
}

// Rows L2-normalized, with the Jacobian applied on the way back.
Matrix normalize_rows(const Matrix& m) {
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double n = l2_norm(m.row(i));
        if (n > 1e-300) {
            for (double& x : out.row(i)) x /= n;
        }
    }
    return out;
}

void normalize_backward_row(std::span<const double> raw, std::span<const double> grad_unit, std::span<double> grad_raw) {
    double n = l2_norm(raw);
    if (n <= 1e-300) return;
    double inv = 1.0 / n;
    double proj = 0.0;
    for (std::size_t k = 0; k < raw.size(); ++k) proj += grad_unit[k] * raw[k] * inv;
    for (std::size_t k = 0; k < raw.size(); ++k) {
        grad_raw[k] += inv * (grad_unit[k] - proj * raw[k] * inv);
    }
}

// d/dl of (1 - e^{-l})^gamma * l.
double focal_outer_derivative(double ell, double gamma) {
    if (gamma == 0.0) return 1.0;
    if (ell <= 0.0) return 0.0;
    double e = std::exp(-ell);
    double base = 1.0 - e;
    return gamma * std::pow(base, gamma - 1.0) * e * ell + std::pow(base, gamma);
}

} // namespace

Vector make_positive(const Vector& anchor, double sigma, SeededRng& rng) {
    if (sigma < 0.0) throw ValidationError("make_positive: sigma must be >= 0");
    Vector out = anchor;
    for (double& x : out) x += rng.next_gaussian(0.0, sigma);
    return out;
}

LossValue infonce_ircp(const ContrastiveBatch& batch, const InfonceOptions& options) {
    if (!(options.tau > 0.0)) throw ValidationError("infonce_ircp: tau must be > 0");
    if (batch.anchors.rows() == 0) throw ValidationError("infonce_ircp: empty batch");
    if (batch.anchors.rows() != batch.positives.rows() || batch.anchors.cols() != batch.positives.cols()) {
        throw ValidationError("infonce_ircp: anchors/positives shape mismatch");
    }

    const std::size_t b = batch.anchors.rows();
    const std::size_t d = batch.anchors.cols();
    const double tau = options.tau;

    Matrix a_eff = options.normalize ? normalize_rows(batch.anchors) : batch.anchors;
    Matrix p_eff = options.normalize ? normalize_rows(batch.positives) : batch.positives;

    Matrix grad_a_eff(b, d);
    Matrix grad_p_eff(b, d);
    Vector per_anchor(b, 0.0);

    for (std::size_t i = 0; i < b; ++i) {
        SimGrad pos = similarity(a_eff.row(i), p_eff.row(i), options.sim);
        std::vector<SimGrad> negs;
        negs.reserve(b - 1);
        std::vector<std::size_t> neg_idx;
        double max_score = pos.value / tau;
        for (std::size_t k = 0; k < b; ++k) {
            if (k == i) continue;
            negs.push_back(similarity(a_eff.row(i), a_eff.row(k), options.sim));
            neg_idx.push_back(k);
            max_score = std::max(max_score, negs.back().value / tau);
        }

        double exp_pos = std::exp(pos.value / tau - max_score);
        double z = exp_pos;
        for (const auto& n : negs) z += std::exp(n.value / tau - max_score);
        per_anchor[i] = -(pos.value / tau - max_score - std::log(z));

        double w_pos = exp_pos / z;
        double coeff_pos = (w_pos - 1.0) / tau; // dL_i / ds(a_i, p_i)
        for (std::size_t c = 0; c < d; ++c) {
            grad_a_eff(i, c) += coeff_pos * pos.dx[c];
            grad_p_eff(i, c) += coeff_pos * pos.dy[c];
        }
        for (std::size_t t = 0; t < negs.size(); ++t) {
            double w = std::exp(negs[t].value / tau - max_score) / z;
            double coeff = w / tau;
            std::size_t k = neg_idx[t];
            for (std::size_t c = 0; c < d; ++c) {
                grad_a_eff(i, c) += coeff * negs[t].dx[c];
                grad_a_eff(k, c) += coeff * negs[t].dy[c];
            }
        }
    }

    LossValue out;
    out.value = compensated_mean(per_anchor);
    double inv_b = 1.0 / static_cast<double>(b);
    for (double& g : grad_a_eff.data()) g *= inv_b;
    for (double& g : grad_p_eff.data()) g *= inv_b;

    if (options.normalize) {
        Matrix grad_a(b, d), grad_p(b, d);
        for (std::size_t i = 0; i < b; ++i) {
            normalize_backward_row(batch.anchors.row(i), grad_a_eff.row(i), grad_a.row(i));
            normalize_backward_row(batch.positives.row(i), grad_p_eff.row(i), grad_p.row(i));
        }
        out.gradients.emplace("anchors", std::move(grad_a));
        out.gradients.emplace("positives", std::move(grad_p));
    } else {
        out.gradients.emplace("anchors", std::move(grad_a_eff));
        out.gradients.emplace("positives", std::move(grad_p_eff));
    }
    return out;
}

LossValue focal_loss(std::span<const LabelVector> preds, std::span<const LabelVector> truths, double gamma) {
    if (gamma < 0.0) throw ValidationError("focal_loss: gamma must be >= 0");
    if (preds.size() != truths.size()) throw ValidationError("focal_loss: preds/truths length mismatch");
    if (preds.empty()) throw ValidationError("focal_loss: empty batch");

    const std::size_t n = preds.size();
    Matrix grad_preds(n, kLabelVectorSize);
    Matrix grad_logits(n, kLabelVectorSize);
    Vector per_sample(n, 0.0);

    for (std::size_t s = 0; s < n; ++s) {
        double ell = 0.0;
        for (std::size_t i = 0; i < kLabelVectorSize; ++i) {
            if (truths[s][i] != 0.0) {
                ell -= truths[s][i] * floored_log(preds[s][i]);
            }
        }
        double outer = std::pow(1.0 - std::exp(-ell), gamma);
        per_sample[s] = outer * ell;

        double dl = focal_outer_derivative(ell, gamma) / static_cast<double>(n);
        for (std::size_t i = 0; i < kLabelVectorSize; ++i) {
            if (truths[s][i] != 0.0 && preds[s][i] >= kProbFloor) {
                grad_preds(s, i) = -dl * truths[s][i] / preds[s][i];
            }
        }
        // Through a per-group softmax the chain rule reduces to p - l per group.
        for (std::size_t g = 0; g < kNumDiseases; ++g) {
            for (std::size_t k = 0; k < kNumStates; ++k) {
                std::size_t i = g * kNumStates + k;
                grad_logits(s, i) = dl * (preds[s][i] - truths[s][i]);
            }
        }
    }

    LossValue out;
    out.value = compensated_mean(per_sample);
    out.gradients.emplace("preds", std::move(grad_preds));
    out.gradients.emplace("logits", std::move(grad_logits));
    return out;
}

LossValue report_nll(const Matrix& step_distributions, std::span<const int> targets) {
    if (targets.empty()) throw ValidationError("report_nll: empty target sequence");
    if (step_distributions.rows() < targets.size()) {
        throw ValidationError("report_nll: fewer distribution steps than target tokens");
    }
    const std::size_t vocab = step_distributions.cols();
    Matrix grad(step_distributions.rows(), vocab);
    double value = 0.0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        int y = targets[t];
        if (y < 0 || static_cast<std::size_t>(y) >= vocab) {
            throw ValidationError("report_nll: target token " + std::to_string(y) + " outside vocabulary of " +
                                  std::to_string(vocab));
        }
        double p = step_distributions(t, static_cast<std::size_t>(y));
        value -= floored_log(p);
        if (p >= kProbFloor) {
            grad(t, static_cast<std::size_t>(y)) = -1.0 / p;
        }
    }
    LossValue out;
    out.value = value;
    out.gradients.emplace("probs", std::move(grad));
    return out;
}

double total_loss(double l_rg, double d_ot, double lambda) {
    if (lambda < 0.0) throw ValidationError("total_loss: lambda must be >= 0");
    return l_rg + lambda * d_ot;
}

std::size_t probability_floor_hits() { return g_floor_hits; }

void reset_probability_floor_hits() { g_floor_hits = 0; }

} // namespace otalign
