#include "otalign/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "otalign/error.hpp"
#include "otalign/losses.hpp"

namespace otalign {

namespace {

constexpr double kInitSigma = 0.02;

Matrix random_matrix(std::size_t rows, std::size_t cols, SeededRng& rng, double sigma) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = rng.next_gaussian(0.0, sigma);
    return m;
}

Vector pooled_mean(const Matrix& rows) {
    Vector out(rows.cols(), 0.0);
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        auto r = rows.row(i);
        for (std::size_t j = 0; j < rows.cols(); ++j) out[j] += r[j];
    }
    double inv = 1.0 / static_cast<double>(rows.rows());
    for (double& x : out) x *= inv;
    return out;
}

} // namespace

ProjectionHead ProjectionHead::init(std::size_t d_out, std::size_t d_in, SeededRng& rng) {
    ProjectionHead head;
    head.weight = random_matrix(d_out, d_in, rng, kInitSigma);
    head.bias.assign(d_out, 0.0);
    return head;
}

Matrix project(const ProjectionHead& head, const Matrix& batch) {
    if (batch.cols() != head.in_dim()) {
        throw ValidationError("project: batch has " + std::to_string(batch.cols()) + " columns, head expects " +
                              std::to_string(head.in_dim()));
    }
    Matrix out(batch.rows(), head.out_dim());
    for (std::size_t i = 0; i < batch.rows(); ++i) {
        auto x = batch.row(i);
        auto y = out.row(i);
        for (std::size_t r = 0; r < head.out_dim(); ++r) {
            y[r] = dot(head.weight.row(r), x) + head.bias[r];
        }
    }
    return out;
}

Vector project_row(const ProjectionHead& head, std::span<const double> x) {
    if (x.size() != head.in_dim()) throw ValidationError("project_row: dimension mismatch");
    Vector y(head.out_dim(), 0.0);
    for (std::size_t r = 0; r < head.out_dim(); ++r) {
        y[r] = dot(head.weight.row(r), x) + head.bias[r];
    }
    return y;
}

void project_backward(const ProjectionHead& head, const Matrix& batch, const Matrix& grad_out, ProjectionGrad& acc,
                      Matrix* grad_batch) {
    if (grad_out.rows() != batch.rows() || grad_out.cols() != head.out_dim()) {
        throw ValidationError("project_backward: gradient shape mismatch");
    }
    for (std::size_t i = 0; i < batch.rows(); ++i) {
        add_outer(acc.weight, grad_out.row(i), batch.row(i), 1.0);
        auto gy = grad_out.row(i);
        for (std::size_t r = 0; r < head.out_dim(); ++r) acc.bias[r] += gy[r];
        if (grad_batch) {
            auto gx = grad_batch->row(i);
            for (std::size_t r = 0; r < head.out_dim(); ++r) {
                auto w = head.weight.row(r);
                for (std::size_t c = 0; c < head.in_dim(); ++c) gx[c] += gy[r] * w[c];
            }
        }
    }
}

LoraAdapter LoraAdapter::init(Matrix base, std::size_t rank, SeededRng& rng) {
    std::size_t d_out = base.rows();
    std::size_t d_in = base.cols();
    if (rank < 1 || rank > std::min(d_out, d_in)) {
        throw ValidationError("lora: rank " + std::to_string(rank) + " outside [1, min(d_out, d_in)]");
    }
    LoraAdapter adapter;
    adapter.base_weight = std::move(base);
    adapter.a = Matrix(d_out, rank); // zeros: adapter starts as identity perturbation
    adapter.b = random_matrix(rank, d_in, rng, kInitSigma);
    return adapter;
}

Vector lora_forward(const LoraAdapter& adapter, const Vector& x) {
    if (x.size() != adapter.base_weight.cols()) {
        throw ValidationError("lora_forward: input dimension mismatch");
    }
    Vector y = matvec(adapter.base_weight, x);
    Vector bx = matvec(adapter.b, x);
    Vector abx = matvec(adapter.a, bx);
    axpy(y, 1.0, abx);
    return y;
}

Matrix lora_update(const LoraAdapter& adapter) { return matmul(adapter.a, adapter.b); }

SentinelVectors SentinelVectors::init(std::size_t dim, SeededRng& rng) {
    SentinelVectors s;
    s.start = gaussian_sample(rng, dim, 0.0, kInitSigma);
    s.junction = gaussian_sample(rng, dim, 0.0, kInitSigma);
    s.end = gaussian_sample(rng, dim, 0.0, kInitSigma);
    return s;
}

FusedPrompt fuse_prompt(const Matrix& img, const Matrix& lbl, const SentinelVectors& sentinels) {
    const std::size_t dim = sentinels.start.size();
    if (img.rows() > 0 && img.cols() != dim) {
        throw ValidationError("fuse_prompt: image feature dimension mismatch");
    }
    if (lbl.rows() > 0 && lbl.cols() != dim) {
        throw ValidationError("fuse_prompt: label feature dimension mismatch");
    }
    FusedPrompt fused;
    fused.image_rows = img.rows();
    fused.label_rows = lbl.rows();
    fused.rows = Matrix(img.rows() + lbl.rows() + 3, dim);
    std::size_t r = 0;
    auto put = [&](std::span<const double> src) {
        auto dst = fused.rows.row(r++);
        for (std::size_t j = 0; j < dim; ++j) dst[j] = src[j];
    };
    put(sentinels.start);
    for (std::size_t i = 0; i < img.rows(); ++i) put(img.row(i));
    put(sentinels.junction);
    for (std::size_t i = 0; i < lbl.rows(); ++i) put(lbl.row(i));
    put(sentinels.end);
    return fused;
}

LabelClassifier LabelClassifier::init(std::size_t input_dim, std::size_t hidden_dim, SeededRng& rng) {
    LabelClassifier clf;
    if (hidden_dim > 0) {
        clf.has_hidden = true;
        clf.hidden = ProjectionHead::init(hidden_dim, input_dim, rng);
        clf.output = ProjectionHead::init(kLabelVectorSize, hidden_dim, rng);
    } else {
        clf.hidden = ProjectionHead{Matrix(0, 0), {}};
        clf.output = ProjectionHead::init(kLabelVectorSize, input_dim, rng);
    }
    return clf;
}

LabelVector classify(const LabelClassifier& clf, const Matrix& image_features) {
    if (image_features.rows() == 0) throw ValidationError("classify: empty feature batch");
    return classify_features(clf, pooled_mean(image_features));
}

LabelVector classify_features(const LabelClassifier& clf, const Vector& feature) {
    return classifier_forward(clf, feature).probs;
}

ClassifierCache classifier_forward(const LabelClassifier& clf, const Vector& feature) {
    if (feature.size() != clf.input_dim()) {
        throw ValidationError("classify: feature dimension " + std::to_string(feature.size()) + ", expected " +
                              std::to_string(clf.input_dim()));
    }
    ClassifierCache cache;
    cache.input = feature;
    const Vector* last = &cache.input;
    if (clf.has_hidden) {
        cache.hidden_act = project_row(clf.hidden, feature);
        for (double& x : cache.hidden_act) x = std::tanh(x);
        last = &cache.hidden_act;
    }
    Vector logits = project_row(clf.output, *last);
    for (std::size_t g = 0; g < kNumDiseases; ++g) {
        Vector p = softmax({logits.data() + g * kNumStates, kNumStates});
        for (std::size_t k = 0; k < kNumStates; ++k) cache.probs[g * kNumStates + k] = p[k];
    }
    return cache;
}

void classifier_backward(const LabelClassifier& clf, const ClassifierCache& cache,
                         std::span<const double> grad_logits, ClassifierGrad& acc) {
    if (grad_logits.size() != kLabelVectorSize) {
        throw ValidationError("classifier_backward: gradient length mismatch");
    }
    const Vector& last = clf.has_hidden ? cache.hidden_act : cache.input;
    add_outer(acc.output.weight, grad_logits, last, 1.0);
    for (std::size_t r = 0; r < kLabelVectorSize; ++r) acc.output.bias[r] += grad_logits[r];
    if (clf.has_hidden) {
        Vector grad_act(last.size(), 0.0);
        for (std::size_t r = 0; r < kLabelVectorSize; ++r) {
            auto w = clf.output.weight.row(r);
            for (std::size_t c = 0; c < last.size(); ++c) grad_act[c] += grad_logits[r] * w[c];
        }
        // tanh' = 1 - tanh^2
        for (std::size_t c = 0; c < last.size(); ++c) {
            grad_act[c] *= 1.0 - cache.hidden_act[c] * cache.hidden_act[c];
        }
        add_outer(acc.hidden.weight, grad_act, cache.input, 1.0);
        for (std::size_t c = 0; c < grad_act.size(); ++c) acc.hidden.bias[c] += grad_act[c];
    }
}

TokenGenerator TokenGenerator::init(std::size_t vocab_size, std::size_t max_len, std::size_t feature_dim,
                                    std::size_t rank, SeededRng& rng) {
    if (vocab_size == 0 || max_len == 0 || feature_dim == 0) {
        throw ValidationError("generator: vocab, max_len and feature_dim must be positive");
    }
    TokenGenerator gen;
    gen.vocab_size = vocab_size;
    gen.max_len = max_len;
    Matrix base = random_matrix(vocab_size, feature_dim + max_len, rng, kInitSigma);
    gen.map = LoraAdapter::init(std::move(base), rank, rng);
    return gen;
}

Matrix generator_step_distributions(const TokenGenerator& gen, const FusedPrompt& fused, std::size_t target_len) {
    if (target_len == 0) throw ValidationError("generator: target_len must be >= 1");
    if (target_len > gen.max_len) {
        throw ValidationError("generator: target_len " + std::to_string(target_len) + " exceeds max_len " +
                              std::to_string(gen.max_len));
    }
    if (fused.rows.cols() != gen.feature_dim()) {
        throw ValidationError("generator: fused feature dimension mismatch");
    }
    Vector pooled = pooled_mean(fused.rows);
    Matrix dists(target_len, gen.vocab_size);
    Vector input(gen.feature_dim() + gen.max_len, 0.0);
    std::copy(pooled.begin(), pooled.end(), input.begin());
    for (std::size_t t = 0; t < target_len; ++t) {
        input[gen.feature_dim() + t] = 1.0;
        Vector logits = lora_forward(gen.map, input);
        Vector probs = softmax(logits);
        input[gen.feature_dim() + t] = 0.0;
        for (std::size_t v = 0; v < gen.vocab_size; ++v) dists(t, v) = probs[v];
    }
    return dists;
}

GeneratorBackward generator_nll_backward(const TokenGenerator& gen, const FusedPrompt& fused,
                                         std::span<const int> targets) {
    Matrix dists = generator_step_distributions(gen, fused, targets.size());
    LossValue nll = report_nll(dists, targets);
    const Matrix& grad_probs = nll.gradients.at("probs");

    GeneratorBackward out;
    out.nll = nll.value;
    out.grad_a = Matrix(gen.map.a.rows(), gen.map.a.cols());
    out.grad_b = Matrix(gen.map.b.rows(), gen.map.b.cols());
    out.grad_pooled.assign(gen.feature_dim(), 0.0);

    Vector input(gen.feature_dim() + gen.max_len, 0.0);
    Vector pooled = pooled_mean(fused.rows);
    std::copy(pooled.begin(), pooled.end(), input.begin());

    for (std::size_t t = 0; t < targets.size(); ++t) {
        input[gen.feature_dim() + t] = 1.0;

        // Softmax backward: dz = p * (dp - <dp, p>).
        auto p = dists.row(t);
        auto dp = grad_probs.row(t);
        double inner = dot(dp, p);
        Vector dlogits(gen.vocab_size, 0.0);
        for (std::size_t v = 0; v < gen.vocab_size; ++v) dlogits[v] = p[v] * (dp[v] - inner);

        // y = (base + a b) x: da = dy (b x)^t, db = a^t dy x^t, dx = (base + a b)^t dy.
        Vector bx = matvec(gen.map.b, input);
        add_outer(out.grad_a, dlogits, bx, 1.0);
        Vector at_dy = matvec_transposed(gen.map.a, dlogits);
        add_outer(out.grad_b, at_dy, input, 1.0);

        Vector dx = matvec_transposed(gen.map.base_weight, dlogits);
        Vector bt_at_dy = matvec_transposed(gen.map.b, at_dy);
        axpy(dx, 1.0, bt_at_dy);
        for (std::size_t c = 0; c < gen.feature_dim(); ++c) out.grad_pooled[c] += dx[c];

        input[gen.feature_dim() + t] = 0.0;
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    nlohmann::json j;
    j["version"] = 1;
    j["meta"] = nlohmann::json::object();
    for (const auto& [k, v] : checkpoint.meta) j["meta"][k] = v;
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [name, m] : checkpoint.groups) {
        nlohmann::json g;
        g["shape"] = {m.rows(), m.cols()};
        g["values"] = m.data();
        groups[name] = std::move(g);
    }
    j["groups"] = std::move(groups);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bad checkpoint JSON in " + path.string() + ": " + e.what());
    }
    if (!j.contains("version") || j["version"].get<int>() != 1) {
        throw ParseError("unsupported checkpoint version in " + path.string());
    }
    Checkpoint ck;
    if (j.contains("meta")) {
        for (const auto& [k, v] : j.at("meta").items()) {
            ck.meta[k] = v.get<double>();
        }
    }
    for (const auto& [name, g] : j.at("groups").items()) {
        auto shape = g.at("shape").get<std::vector<std::size_t>>();
        auto values = g.at("values").get<Vector>();
        if (shape.size() != 2) throw ParseError("bad shape for group " + name);
        ck.groups.emplace(name, Matrix(shape[0], shape[1], std::move(values)));
    }
    return ck;
}

} // namespace otalign
