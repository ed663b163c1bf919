#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>

#include "otalign/label_codec.hpp"
#include "otalign/numerics.hpp"

namespace otalign {

// ---------------------------------------------------------------------------
// Projection heads
// ---------------------------------------------------------------------------

struct ProjectionHead {
    Matrix weight; // d_out x d_in
    Vector bias;   // d_out

    std::size_t out_dim() const { return weight.rows(); }
    std::size_t in_dim() const { return weight.cols(); }

    // Weights N(0, 0.02^2), biases zero.
    static ProjectionHead init(std::size_t d_out, std::size_t d_in, SeededRng& rng);
};

struct ProjectionGrad {
    Matrix weight;
    Vector bias;

    explicit ProjectionGrad(const ProjectionHead& head)
        : weight(head.weight.rows(), head.weight.cols()), bias(head.bias.size(), 0.0) {}
};

// Each row x of the batch maps to W x + b.
Matrix project(const ProjectionHead& head, const Matrix& batch);
Vector project_row(const ProjectionHead& head, std::span<const double> x);

// Accumulates dW, db (and optionally dX) for upstream row gradients dY.
void project_backward(const ProjectionHead& head, const Matrix& batch, const Matrix& grad_out, ProjectionGrad& acc,
                      Matrix* grad_batch = nullptr);

// ---------------------------------------------------------------------------
// Low-rank adapters
// ---------------------------------------------------------------------------

struct LoraAdapter {
    Matrix base_weight; // frozen, d_out x d_in
    Matrix a;           // d_out x r
    Matrix b;           // r x d_in

    std::size_t rank() const { return a.cols(); }

    // a = 0, b random N(0, 0.02^2): the adapter starts as the identity
    // perturbation. Throws on rank < 1 or rank > min(d_out, d_in).
    static LoraAdapter init(Matrix base, std::size_t rank, SeededRng& rng);
};

// (base + a b) x without materializing the adapted weight.
Vector lora_forward(const LoraAdapter& adapter, const Vector& x);

// The implicit update a b, materialized (small problems only).
Matrix lora_update(const LoraAdapter& adapter);

// ---------------------------------------------------------------------------
// Prompt fusion
// ---------------------------------------------------------------------------

struct SentinelVectors {
    Vector start, junction, end;

    static SentinelVectors init(std::size_t dim, SeededRng& rng); // N(0, 0.02^2)
};

struct FusedPrompt {
    Matrix rows; // [start] img rows [junction] lbl rows [end]
    std::size_t image_rows = 0;
    std::size_t label_rows = 0;
};

// Image rows then label rows with boundary-marker rows at start, junction and
// end; total M + N + 3 rows. An empty label batch is allowed.
FusedPrompt fuse_prompt(const Matrix& img, const Matrix& lbl, const SentinelVectors& sentinels);

// ---------------------------------------------------------------------------
// Disease-label classifier
// ---------------------------------------------------------------------------

struct LabelClassifier {
    bool has_hidden = false;
    ProjectionHead hidden; // tanh activation when present
    ProjectionHead output; // 56 x d

    std::size_t input_dim() const { return has_hidden ? hidden.in_dim() : output.in_dim(); }

    // hidden_dim == 0 builds the single affine variant.
    static LabelClassifier init(std::size_t input_dim, std::size_t hidden_dim, SeededRng& rng);
};

// Mean-pools the feature rows of one image and classifies; output groups of 4
// are softmax-normalized per disease.
LabelVector classify(const LabelClassifier& clf, const Matrix& image_features);
LabelVector classify_features(const LabelClassifier& clf, const Vector& feature);

struct ClassifierCache {
    Vector input;
    Vector hidden_act; // tanh output; empty when no hidden layer
    LabelVector probs{};
};

ClassifierCache classifier_forward(const LabelClassifier& clf, const Vector& feature);

struct ClassifierGrad {
    ProjectionGrad hidden;
    ProjectionGrad output;

    explicit ClassifierGrad(const LabelClassifier& clf) : hidden(clf.hidden), output(clf.output) {}
};

// grad_logits is d(loss)/d(pre-softmax logits) for this sample.
void classifier_backward(const LabelClassifier& clf, const ClassifierCache& cache,
                         std::span<const double> grad_logits, ClassifierGrad& acc);

// ---------------------------------------------------------------------------
// Token generator
// ---------------------------------------------------------------------------

// Emits one distribution over the vocabulary per step, conditioned on the
// mean-pooled fused prompt and a positional one-hot. The affine map is a
// frozen base with a trainable low-rank adapter.
struct TokenGenerator {
    std::size_t vocab_size = 0;
    std::size_t max_len = 0;
    LoraAdapter map; // vocab_size x (feature_dim + max_len)

    std::size_t feature_dim() const { return map.base_weight.cols() - max_len; }

    static TokenGenerator init(std::size_t vocab_size, std::size_t max_len, std::size_t feature_dim,
                               std::size_t rank, SeededRng& rng);
};

// target_len rows of softmax distributions (teacher-forced on position).
Matrix generator_step_distributions(const TokenGenerator& gen, const FusedPrompt& fused, std::size_t target_len);

struct GeneratorBackward {
    double nll = 0.0;
    Matrix grad_a;
    Matrix grad_b;
    Vector grad_pooled; // d(nll)/d(mean-pooled fused feature)
};

GeneratorBackward generator_nll_backward(const TokenGenerator& gen, const FusedPrompt& fused,
                                         std::span<const int> targets);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

using ParamMap = std::map<std::string, Matrix>;

struct Checkpoint {
    ParamMap groups;
    std::map<std::string, double> meta;
};

// Versioned JSON {group name -> shape + flat values}; doubles survive the
// round trip bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace otalign
