#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "otalign/label_codec.hpp"
#include "otalign/losses.hpp"
#include "otalign/model.hpp"
#include "otalign/numerics.hpp"
#include "otalign/ot_core.hpp"

namespace otalign {

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct SyntheticDatasetConfig {
    std::size_t num_samples = 200;
    std::vector<std::size_t> diseases_active = {0, 1, 2, 3, 4, 5};
    std::size_t image_dim = 32;
    std::size_t label_dim = 24;
    std::size_t patches_per_sample = 4; // image rows contributed per positive disease
    std::size_t max_positives = 2;
    double cluster_spread = 0.5;
    double cluster_separation = 10.0;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SyntheticSample {
    Matrix image_rows; // (#positives * patches_per_sample) x image_dim
    DiseaseLabelSet labels;
    Matrix label_rows; // one row per positive disease, disease-index order
    std::vector<int> report_tokens;
    std::size_t dominant_disease = 0;        // disease generating the most image rows
    std::vector<std::size_t> row_disease;    // generating disease per image row
};

struct Dataset {
    SyntheticDatasetConfig config;
    std::vector<std::string> vocab;
    std::vector<SyntheticSample> samples;

    std::size_t max_report_len() const;
};

// Deterministic in cfg.seed: per active disease one image-space center and
// one label-space anchor; each sample draws 1..max_positives positive
// diseases, image rows near its positive centers, label rows from its
// anchors, and a templated token sequence naming its positives.
Dataset gen_synthetic(const SyntheticDatasetConfig& cfg);

// Archive layout: meta.json, labels.csv, image_features.csv,
// label_features.csv (header-less grids), tokens.txt (one space-separated
// token id sequence per line).
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

// Seed-deterministic 80/10/10 shuffle split.
struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};
SplitIndices split_indices(std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training histories
// ---------------------------------------------------------------------------

struct TrainHistoryRow {
    double total = 0.0;
    double l_rg = 0.0;
    double d_ot = 0.0;
    double marginal_violation = 0.0;
    double ce_f1 = 0.0;
    double silhouette = 0.0;
};

struct TrainHistory {
    std::vector<TrainHistoryRow> rows;
};

// CSV: epoch,total,l_rg,d_ot,marginal_violation,ce_f1,silhouette
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

// ---------------------------------------------------------------------------
// Contrastive pretraining
// ---------------------------------------------------------------------------

struct ContrastiveConfig {
    double sigma = 0.1;
    double tau = 0.5;
    double lr = 1e-2;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::size_t encoder_dim = 0; // 0: keep the image feature dimension
    std::uint64_t seed = 1;
    InfonceOptions infonce{};
};

struct ContrastiveResult {
    ProjectionHead encoder;
    std::vector<double> loss_trace; // one mean loss per epoch
};

// Trains an affine encoder over pooled raw image rows with noise positives
// and in-batch negatives. Noise vectors and batch order are drawn once from
// the seed, so an lr = 0 run has a constant trace.
ContrastiveResult pretrain_contrastive(const Dataset& data, const ContrastiveConfig& cfg);

// ---------------------------------------------------------------------------
// Alignment training
// ---------------------------------------------------------------------------

struct AlignmentConfig {
    double epsilon = 0.10;
    std::size_t ot_iters = 100;
    double ot_tol = 1e-9;
    double lambda = 1.0;
    double lr = 1e-2;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::size_t embed_dim = 64;
    std::size_t lora_rank = 4;
    std::uint64_t seed = 1;
    bool per_sample_ot = false;   // default aligns all batch rows at once
    bool ot_linear_only = false;  // drop the entropic term from the loss
    std::size_t eval_clf_epochs = 25; // quick classifier for the held-out CE F1

    void validate() const;
};

struct TrainState {
    ProjectionHead image_head;
    ProjectionHead label_head;
    SentinelVectors sentinels;
    TokenGenerator generator;
};

Checkpoint state_to_checkpoint(const TrainState& state);
TrainState state_from_checkpoint(const Checkpoint& ck);

struct AlignmentResult {
    TrainState state;
    TrainHistory history;
};

// Joint gradient descent on the projection heads, sentinel rows and the
// generator's low-rank path (base frozen), minimizing mean token NLL plus
// lambda times the entropic OT distance. The transport plan is held fixed
// within each step, so OT gradients reach the heads through the cost matrix.
AlignmentResult train_alignment(const Dataset& data, const AlignmentConfig& cfg);

struct AlignmentEval {
    double d_ot = 0.0;
    double linear_term = 0.0;
    double marginal_violation = 0.0;
    double silhouette = 0.0;
    double ce_f1 = 0.0;
};

enum class SplitPart { Train, Val, Test };

// One OT solve plus silhouette and CE F1 (quick classifier fit on the train
// split's aligned features) on the chosen split.
AlignmentEval evaluate_alignment(const Dataset& data, const TrainState& state, const AlignmentConfig& cfg,
                                 SplitPart part);

// ---------------------------------------------------------------------------
// Label classifier training
// ---------------------------------------------------------------------------

struct ClassifierConfig {
    double gamma = 2.0;
    double lr = 0.5;
    std::size_t epochs = 150;
    std::size_t batch_size = 32;
    std::size_t hidden_dim = 0;
    std::uint64_t seed = 1;

    void validate() const;
};

struct ClassifierResult {
    LabelClassifier classifier;
    TrainHistory history; // total = focal loss, ce_f1 = held-out F1
};

// Trains on mean-pooled raw image features against one-hot label vectors.
ClassifierResult train_classifier(const Dataset& data, const ClassifierConfig& cfg);

// Same loop on caller-provided per-sample features (e.g. aligned features).
ClassifierResult train_classifier_on_features(const Matrix& features, std::span<const DiseaseLabelSet> labels,
                                              const ClassifierConfig& cfg, const SplitIndices& split);

// Mean-pooled per-sample features, optionally through a projection head.
Matrix pooled_features(const Dataset& data, const ProjectionHead* head = nullptr);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

// Mean silhouette coefficient under Euclidean distance; singleton clusters
// and all-zero distances contribute 0. Requires at least two clusters.
double silhouette(const Matrix& points, std::span<const std::size_t> cluster_ids);

// ---------------------------------------------------------------------------
// Ablation sweeps
// ---------------------------------------------------------------------------

struct SweepRow {
    double swept_value = 0.0;
    double total = 0.0;
    double l_rg = 0.0;
    double d_ot = 0.0;
    double linear_term = 0.0;
    double marginal_violation = 0.0;
    double ce_f1 = 0.0;
    double silhouette = 0.0;
};

// One alignment run per setting (same seed for comparability); d_ot,
// linear_term and marginal_violation come from a final evaluation solve on
// the validation split. max_threads = 0 runs serially.
std::vector<SweepRow> sweep_iters(const Dataset& data, const AlignmentConfig& base,
                                  std::span<const std::size_t> iters_list, unsigned max_threads = 0);
std::vector<SweepRow> sweep_epsilon(const Dataset& data, const AlignmentConfig& base,
                                    std::span<const double> eps_list, unsigned max_threads = 0);

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows,
                     std::string_view value_name);

} // namespace otalign
