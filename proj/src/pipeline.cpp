#include "otalign/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "otalign/csv_io.hpp"
#include "otalign/error.hpp"

namespace otalign {

namespace {

// Token layout: <bos> <eos> . followed by one token per disease and the four
// state words.
constexpr int kBosTok = 0;
constexpr int kEosTok = 1;
constexpr int kPeriodTok = 2;
constexpr int kDiseaseTokBase = 3;
constexpr int kStateTokBase = kDiseaseTokBase + static_cast<int>(kNumDiseases);

std::vector<std::string> build_vocab() {
    std::vector<std::string> v = {"<bos>", "<eos>", "."};
    for (auto name : disease_names()) v.emplace_back(name);
    v.insert(v.end(), {"positive", "negative", "unclear", "unmentioned"});
    return v;
}

Vector scaled_unit_direction(SeededRng& rng, std::size_t dim, double scale) {
    Vector g = gaussian_sample(rng, dim, 0.0, 1.0);
    double n = l2_norm(g);
    if (n < 1e-12) {
        g.assign(dim, 0.0);
        g[0] = 1.0;
        n = 1.0;
    }
    for (double& x : g) x *= scale / n;
    return g;
}

// Random direction orthogonalized against the ones already drawn, so cluster
// centers are mutually equidistant instead of occasionally colliding.
Vector scaled_orthogonal_direction(SeededRng& rng, std::size_t dim, double scale, std::vector<Vector>& basis) {
    Vector g = gaussian_sample(rng, dim, 0.0, 1.0);
    if (basis.size() < dim) {
        for (const Vector& b : basis) {
            double proj = dot(g, b) / dot(b, b);
            for (std::size_t j = 0; j < dim; ++j) g[j] -= proj * b[j];
        }
    }
    double n = l2_norm(g);
    if (n < 1e-9) {
        g.assign(dim, 0.0);
        g[basis.size() % dim] = 1.0;
        n = 1.0;
    }
    for (double& x : g) x *= scale / n;
    basis.push_back(g);
    return g;
}

void shuffle_indices(std::vector<std::size_t>& idx, SeededRng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::size_t j = rng.next_u64() % i;
        std::swap(idx[i - 1], idx[j]);
    }
}

std::vector<std::size_t> positive_diseases(const DiseaseLabelSet& labels) {
    std::vector<std::size_t> out;
    for (std::size_t d = 0; d < kNumDiseases; ++d) {
        if (labels.states[d] == DiseaseState::Positive) out.push_back(d);
    }
    return out;
}

std::vector<int> report_template(std::span<const std::size_t> positives) {
    std::vector<int> tokens = {kBosTok};
    for (std::size_t d : positives) {
        tokens.push_back(kDiseaseTokBase + static_cast<int>(d));
        tokens.push_back(kStateTokBase + 0);
        tokens.push_back(kPeriodTok);
    }
    tokens.push_back(kEosTok);
    return tokens;
}

// Every positive disease contributes exactly `patches` image rows, so each
// disease cluster carries the same image-to-label row ratio and uniform OT
// marginals stay consistent across clusters. Ties on the row count resolve
// the dominant disease to the lowest index.
void assign_rows(SyntheticSample& sample, std::size_t patches) {
    auto positives = positive_diseases(sample.labels);
    sample.row_disease.clear();
    sample.row_disease.reserve(positives.size() * patches);
    for (std::size_t d : positives) {
        for (std::size_t r = 0; r < patches; ++r) sample.row_disease.push_back(d);
    }
    sample.dominant_disease = positives.front();
}

Matrix rows_subset(const Matrix& m, std::size_t first, std::size_t count) {
    Matrix out(count, m.cols());
    for (std::size_t i = 0; i < count; ++i) {
        auto src = m.row(first + i);
        auto dst = out.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

void check_finite_params(std::span<const double> values, const std::string& what) {
    for (double v : values) {
        if (!std::isfinite(v)) throw TrainingError(what + " diverged (non-finite parameter)");
    }
}

void sgd_step(Matrix& param, const Matrix& grad, double lr) {
    for (std::size_t i = 0; i < param.size(); ++i) param.data()[i] -= lr * grad.data()[i];
}

void sgd_step(Vector& param, const Vector& grad, double lr) {
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

std::vector<std::vector<std::size_t>> fixed_batches(std::vector<std::size_t> order, std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        std::size_t end = std::min(order.size(), start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

std::vector<LabelVector> onehot_targets(const Dataset& data) {
    std::vector<LabelVector> out;
    out.reserve(data.samples.size());
    for (const auto& s : data.samples) out.push_back(encode_onehot(s.labels));
    return out;
}

// Shared gradient-descent core for the label classifier.
double classifier_epoch(LabelClassifier& clf, const Matrix& feats, std::span<const LabelVector> onehots,
                        const std::vector<std::vector<std::size_t>>& batches, double gamma, double lr) {
    Vector batch_losses;
    batch_losses.reserve(batches.size());
    for (const auto& batch : batches) {
        std::vector<ClassifierCache> caches;
        std::vector<LabelVector> preds, truths;
        caches.reserve(batch.size());
        for (std::size_t idx : batch) {
            Vector feat(feats.row(idx).begin(), feats.row(idx).end());
            caches.push_back(classifier_forward(clf, feat));
            preds.push_back(caches.back().probs);
            truths.push_back(onehots[idx]);
        }
        LossValue loss = focal_loss(preds, truths, gamma);
        if (!std::isfinite(loss.value)) throw TrainingError("classifier training diverged");
        const Matrix& grad_logits = loss.gradients.at("logits");
        ClassifierGrad grad(clf);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            classifier_backward(clf, caches[i], grad_logits.row(i), grad);
        }
        sgd_step(clf.output.weight, grad.output.weight, lr);
        sgd_step(clf.output.bias, grad.output.bias, lr);
        if (clf.has_hidden) {
            sgd_step(clf.hidden.weight, grad.hidden.weight, lr);
            sgd_step(clf.hidden.bias, grad.hidden.bias, lr);
        }
        batch_losses.push_back(loss.value);
    }
    return compensated_mean(batch_losses);
}

double classifier_f1(const LabelClassifier& clf, const Matrix& feats, std::span<const DiseaseLabelSet> labels,
                     std::span<const std::size_t> indices) {
    if (indices.empty()) return 0.0;
    std::vector<DiseaseLabelSet> pred, truth;
    pred.reserve(indices.size());
    for (std::size_t idx : indices) {
        Vector feat(feats.row(idx).begin(), feats.row(idx).end());
        pred.push_back(decode_onehot(classify_features(clf, feat)));
        truth.push_back(labels[idx]);
    }
    return ce_metrics(pred, truth).f1;
}

// Per-dimension z-scoring fitted on the training rows, so classifier
// comparisons across feature spaces are not skewed by feature scale.
Matrix standardize_features(const Matrix& feats, std::span<const std::size_t> train_idx) {
    const std::size_t d = feats.cols();
    Vector mean(d, 0.0), sd(d, 0.0);
    for (std::size_t idx : train_idx) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += feats(idx, j);
    }
    for (double& m : mean) m /= static_cast<double>(train_idx.size());
    for (std::size_t idx : train_idx) {
        for (std::size_t j = 0; j < d; ++j) {
            double diff = feats(idx, j) - mean[j];
            sd[j] += diff * diff;
        }
    }
    for (double& s : sd) s = std::sqrt(s / std::max<std::size_t>(1, train_idx.size() - 1));
    Matrix out(feats.rows(), d);
    for (std::size_t i = 0; i < feats.rows(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out(i, j) = sd[j] > 1e-12 ? (feats(i, j) - mean[j]) / sd[j] : 0.0;
        }
    }
    return out;
}

LabelClassifier fit_quick_classifier(const Matrix& feats, std::span<const LabelVector> onehots,
                                     std::span<const std::size_t> train_idx, const ClassifierConfig& cfg) {
    SeededRng root(cfg.seed);
    auto init_rng = root.child("classifier-init");
    LabelClassifier clf = LabelClassifier::init(feats.cols(), cfg.hidden_dim, init_rng);
    std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
    auto order_rng = root.child("batch-order");
    shuffle_indices(order, order_rng);
    auto batches = fixed_batches(order, cfg.batch_size);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        classifier_epoch(clf, feats, onehots, batches, cfg.gamma, cfg.lr);
    }
    return clf;
}

} // namespace

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

void SyntheticDatasetConfig::validate() const {
    if (num_samples == 0) throw ValidationError("gen_synthetic: num_samples must be >= 1");
    if (diseases_active.empty()) throw ValidationError("gen_synthetic: diseases_active must be nonempty");
    std::vector<std::size_t> sorted = diseases_active;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ValidationError("gen_synthetic: duplicate active disease index");
    }
    if (sorted.back() >= kNumDiseases) throw ValidationError("gen_synthetic: disease index out of range");
    if (image_dim < 2 || label_dim < 2) throw ValidationError("gen_synthetic: feature dims must be >= 2");
    if (patches_per_sample == 0) throw ValidationError("gen_synthetic: patches_per_sample must be >= 1");
    if (max_positives == 0) throw ValidationError("gen_synthetic: max_positives must be >= 1");
    if (!(cluster_spread > 0.0)) throw ValidationError("gen_synthetic: cluster_spread must be > 0");
    if (!(cluster_separation > 0.0)) throw ValidationError("gen_synthetic: cluster_separation must be > 0");
}

std::size_t Dataset::max_report_len() const {
    std::size_t k = std::min<std::size_t>(config.max_positives, config.diseases_active.size());
    return 3 * k + 2;
}

Dataset gen_synthetic(const SyntheticDatasetConfig& cfg) {
    cfg.validate();
    SeededRng root(cfg.seed);

    Dataset data;
    data.config = cfg;
    data.vocab = build_vocab();

    // Label anchors sit on a wider shell than the image centers: aligning
    // image clusters onto the anchor constellation then spreads them apart
    // instead of shrinking them together.
    constexpr double kAnchorScale = 5.0;
    std::map<std::size_t, Vector> image_center, label_anchor;
    std::vector<Vector> image_basis, label_basis;
    for (std::size_t d : cfg.diseases_active) {
        auto cr = root.child("image-center-" + std::to_string(d));
        image_center[d] = scaled_orthogonal_direction(cr, cfg.image_dim, cfg.cluster_separation, image_basis);
        auto ar = root.child("label-anchor-" + std::to_string(d));
        label_anchor[d] =
            scaled_orthogonal_direction(ar, cfg.label_dim, kAnchorScale * cfg.cluster_separation, label_basis);
    }

    // Positive sets are dealt round-robin over diseases so every active
    // disease carries about the same total image and label mass; equal
    // cluster masses keep uniform OT marginals consistent across clusters.
    // Three of four samples are single-positive; the fourth cycles through
    // the larger set sizes. The deal order is then shuffled by seed.
    const std::size_t choices = std::min<std::size_t>(cfg.max_positives, cfg.diseases_active.size());
    const std::size_t active = cfg.diseases_active.size();
    std::vector<std::vector<std::size_t>> dealt;
    dealt.reserve(cfg.num_samples);
    std::size_t cursor = 0;
    for (std::size_t s = 0; s < cfg.num_samples; ++s) {
        std::size_t k = 1;
        if (choices > 1 && s % 4 == 3) {
            k = 2 + (s / 4) % (choices - 1);
        }
        std::vector<std::size_t> positives;
        positives.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            positives.push_back(cfg.diseases_active[(cursor + i) % active]);
        }
        std::sort(positives.begin(), positives.end());
        cursor = (cursor + k) % active;
        dealt.push_back(std::move(positives));
    }
    {
        std::vector<std::size_t> order(cfg.num_samples);
        std::iota(order.begin(), order.end(), 0);
        SeededRng shuffle_rng = root.child("sample-order");
        shuffle_indices(order, shuffle_rng);
        std::vector<std::vector<std::size_t>> shuffled;
        shuffled.reserve(cfg.num_samples);
        for (std::size_t idx : order) shuffled.push_back(std::move(dealt[idx]));
        dealt = std::move(shuffled);
    }

    data.samples.reserve(cfg.num_samples);
    for (std::size_t s = 0; s < cfg.num_samples; ++s) {
        SeededRng srng = root.child("sample-" + std::to_string(s));
        const std::vector<std::size_t>& positives = dealt[s];

        SyntheticSample sample;
        for (std::size_t d : positives) sample.labels.states[d] = DiseaseState::Positive;
        assign_rows(sample, cfg.patches_per_sample);

        sample.image_rows = Matrix(sample.row_disease.size(), cfg.image_dim);
        for (std::size_t r = 0; r < sample.row_disease.size(); ++r) {
            const Vector& center = image_center.at(sample.row_disease[r]);
            auto row = sample.image_rows.row(r);
            for (std::size_t j = 0; j < cfg.image_dim; ++j) {
                row[j] = center[j] + srng.next_gaussian(0.0, cfg.cluster_spread);
            }
        }

        sample.label_rows = Matrix(positives.size(), cfg.label_dim);
        for (std::size_t i = 0; i < positives.size(); ++i) {
            const Vector& anchor = label_anchor.at(positives[i]);
            auto row = sample.label_rows.row(i);
            for (std::size_t j = 0; j < cfg.label_dim; ++j) {
                row[j] = anchor[j] + srng.next_gaussian(0.0, 0.1 * cfg.cluster_spread);
            }
        }

        sample.report_tokens = report_template(positives);
        data.samples.push_back(std::move(sample));
    }
    return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create dataset directory " + dir.string());

    nlohmann::json meta;
    meta["version"] = 1;
    meta["num_samples"] = data.config.num_samples;
    meta["diseases_active"] = data.config.diseases_active;
    meta["image_dim"] = data.config.image_dim;
    meta["label_dim"] = data.config.label_dim;
    meta["patches_per_sample"] = data.config.patches_per_sample;
    meta["max_positives"] = data.config.max_positives;
    meta["cluster_spread"] = data.config.cluster_spread;
    meta["cluster_separation"] = data.config.cluster_separation;
    meta["seed"] = data.config.seed;
    meta["vocab"] = data.vocab;
    std::vector<std::size_t> label_row_counts;
    for (const auto& s : data.samples) label_row_counts.push_back(s.label_rows.rows());
    meta["label_rows_per_sample"] = label_row_counts;
    write_text(dir / "meta.json", meta.dump(2) + "\n");

    std::vector<DiseaseLabelSet> labels;
    for (const auto& s : data.samples) labels.push_back(s.labels);
    write_labels_csv(dir / "labels.csv", labels);

    std::size_t total_label_rows = 0, total_image_rows = 0;
    for (std::size_t c : label_row_counts) total_label_rows += c;
    for (const auto& s : data.samples) total_image_rows += s.image_rows.rows();
    Matrix image_grid(total_image_rows, data.config.image_dim);
    Matrix label_grid(total_label_rows, data.config.label_dim);
    std::size_t ir = 0, lr = 0;
    std::ostringstream tokens;
    for (const auto& s : data.samples) {
        for (std::size_t r = 0; r < s.image_rows.rows(); ++r) {
            auto src = s.image_rows.row(r);
            std::copy(src.begin(), src.end(), image_grid.row(ir++).begin());
        }
        for (std::size_t r = 0; r < s.label_rows.rows(); ++r) {
            auto src = s.label_rows.row(r);
            std::copy(src.begin(), src.end(), label_grid.row(lr++).begin());
        }
        for (std::size_t t = 0; t < s.report_tokens.size(); ++t) {
            if (t) tokens << ' ';
            tokens << s.report_tokens[t];
        }
        tokens << '\n';
    }
    write_matrix_csv(dir / "image_features.csv", image_grid);
    write_matrix_csv(dir / "label_features.csv", label_grid);
    write_text(dir / "tokens.txt", tokens.str());
}

Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / "meta.json");
    if (!meta_in) throw IoError("cannot open " + (dir / "meta.json").string());
    nlohmann::json meta;
    try {
        meta_in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bad meta.json in " + dir.string() + ": " + e.what());
    }

    Dataset data;
    data.config.num_samples = meta.at("num_samples").get<std::size_t>();
    data.config.diseases_active = meta.at("diseases_active").get<std::vector<std::size_t>>();
    data.config.image_dim = meta.at("image_dim").get<std::size_t>();
    data.config.label_dim = meta.at("label_dim").get<std::size_t>();
    data.config.patches_per_sample = meta.at("patches_per_sample").get<std::size_t>();
    data.config.max_positives = meta.at("max_positives").get<std::size_t>();
    data.config.cluster_spread = meta.at("cluster_spread").get<double>();
    data.config.cluster_separation = meta.at("cluster_separation").get<double>();
    data.config.seed = meta.at("seed").get<std::uint64_t>();
    data.vocab = meta.at("vocab").get<std::vector<std::string>>();
    auto label_row_counts = meta.at("label_rows_per_sample").get<std::vector<std::size_t>>();

    auto labels = read_labels_csv(dir / "labels.csv");
    if (labels.size() != data.config.num_samples || label_row_counts.size() != labels.size()) {
        throw ParseError("dataset sample counts disagree in " + dir.string());
    }
    Matrix image_grid = read_matrix_csv(dir / "image_features.csv");
    Matrix label_grid = read_matrix_csv(dir / "label_features.csv");
    auto token_lines = read_lines(dir / "tokens.txt");
    while (!token_lines.empty() && trim(token_lines.back()).empty()) token_lines.pop_back();
    if (token_lines.size() != labels.size()) {
        throw ParseError("tokens.txt line count disagrees with labels in " + dir.string());
    }
    std::size_t expected_image_rows = 0;
    for (std::size_t c : label_row_counts) expected_image_rows += c * data.config.patches_per_sample;
    if (image_grid.rows() != expected_image_rows) {
        throw ParseError("image_features.csv row count mismatch in " + dir.string());
    }

    std::size_t ir = 0, lr = 0;
    for (std::size_t s = 0; s < labels.size(); ++s) {
        SyntheticSample sample;
        sample.labels = labels[s];
        std::size_t image_rows = label_row_counts[s] * data.config.patches_per_sample;
        sample.image_rows = rows_subset(image_grid, ir, image_rows);
        ir += image_rows;
        sample.label_rows = rows_subset(label_grid, lr, label_row_counts[s]);
        lr += label_row_counts[s];
        for (const auto& cell : split(token_lines[s], ' ')) {
            if (trim(cell).empty()) continue;
            sample.report_tokens.push_back(static_cast<int>(parse_int(cell)));
        }
        assign_rows(sample, data.config.patches_per_sample);
        data.samples.push_back(std::move(sample));
    }
    if (lr != label_grid.rows()) throw ParseError("label_features.csv row count mismatch in " + dir.string());
    return data;
}

SplitIndices split_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    SeededRng rng = SeededRng(seed).child("split");
    shuffle_indices(idx, rng);
    SplitIndices split;
    if (n < 3) {
        split.train = idx;
        return split;
    }
    std::size_t val = std::max<std::size_t>(1, n / 10);
    std::size_t test = std::max<std::size_t>(1, n / 10);
    std::size_t train = n - val - test;
    split.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train));
    split.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(train),
                     idx.begin() + static_cast<std::ptrdiff_t>(train + val));
    split.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(train + val), idx.end());
    return split;
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
    std::ostringstream out;
    out << "epoch,total,l_rg,d_ot,marginal_violation,ce_f1,silhouette\n";
    for (std::size_t e = 0; e < history.rows.size(); ++e) {
        const auto& r = history.rows[e];
        out << (e + 1) << ',' << format_double(r.total) << ',' << format_double(r.l_rg) << ','
            << format_double(r.d_ot) << ',' << format_double(r.marginal_violation) << ','
            << format_double(r.ce_f1) << ',' << format_double(r.silhouette) << '\n';
    }
    write_text(path, out.str());
}

// ---------------------------------------------------------------------------
// Contrastive pretraining
// ---------------------------------------------------------------------------

ContrastiveResult pretrain_contrastive(const Dataset& data, const ContrastiveConfig& cfg) {
    if (cfg.sigma < 0.0) throw ValidationError("pretrain: sigma must be >= 0");
    if (!(cfg.tau > 0.0)) throw ValidationError("pretrain: tau must be > 0");
    if (cfg.batch_size == 0) throw ValidationError("pretrain: batch_size must be >= 1");
    if (data.samples.empty()) throw ValidationError("pretrain: empty dataset");

    SeededRng root(cfg.seed);
    const std::size_t n = data.samples.size();
    const std::size_t d_in = data.config.image_dim;
    const std::size_t d_out = cfg.encoder_dim ? cfg.encoder_dim : d_in;

    auto init_rng = root.child("encoder-init");
    ProjectionHead encoder = ProjectionHead::init(d_out, d_in, init_rng);

    Matrix pooled = pooled_features(data, nullptr);

    // One fixed noise vector per sample and one fixed batch order: an lr = 0
    // run then sees identical losses every epoch.
    Matrix noise(n, d_out);
    for (std::size_t s = 0; s < n; ++s) {
        auto nrng = root.child("noise-" + std::to_string(s));
        Vector v = gaussian_sample(nrng, d_out, 0.0, cfg.sigma);
        std::copy(v.begin(), v.end(), noise.row(s).begin());
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto order_rng = root.child("batch-order");
    shuffle_indices(order, order_rng);
    auto batches = fixed_batches(order, cfg.batch_size);

    InfonceOptions opts = cfg.infonce;
    opts.tau = cfg.tau;

    ContrastiveResult result;
    result.loss_trace.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Vector batch_losses;
        batch_losses.reserve(batches.size());
        for (const auto& batch : batches) {
            ContrastiveBatch cb;
            cb.anchors = Matrix(batch.size(), d_out);
            cb.positives = Matrix(batch.size(), d_out);
            for (std::size_t i = 0; i < batch.size(); ++i) {
                Vector a = project_row(encoder, pooled.row(batch[i]));
                auto nrow = noise.row(batch[i]);
                for (std::size_t j = 0; j < d_out; ++j) {
                    cb.anchors(i, j) = a[j];
                    cb.positives(i, j) = a[j] + nrow[j];
                }
            }
            LossValue loss = infonce_ircp(cb, opts);
            if (!std::isfinite(loss.value)) {
                throw TrainingError("contrastive pretraining diverged at epoch " + std::to_string(epoch + 1));
            }
            batch_losses.push_back(loss.value);

            const Matrix& ga = loss.gradients.at("anchors");
            const Matrix& gp = loss.gradients.at("positives");
            ProjectionGrad grad(encoder);
            for (std::size_t i = 0; i < batch.size(); ++i) {
                Vector da(d_out, 0.0);
                for (std::size_t j = 0; j < d_out; ++j) da[j] = ga(i, j) + gp(i, j); // positive = anchor + const
                add_outer(grad.weight, da, pooled.row(batch[i]), 1.0);
                for (std::size_t j = 0; j < d_out; ++j) grad.bias[j] += da[j];
            }
            sgd_step(encoder.weight, grad.weight, cfg.lr);
            sgd_step(encoder.bias, grad.bias, cfg.lr);
        }
        check_finite_params(encoder.weight.data(), "contrastive pretraining");
        result.loss_trace.push_back(compensated_mean(batch_losses));
    }
    result.encoder = std::move(encoder);
    return result;
}

// ---------------------------------------------------------------------------
// Alignment training
// ---------------------------------------------------------------------------

void AlignmentConfig::validate() const {
    if (!(epsilon > 0.0)) throw ValidationError("alignment: epsilon must be > 0");
    if (ot_iters == 0) throw ValidationError("alignment: ot_iters must be >= 1");
    if (lambda < 0.0) throw ValidationError("alignment: lambda must be >= 0");
    if (lr < 0.0) throw ValidationError("alignment: lr must be >= 0");
    if (epochs == 0) throw ValidationError("alignment: epochs must be >= 1");
    if (batch_size == 0) throw ValidationError("alignment: batch_size must be >= 1");
    if (embed_dim < 2) throw ValidationError("alignment: embed_dim must be >= 2");
    if (lora_rank == 0) throw ValidationError("alignment: lora_rank must be >= 1");
}

Checkpoint state_to_checkpoint(const TrainState& state) {
    Checkpoint ck;
    ck.groups.emplace("image_head.weight", state.image_head.weight);
    ck.groups.emplace("image_head.bias", Matrix(1, state.image_head.bias.size(), state.image_head.bias));
    ck.groups.emplace("label_head.weight", state.label_head.weight);
    ck.groups.emplace("label_head.bias", Matrix(1, state.label_head.bias.size(), state.label_head.bias));
    ck.groups.emplace("sentinel.start", Matrix(1, state.sentinels.start.size(), state.sentinels.start));
    ck.groups.emplace("sentinel.junction", Matrix(1, state.sentinels.junction.size(), state.sentinels.junction));
    ck.groups.emplace("sentinel.end", Matrix(1, state.sentinels.end.size(), state.sentinels.end));
    ck.groups.emplace("generator.base_weight", state.generator.map.base_weight);
    ck.groups.emplace("generator.lora_a", state.generator.map.a);
    ck.groups.emplace("generator.lora_b", state.generator.map.b);
    ck.meta["vocab_size"] = static_cast<double>(state.generator.vocab_size);
    ck.meta["max_len"] = static_cast<double>(state.generator.max_len);
    return ck;
}

TrainState state_from_checkpoint(const Checkpoint& ck) {
    auto vec = [&](const std::string& name) {
        const Matrix& m = ck.groups.at(name);
        return Vector(m.data());
    };
    TrainState state;
    state.image_head.weight = ck.groups.at("image_head.weight");
    state.image_head.bias = vec("image_head.bias");
    state.label_head.weight = ck.groups.at("label_head.weight");
    state.label_head.bias = vec("label_head.bias");
    state.sentinels.start = vec("sentinel.start");
    state.sentinels.junction = vec("sentinel.junction");
    state.sentinels.end = vec("sentinel.end");
    state.generator.map.base_weight = ck.groups.at("generator.base_weight");
    state.generator.map.a = ck.groups.at("generator.lora_a");
    state.generator.map.b = ck.groups.at("generator.lora_b");
    state.generator.vocab_size = static_cast<std::size_t>(ck.meta.at("vocab_size"));
    state.generator.max_len = static_cast<std::size_t>(ck.meta.at("max_len"));
    return state;
}

namespace {

struct BatchLayout {
    Matrix image_raw; // stacked raw patch rows
    Matrix label_raw; // stacked raw label rows
    std::vector<std::size_t> image_offset, image_count;
    std::vector<std::size_t> label_offset, label_count;
};

BatchLayout gather_batch(const Dataset& data, std::span<const std::size_t> batch) {
    BatchLayout layout;
    std::size_t total_img = 0, total_lbl = 0;
    for (std::size_t idx : batch) {
        layout.image_offset.push_back(total_img);
        layout.image_count.push_back(data.samples[idx].image_rows.rows());
        total_img += data.samples[idx].image_rows.rows();
        layout.label_offset.push_back(total_lbl);
        layout.label_count.push_back(data.samples[idx].label_rows.rows());
        total_lbl += data.samples[idx].label_rows.rows();
    }
    layout.image_raw = Matrix(total_img, data.config.image_dim);
    layout.label_raw = Matrix(total_lbl, data.config.label_dim);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& s = data.samples[batch[i]];
        for (std::size_t r = 0; r < s.image_rows.rows(); ++r) {
            auto src = s.image_rows.row(r);
            std::copy(src.begin(), src.end(), layout.image_raw.row(layout.image_offset[i] + r).begin());
        }
        for (std::size_t r = 0; r < s.label_rows.rows(); ++r) {
            auto src = s.label_rows.row(r);
            std::copy(src.begin(), src.end(), layout.label_raw.row(layout.label_offset[i] + r).begin());
        }
    }
    return layout;
}

// d(ot)/d(projected rows) with the plan held fixed: the cost entry is the
// Euclidean distance, so each plan entry pulls its endpoints together.
void accumulate_ot_cost_grad(const Matrix& plan, const Matrix& cost, const Matrix& p, const Matrix& q, double scale,
                             Matrix& dp, Matrix& dq, std::size_t p_row0 = 0, std::size_t q_row0 = 0) {
    for (std::size_t i = 0; i < plan.rows(); ++i) {
        for (std::size_t j = 0; j < plan.cols(); ++j) {
            double c = cost(i, j);
            if (c <= 1e-12) continue;
            double w = scale * plan(i, j) / c;
            if (w == 0.0) continue;
            auto pi = p.row(i);
            auto qj = q.row(j);
            auto dpi = dp.row(p_row0 + i);
            auto dqj = dq.row(q_row0 + j);
            for (std::size_t k = 0; k < pi.size(); ++k) {
                double diff = w * (pi[k] - qj[k]);
                dpi[k] += diff;
                dqj[k] -= diff;
            }
        }
    }
}

struct EpochStats {
    Vector l_rg, d_ot, violation;
};

} // namespace

AlignmentResult train_alignment(const Dataset& data, const AlignmentConfig& cfg) {
    cfg.validate();
    if (data.samples.empty()) throw ValidationError("alignment: empty dataset");

    SeededRng root(cfg.seed);
    TrainState st;
    {
        auto r = root.child("image-head");
        st.image_head = ProjectionHead::init(cfg.embed_dim, data.config.image_dim, r);
    }
    {
        auto r = root.child("label-head");
        st.label_head = ProjectionHead::init(cfg.embed_dim, data.config.label_dim, r);
    }
    {
        auto r = root.child("sentinels");
        st.sentinels = SentinelVectors::init(cfg.embed_dim, r);
    }
    {
        auto r = root.child("generator");
        st.generator = TokenGenerator::init(data.vocab.size(), data.max_report_len(), cfg.embed_dim, cfg.lora_rank, r);
    }

    SplitIndices split = split_indices(data.samples.size(), cfg.seed);
    std::vector<std::size_t> order = split.train;
    auto order_rng = root.child("batch-order");
    shuffle_indices(order, order_rng);
    auto batches = fixed_batches(order, cfg.batch_size);

    AlignmentResult result;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochStats stats;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& batch = batches[b];
            BatchLayout layout = gather_batch(data, batch);
            Matrix p = project(st.image_head, layout.image_raw);
            Matrix q = project(st.label_head, layout.label_raw);

            Matrix dp(p.rows(), p.cols());
            Matrix dq(q.rows(), q.cols());
            Matrix grad_a(st.generator.map.a.rows(), st.generator.map.a.cols());
            Matrix grad_b(st.generator.map.b.rows(), st.generator.map.b.cols());
            Vector grad_start(cfg.embed_dim, 0.0), grad_junction(cfg.embed_dim, 0.0), grad_end(cfg.embed_dim, 0.0);

            const double inv_bs = 1.0 / static_cast<double>(batch.size());

            // Token NLL per sample through the fused prompt.
            Vector sample_nll(batch.size(), 0.0);
            for (std::size_t i = 0; i < batch.size(); ++i) {
                Matrix p_block = rows_subset(p, layout.image_offset[i], layout.image_count[i]);
                Matrix q_block = rows_subset(q, layout.label_offset[i], layout.label_count[i]);
                FusedPrompt fused = fuse_prompt(p_block, q_block, st.sentinels);
                GeneratorBackward gb =
                    generator_nll_backward(st.generator, fused, data.samples[batch[i]].report_tokens);
                sample_nll[i] = gb.nll;

                for (std::size_t x = 0; x < grad_a.size(); ++x) grad_a.data()[x] += inv_bs * gb.grad_a.data()[x];
                for (std::size_t x = 0; x < grad_b.size(); ++x) grad_b.data()[x] += inv_bs * gb.grad_b.data()[x];

                double row_scale = inv_bs / static_cast<double>(fused.rows.rows());
                for (std::size_t k = 0; k < cfg.embed_dim; ++k) {
                    double g = row_scale * gb.grad_pooled[k];
                    grad_start[k] += g;
                    grad_junction[k] += g;
                    grad_end[k] += g;
                    for (std::size_t r = 0; r < layout.image_count[i]; ++r) dp(layout.image_offset[i] + r, k) += g;
                    for (std::size_t r = 0; r < layout.label_count[i]; ++r) dq(layout.label_offset[i] + r, k) += g;
                }
            }
            double l_rg = compensated_mean(sample_nll);

            // OT distance and its envelope gradient through the cost matrix.
            double d_ot = 0.0;
            double violation = 0.0;
            if (cfg.per_sample_ot) {
                Vector per_sample(batch.size(), 0.0);
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    Matrix p_block = rows_subset(p, layout.image_offset[i], layout.image_count[i]);
                    Matrix q_block = rows_subset(q, layout.label_offset[i], layout.label_count[i]);
                    Matrix cost = pairwise_euclidean(p_block, q_block);
                    SinkhornResult res;
                    try {
                        res = sinkhorn(OtProblem::uniform(cost, cfg.epsilon, cfg.ot_iters, cfg.ot_tol));
                    } catch (const SolverError& e) {
                        throw SolverError(std::string(e.what()) + " (batch " + std::to_string(b) + ")");
                    }
                    per_sample[i] = cfg.ot_linear_only ? res.linear_term : res.distance;
                    violation = std::max(violation, res.marginal_violation);
                    accumulate_ot_cost_grad(res.plan, cost, p_block, q_block, cfg.lambda * inv_bs, dp, dq,
                                            layout.image_offset[i], layout.label_offset[i]);
                }
                d_ot = compensated_mean(per_sample);
            } else {
                Matrix cost = pairwise_euclidean(p, q);
                SinkhornResult res;
                try {
                    res = sinkhorn(OtProblem::uniform(cost, cfg.epsilon, cfg.ot_iters, cfg.ot_tol));
                } catch (const SolverError& e) {
                    throw SolverError(std::string(e.what()) + " (batch " + std::to_string(b) + ")");
                }
                d_ot = cfg.ot_linear_only ? res.linear_term : res.distance;
                violation = res.marginal_violation;
                accumulate_ot_cost_grad(res.plan, cost, p, q, cfg.lambda, dp, dq);
            }

            // Backprop through the heads and update everything; the generator
            // base stays frozen.
            ProjectionGrad gi(st.image_head), gl(st.label_head);
            project_backward(st.image_head, layout.image_raw, dp, gi);
            project_backward(st.label_head, layout.label_raw, dq, gl);

            sgd_step(st.image_head.weight, gi.weight, cfg.lr);
            sgd_step(st.image_head.bias, gi.bias, cfg.lr);
            sgd_step(st.label_head.weight, gl.weight, cfg.lr);
            sgd_step(st.label_head.bias, gl.bias, cfg.lr);
            sgd_step(st.sentinels.start, grad_start, cfg.lr);
            sgd_step(st.sentinels.junction, grad_junction, cfg.lr);
            sgd_step(st.sentinels.end, grad_end, cfg.lr);
            sgd_step(st.generator.map.a, grad_a, cfg.lr);
            sgd_step(st.generator.map.b, grad_b, cfg.lr);

            if (!std::isfinite(l_rg) || !std::isfinite(d_ot)) {
                throw TrainingError("alignment training diverged at epoch " + std::to_string(epoch + 1));
            }
            stats.l_rg.push_back(l_rg);
            stats.d_ot.push_back(d_ot);
            stats.violation.push_back(violation);
        }
        check_finite_params(st.image_head.weight.data(), "alignment training");
        check_finite_params(st.label_head.weight.data(), "alignment training");

        AlignmentEval eval = evaluate_alignment(data, st, cfg, SplitPart::Val);
        TrainHistoryRow row;
        row.l_rg = compensated_mean(stats.l_rg);
        row.d_ot = compensated_mean(stats.d_ot);
        row.total = total_loss(row.l_rg, row.d_ot, cfg.lambda);
        row.marginal_violation = compensated_mean(stats.violation);
        row.ce_f1 = eval.ce_f1;
        row.silhouette = eval.silhouette;
        result.history.rows.push_back(row);
    }
    result.state = std::move(st);
    return result;
}

AlignmentEval evaluate_alignment(const Dataset& data, const TrainState& state, const AlignmentConfig& cfg,
                                 SplitPart part) {
    SplitIndices split = split_indices(data.samples.size(), cfg.seed);
    const std::vector<std::size_t>& indices =
        part == SplitPart::Train ? split.train : (part == SplitPart::Val ? split.val : split.test);
    if (indices.empty()) throw ValidationError("evaluate_alignment: empty split");

    // Stack the split's projected rows for the OT solve and the silhouette.
    std::size_t total_img = 0, total_lbl = 0;
    for (std::size_t idx : indices) {
        total_img += data.samples[idx].image_rows.rows();
        total_lbl += data.samples[idx].label_rows.rows();
    }
    Matrix image_raw(total_img, data.config.image_dim);
    Matrix label_raw(total_lbl, data.config.label_dim);
    std::vector<std::size_t> row_ids;
    row_ids.reserve(total_img);
    std::size_t ir = 0, lr = 0;
    for (std::size_t idx : indices) {
        const auto& s = data.samples[idx];
        for (std::size_t r = 0; r < s.image_rows.rows(); ++r) {
            auto src = s.image_rows.row(r);
            std::copy(src.begin(), src.end(), image_raw.row(ir++).begin());
            row_ids.push_back(s.dominant_disease);
        }
        for (std::size_t r = 0; r < s.label_rows.rows(); ++r) {
            auto src = s.label_rows.row(r);
            std::copy(src.begin(), src.end(), label_raw.row(lr++).begin());
        }
    }

    Matrix p = project(state.image_head, image_raw);
    Matrix q = project(state.label_head, label_raw);
    Matrix cost = pairwise_euclidean(p, q);
    SinkhornResult res = sinkhorn(OtProblem::uniform(std::move(cost), cfg.epsilon, cfg.ot_iters, cfg.ot_tol));

    AlignmentEval eval;
    eval.d_ot = cfg.ot_linear_only ? res.linear_term : res.distance;
    eval.linear_term = res.linear_term;
    eval.marginal_violation = res.marginal_violation;

    std::size_t distinct = 0;
    {
        std::vector<std::size_t> sorted = row_ids;
        std::sort(sorted.begin(), sorted.end());
        distinct = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    }
    eval.silhouette = distinct >= 2 ? silhouette(p, row_ids) : 0.0;

    // Quick classifier on the train split's aligned pooled features,
    // standardized so the comparison is insensitive to feature scale.
    Matrix feats = standardize_features(pooled_features(data, &state.image_head), split.train);
    auto onehots = onehot_targets(data);
    ClassifierConfig qc;
    qc.gamma = 2.0;
    qc.lr = 0.5;
    qc.epochs = cfg.eval_clf_epochs;
    qc.batch_size = 32;
    qc.seed = SeededRng(cfg.seed).child("eval-classifier").seed();
    LabelClassifier clf = fit_quick_classifier(feats, onehots, split.train, qc);
    std::vector<DiseaseLabelSet> labels;
    labels.reserve(data.samples.size());
    for (const auto& s : data.samples) labels.push_back(s.labels);
    eval.ce_f1 = classifier_f1(clf, feats, labels, indices);
    return eval;
}

// ---------------------------------------------------------------------------
// Label classifier training
// ---------------------------------------------------------------------------

void ClassifierConfig::validate() const {
    if (gamma < 0.0) throw ValidationError("classifier: gamma must be >= 0");
    if (lr < 0.0) throw ValidationError("classifier: lr must be >= 0");
    if (epochs == 0) throw ValidationError("classifier: epochs must be >= 1");
    if (batch_size == 0) throw ValidationError("classifier: batch_size must be >= 1");
}

ClassifierResult train_classifier(const Dataset& data, const ClassifierConfig& cfg) {
    Matrix feats = pooled_features(data, nullptr);
    std::vector<DiseaseLabelSet> labels;
    labels.reserve(data.samples.size());
    for (const auto& s : data.samples) labels.push_back(s.labels);
    return train_classifier_on_features(feats, labels, cfg, split_indices(data.samples.size(), cfg.seed));
}

ClassifierResult train_classifier_on_features(const Matrix& features, std::span<const DiseaseLabelSet> labels,
                                              const ClassifierConfig& cfg, const SplitIndices& split) {
    cfg.validate();
    if (features.rows() != labels.size()) throw ValidationError("classifier: features/labels length mismatch");
    if (features.rows() == 0) throw ValidationError("classifier: empty input");

    std::vector<LabelVector> onehots;
    onehots.reserve(labels.size());
    for (const auto& l : labels) onehots.push_back(encode_onehot(l));

    SeededRng root(cfg.seed);
    auto init_rng = root.child("classifier-init");
    LabelClassifier clf = LabelClassifier::init(features.cols(), cfg.hidden_dim, init_rng);

    std::vector<std::size_t> order = split.train;
    auto order_rng = root.child("batch-order");
    shuffle_indices(order, order_rng);
    auto batches = fixed_batches(order, cfg.batch_size);

    ClassifierResult result;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss = classifier_epoch(clf, features, onehots, batches, cfg.gamma, cfg.lr);
        TrainHistoryRow row;
        row.total = loss;
        row.ce_f1 = split.val.empty() ? 0.0 : classifier_f1(clf, features, labels, split.val);
        result.history.rows.push_back(row);
    }
    result.classifier = std::move(clf);
    return result;
}

Matrix pooled_features(const Dataset& data, const ProjectionHead* head) {
    if (data.samples.empty()) throw ValidationError("pooled_features: empty dataset");
    std::size_t dim = head ? head->out_dim() : data.config.image_dim;
    Matrix out(data.samples.size(), dim);
    for (std::size_t s = 0; s < data.samples.size(); ++s) {
        Matrix rows = head ? project(*head, data.samples[s].image_rows) : data.samples[s].image_rows;
        auto dst = out.row(s);
        for (std::size_t r = 0; r < rows.rows(); ++r) {
            auto src = rows.row(r);
            for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
        }
        double inv = 1.0 / static_cast<double>(rows.rows());
        for (std::size_t j = 0; j < dim; ++j) dst[j] *= inv;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Silhouette
// ---------------------------------------------------------------------------

double silhouette(const Matrix& points, std::span<const std::size_t> cluster_ids) {
    const std::size_t n = points.rows();
    if (cluster_ids.size() != n) throw ValidationError("silhouette: id count mismatch");
    std::map<std::size_t, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < n; ++i) clusters[cluster_ids[i]].push_back(i);
    if (clusters.size() < 2) throw ValidationError("silhouette: need at least two clusters");

    Matrix dist(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = l2_distance(points.row(i), points.row(j));
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }

    Vector scores(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& own = clusters[cluster_ids[i]];
        if (own.size() <= 1) {
            scores[i] = 0.0; // singleton convention
            continue;
        }
        double a = 0.0;
        for (std::size_t j : own) {
            if (j != i) a += dist(i, j);
        }
        a /= static_cast<double>(own.size() - 1);

        double b = std::numeric_limits<double>::infinity();
        for (const auto& [id, members] : clusters) {
            if (id == cluster_ids[i]) continue;
            double m = 0.0;
            for (std::size_t j : members) m += dist(i, j);
            m /= static_cast<double>(members.size());
            b = std::min(b, m);
        }
        double denom = std::max(a, b);
        scores[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return compensated_mean(scores);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

namespace {

SweepRow run_sweep_setting(const Dataset& data, const AlignmentConfig& cfg, double swept_value) {
    AlignmentResult res = train_alignment(data, cfg);
    AlignmentEval eval = evaluate_alignment(data, res.state, cfg, SplitPart::Val);
    SweepRow row;
    row.swept_value = swept_value;
    row.total = res.history.rows.back().total;
    row.l_rg = res.history.rows.back().l_rg;
    row.d_ot = eval.d_ot;
    row.linear_term = eval.linear_term;
    row.marginal_violation = eval.marginal_violation;
    row.ce_f1 = eval.ce_f1;
    row.silhouette = eval.silhouette;
    return row;
}

std::vector<SweepRow> run_sweep(const Dataset& data, const std::vector<AlignmentConfig>& configs,
                                const std::vector<double>& values, unsigned max_threads) {
    std::vector<SweepRow> rows(configs.size());
    unsigned workers =
        max_threads == 0 ? 1u : std::min<unsigned>(max_threads, static_cast<unsigned>(configs.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < configs.size(); ++i) rows[i] = run_sweep_setting(data, configs[i], values[i]);
        return rows;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                while (true) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= configs.size()) break;
                    rows[i] = run_sweep_setting(data, configs[i], values[i]);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return rows;
}

} // namespace

std::vector<SweepRow> sweep_iters(const Dataset& data, const AlignmentConfig& base,
                                  std::span<const std::size_t> iters_list, unsigned max_threads) {
    if (iters_list.empty()) throw ValidationError("sweep_iters: empty list");
    std::vector<AlignmentConfig> configs;
    std::vector<double> values;
    for (std::size_t t : iters_list) {
        AlignmentConfig cfg = base;
        cfg.ot_iters = t;
        cfg.ot_tol = 0.0; // fixed iteration count
        configs.push_back(cfg);
        values.push_back(static_cast<double>(t));
    }
    return run_sweep(data, configs, values, max_threads);
}

std::vector<SweepRow> sweep_epsilon(const Dataset& data, const AlignmentConfig& base,
                                    std::span<const double> eps_list, unsigned max_threads) {
    if (eps_list.empty()) throw ValidationError("sweep_epsilon: empty list");
    std::vector<AlignmentConfig> configs;
    std::vector<double> values;
    for (double e : eps_list) {
        AlignmentConfig cfg = base;
        cfg.epsilon = e;
        configs.push_back(cfg);
        values.push_back(e);
    }
    return run_sweep(data, configs, values, max_threads);
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows,
                     std::string_view value_name) {
    std::ostringstream out;
    out << value_name << ",total,l_rg,d_ot,linear_term,marginal_violation,ce_f1,silhouette\n";
    for (const auto& r : rows) {
        out << format_double(r.swept_value) << ',' << format_double(r.total) << ',' << format_double(r.l_rg) << ','
            << format_double(r.d_ot) << ',' << format_double(r.linear_term) << ','
            << format_double(r.marginal_violation) << ',' << format_double(r.ce_f1) << ','
            << format_double(r.silhouette) << '\n';
    }
    write_text(path, out.str());
}

} // namespace otalign
