// Command-line front end: data generation, single OT solves, training,
// sweeps, evaluation and plan export. Machine-readable results go to stdout
// and files; summaries go to stderr. Exit codes: 0 success, 1 runtime/IO
// error, 2 validation error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "otalign/csv_io.hpp"
#include "otalign/error.hpp"
#include "otalign/label_codec.hpp"
#include "otalign/model.hpp"
#include "otalign/ot_core.hpp"
#include "otalign/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace otalign;

namespace {

// ---------------------------------------------------------------------------
// Output directory guard: anything written by a failed command is removed.
// ---------------------------------------------------------------------------

class OutputGuard {
public:
    explicit OutputGuard(fs::path dir) : dir_(std::move(dir)) {
        existed_ = fs::exists(dir_);
        if (!existed_) {
            std::error_code ec;
            fs::create_directories(dir_, ec);
            if (ec) throw IoError("cannot create output directory " + dir_.string());
        }
    }

    ~OutputGuard() {
        if (committed_) return;
        std::error_code ec;
        if (!existed_) {
            fs::remove_all(dir_, ec);
        } else {
            for (const auto& f : written_) fs::remove(f, ec);
        }
    }

    const fs::path& dir() const { return dir_; }

    fs::path file(const std::string& name) {
        fs::path p = dir_ / name;
        written_.push_back(p);
        return p;
    }

    void track_tree() {
        for (const auto& entry : fs::recursive_directory_iterator(dir_)) {
            if (entry.is_regular_file()) written_.push_back(entry.path());
        }
    }

    void commit() { committed_ = true; }

private:
    fs::path dir_;
    bool existed_ = false;
    bool committed_ = false;
    std::vector<fs::path> written_;
};

// ---------------------------------------------------------------------------
// Parameter resolution: defaults < --config file < --from-config run.json <
// explicit flags. The resolved values (minus paths under --out) become
// run.json, so a run can be replayed from it.
// ---------------------------------------------------------------------------

json parse_kv_config(const fs::path& path) {
    json out = json::object();
    for (const auto& raw : read_lines(path)) {
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ValidationError("config line missing '=': '" + std::string(line) + "'");
        }
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        char* end = nullptr;
        double num = std::strtod(value.c_str(), &end);
        if (!value.empty() && end == value.c_str() + value.size()) {
            out[key] = num;
        } else if (value == "true" || value == "false") {
            out[key] = (value == "true");
        } else {
            out[key] = value;
        }
    }
    return out;
}

struct ParamResolver {
    json config_file = json::object();
    json from_config = json::object();
    json resolved = json::object();

    void load(const std::string& config_path, const std::string& from_config_path) {
        if (!config_path.empty()) config_file = parse_kv_config(config_path);
        if (!from_config_path.empty()) {
            std::ifstream in(from_config_path);
            if (!in) throw IoError("cannot open " + from_config_path);
            json run;
            try {
                in >> run;
            } catch (const json::exception& e) {
                throw ValidationError("bad run config JSON: " + std::string(e.what()));
            }
            from_config = run.contains("params") ? run.at("params") : run;
        }
    }

    template <typename T>
    void apply(const std::string& key, T& var, const CLI::Option* opt) {
        if (opt == nullptr || opt->count() == 0) {
            try {
                if (from_config.contains(key)) {
                    var = from_config.at(key).get<T>();
                } else if (config_file.contains(key)) {
                    var = config_file.at(key).get<T>();
                }
            } catch (const json::exception& e) {
                throw ValidationError("bad value for '" + key + "': " + e.what());
            }
        }
        resolved[key] = var;
    }
};

void write_run_json(OutputGuard& out, const std::string& command, const json& params) {
    json run;
    run["command"] = command;
    run["params"] = params;
    write_text(out.file("run.json"), run.dump(2) + "\n");
}

std::vector<std::string> index_ids(const std::string& prefix, std::size_t n) {
    std::vector<std::string> ids;
    ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
    return ids;
}

unsigned sweep_threads(std::size_t runs) {
    unsigned cap = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("OTALIGN_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) cap = static_cast<unsigned>(v);
    }
    return std::min<unsigned>(cap, static_cast<unsigned>(runs));
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
    std::vector<std::size_t> out;
    for (const auto& cell : split(csv, ',')) {
        long long v = parse_int(cell);
        if (v < 1) throw ValidationError("list entries must be >= 1: " + csv);
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::vector<std::size_t> parse_index_list(const std::string& csv) {
    std::vector<std::size_t> out;
    for (const auto& cell : split(csv, ',')) {
        long long v = parse_int(cell);
        if (v < 0) throw ValidationError("indices must be >= 0: " + csv);
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    for (const auto& cell : split(csv, ',')) out.push_back(parse_double(cell));
    return out;
}

// Alignment hyperparameters shared by train, sweep and eval.
struct TrainFlags {
    double epsilon = 0.10;
    std::size_t iters = 100;
    double tol = 1e-9;
    double lambda = 1.0;
    double lr = 1e-2;
    std::size_t epochs = 20;
    std::size_t batch = 32;
    std::size_t embed_dim = 64;
    std::size_t rank = 4;
    std::uint64_t seed = 1;
    bool per_sample_ot = false;
    bool linear_only = false;
    std::size_t eval_clf_epochs = 25;

    CLI::Option *o_epsilon = nullptr, *o_iters = nullptr, *o_tol = nullptr, *o_lambda = nullptr, *o_lr = nullptr,
                *o_epochs = nullptr, *o_batch = nullptr, *o_embed = nullptr, *o_rank = nullptr, *o_seed = nullptr,
                *o_per_sample = nullptr, *o_linear = nullptr, *o_eval_clf = nullptr;

    // The sweep subcommand owns --epsilon/--iters as list flags; it skips the
    // scalar registrations and resolves them from config files only.
    void add_to(CLI::App* cmd, bool with_ot_scalars = true) {
        if (with_ot_scalars) {
            o_epsilon = cmd->add_option("--epsilon", epsilon, "Entropic regularization weight");
            o_iters = cmd->add_option("--iters", iters, "Sinkhorn iteration budget");
        }
        o_tol = cmd->add_option("--tol", tol, "Marginal tolerance for early stop (<= 0 disables)");
        o_lambda = cmd->add_option("--lambda", lambda, "OT loss weight");
        o_lr = cmd->add_option("--lr", lr, "Learning rate");
        o_epochs = cmd->add_option("--epochs", epochs, "Training epochs");
        o_batch = cmd->add_option("--batch", batch, "Batch size");
        o_embed = cmd->add_option("--embed-dim", embed_dim, "Shared embedding dimension");
        o_rank = cmd->add_option("--rank", rank, "Low-rank adapter rank");
        o_seed = cmd->add_option("--seed", seed, "Training seed");
        o_per_sample = cmd->add_flag("--per-sample-ot", per_sample_ot, "Solve OT per sample instead of per batch");
        o_linear = cmd->add_flag("--linear-only", linear_only, "Use only the linear OT term in the loss");
        o_eval_clf = cmd->add_option("--eval-clf-epochs", eval_clf_epochs, "Quick classifier epochs for CE F1");
    }

    void resolve(ParamResolver& r) {
        r.apply("epsilon", epsilon, o_epsilon);
        r.apply("iters", iters, o_iters);
        r.apply("tol", tol, o_tol);
        r.apply("lambda", lambda, o_lambda);
        r.apply("lr", lr, o_lr);
        r.apply("epochs", epochs, o_epochs);
        r.apply("batch", batch, o_batch);
        r.apply("embed_dim", embed_dim, o_embed);
        r.apply("rank", rank, o_rank);
        r.apply("seed", seed, o_seed);
        r.apply("per_sample_ot", per_sample_ot, o_per_sample);
        r.apply("linear_only", linear_only, o_linear);
        r.apply("eval_clf_epochs", eval_clf_epochs, o_eval_clf);
    }

    AlignmentConfig to_config() const {
        AlignmentConfig cfg;
        cfg.epsilon = epsilon;
        cfg.ot_iters = iters;
        cfg.ot_tol = tol;
        cfg.lambda = lambda;
        cfg.lr = lr;
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.embed_dim = embed_dim;
        cfg.lora_rank = rank;
        cfg.seed = seed;
        cfg.per_sample_ot = per_sample_ot;
        cfg.ot_linear_only = linear_only;
        cfg.eval_clf_epochs = eval_clf_epochs;
        return cfg;
    }
};

json eval_to_json(const AlignmentEval& e) {
    return json{{"d_ot", e.d_ot},
                {"linear_term", e.linear_term},
                {"marginal_violation", e.marginal_violation},
                {"silhouette", e.silhouette},
                {"ce_f1", e.ce_f1}};
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_gen_data(ParamResolver& r, const std::string& out_dir, std::size_t samples, std::uint64_t seed,
                  std::size_t image_dim, std::size_t label_dim, std::size_t patches, std::size_t max_positives,
                  double spread, double separation, const std::string& diseases) {
    SyntheticDatasetConfig cfg;
    cfg.num_samples = samples;
    cfg.seed = seed;
    cfg.image_dim = image_dim;
    cfg.label_dim = label_dim;
    cfg.patches_per_sample = patches;
    cfg.max_positives = max_positives;
    cfg.cluster_spread = spread;
    cfg.cluster_separation = separation;
    cfg.diseases_active = parse_index_list(diseases);
    cfg.validate();

    Dataset data = gen_synthetic(cfg);
    OutputGuard out(out_dir);
    write_dataset(data, out.dir());
    out.track_tree();
    write_run_json(out, "gen-data", r.resolved);
    out.commit();
    std::cerr << "wrote " << data.samples.size() << " samples to " << out.dir().string() << "\n";
}

void cmd_sinkhorn(ParamResolver& r, const std::string& cost_path, const std::string& out_dir, double epsilon,
                  std::size_t iters, double tol) {
    Matrix cost = read_matrix_csv(cost_path);
    OtProblem problem = OtProblem::uniform(std::move(cost), epsilon, iters, tol);
    SinkhornResult res = sinkhorn(problem);

    OutputGuard out(out_dir);
    json result;
    result["distance"] = res.distance;
    result["linear_term"] = res.linear_term;
    result["iterations_run"] = res.iterations_run;
    result["marginal_violation"] = res.marginal_violation;
    write_text(out.file("result.json"), result.dump(2) + "\n");
    auto row_ids = index_ids("r", res.plan.rows());
    auto col_ids = index_ids("c", res.plan.cols());
    export_plan(res.plan, row_ids, col_ids, out.file("plan.csv"));
    write_run_json(out, "sinkhorn", r.resolved);
    out.commit();
    std::cout << result.dump() << "\n";
    std::cerr << "sinkhorn: " << res.iterations_run << " iterations, marginal violation "
              << format_double(res.marginal_violation) << "\n";
}

void cmd_pretrain(ParamResolver& r, const std::string& data_dir, const std::string& out_dir, double sigma, double tau,
                  double lr, std::size_t epochs, std::size_t batch, std::size_t encoder_dim, std::uint64_t seed) {
    Dataset data = read_dataset(data_dir);
    ContrastiveConfig cfg;
    cfg.sigma = sigma;
    cfg.tau = tau;
    cfg.lr = lr;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.encoder_dim = encoder_dim;
    cfg.seed = seed;
    ContrastiveResult res = pretrain_contrastive(data, cfg);

    OutputGuard out(out_dir);
    Checkpoint ck;
    ck.groups.emplace("encoder.weight", res.encoder.weight);
    ck.groups.emplace("encoder.bias", Matrix(1, res.encoder.bias.size(), res.encoder.bias));
    save_checkpoint(out.file("checkpoint.json"), ck);
    std::ostringstream trace;
    trace << "epoch,loss\n";
    for (std::size_t e = 0; e < res.loss_trace.size(); ++e) {
        trace << (e + 1) << ',' << format_double(res.loss_trace[e]) << '\n';
    }
    write_text(out.file("loss_trace.csv"), trace.str());
    write_run_json(out, "pretrain", r.resolved);
    out.commit();
    if (!res.loss_trace.empty()) {
        std::cerr << "pretraining loss: " << format_double(res.loss_trace.front()) << " -> "
                  << format_double(res.loss_trace.back()) << "\n";
    }
}

void cmd_train(ParamResolver& r, const std::string& data_dir, const std::string& out_dir, const TrainFlags& flags) {
    Dataset data = read_dataset(data_dir);
    AlignmentConfig cfg = flags.to_config();
    AlignmentResult res = train_alignment(data, cfg);
    AlignmentEval test_eval = evaluate_alignment(data, res.state, cfg, SplitPart::Test);

    OutputGuard out(out_dir);
    save_checkpoint(out.file("checkpoint.json"), state_to_checkpoint(res.state));
    write_history_csv(out.file("history.csv"), res.history);
    json result;
    const auto& last = res.history.rows.back();
    result["final"] = {{"total", last.total},
                       {"l_rg", last.l_rg},
                       {"d_ot", last.d_ot},
                       {"marginal_violation", last.marginal_violation},
                       {"ce_f1", last.ce_f1},
                       {"silhouette", last.silhouette}};
    result["test"] = eval_to_json(test_eval);
    write_text(out.file("result.json"), result.dump(2) + "\n");
    write_run_json(out, "train", r.resolved);
    out.commit();
    std::cout << result.dump() << "\n";
    std::cerr << "train: final d_ot " << format_double(last.d_ot) << ", test CE F1 "
              << format_double(test_eval.ce_f1) << "\n";
}

void cmd_classify(ParamResolver& r, const std::string& data_dir, const std::string& model_dir,
                  const std::string& out_dir, double gamma, double lr, std::size_t epochs, std::size_t batch,
                  std::size_t hidden, std::uint64_t seed) {
    Dataset data = read_dataset(data_dir);
    ClassifierConfig cfg;
    cfg.gamma = gamma;
    cfg.lr = lr;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.hidden_dim = hidden;
    cfg.seed = seed;

    ClassifierResult res;
    SplitIndices split = split_indices(data.samples.size(), cfg.seed);
    std::vector<DiseaseLabelSet> labels;
    for (const auto& s : data.samples) labels.push_back(s.labels);
    if (!model_dir.empty()) {
        TrainState state = state_from_checkpoint(load_checkpoint(fs::path(model_dir) / "checkpoint.json"));
        Matrix feats = pooled_features(data, &state.image_head);
        res = train_classifier_on_features(feats, labels, cfg, split);
    } else {
        res = train_classifier(data, cfg);
    }

    OutputGuard out(out_dir);
    Checkpoint ck;
    ck.groups.emplace("output.weight", res.classifier.output.weight);
    ck.groups.emplace("output.bias", Matrix(1, res.classifier.output.bias.size(), res.classifier.output.bias));
    if (res.classifier.has_hidden) {
        ck.groups.emplace("hidden.weight", res.classifier.hidden.weight);
        ck.groups.emplace("hidden.bias", Matrix(1, res.classifier.hidden.bias.size(), res.classifier.hidden.bias));
    }
    ck.meta["hidden_dim"] = static_cast<double>(hidden);
    save_checkpoint(out.file("checkpoint.json"), ck);
    write_history_csv(out.file("history.csv"), res.history);
    json result;
    result["final_loss"] = res.history.rows.back().total;
    result["val_ce_f1"] = res.history.rows.back().ce_f1;
    write_text(out.file("result.json"), result.dump(2) + "\n");
    write_run_json(out, "classify", r.resolved);
    out.commit();
    std::cout << result.dump() << "\n";
    std::cerr << "classify: val CE F1 " << format_double(res.history.rows.back().ce_f1) << "\n";
}

void cmd_sweep(ParamResolver& r, const std::string& data_dir, const std::string& out_dir, const TrainFlags& flags,
               const std::string& iters_csv, const std::string& eps_csv) {
    if (iters_csv.empty() == eps_csv.empty()) {
        throw ValidationError("sweep: give exactly one of --iters and --epsilon");
    }
    Dataset data = read_dataset(data_dir);
    AlignmentConfig base = flags.to_config();

    std::vector<SweepRow> rows;
    std::string value_name;
    if (!iters_csv.empty()) {
        auto iters = parse_size_list(iters_csv);
        rows = sweep_iters(data, base, iters, sweep_threads(iters.size()));
        value_name = "iters";
    } else {
        auto eps = parse_double_list(eps_csv);
        rows = sweep_epsilon(data, base, eps, sweep_threads(eps.size()));
        value_name = "epsilon";
    }

    OutputGuard out(out_dir);
    write_sweep_csv(out.file("sweep.csv"), rows, value_name);
    write_run_json(out, "sweep", r.resolved);
    out.commit();
    std::cerr << "sweep: " << rows.size() << " settings written\n";
}

void cmd_eval(ParamResolver& r, const std::string& pred_path, const std::string& truth_path,
              const std::string& model_dir, const std::string& data_dir, const std::string& out_dir,
              const std::string& policy, const TrainFlags& flags) {
    json result;
    if (!pred_path.empty() || !truth_path.empty()) {
        if (pred_path.empty() || truth_path.empty()) {
            throw ValidationError("eval: --pred and --truth must be given together");
        }
        auto pred = read_labels_csv(pred_path);
        auto truth = read_labels_csv(truth_path);
        PositivePolicy pp = PositivePolicy::PositiveOnly;
        if (policy == "uncertain-positive") {
            pp = PositivePolicy::UncertainAsPositive;
        } else if (policy != "positive-only") {
            throw ValidationError("eval: unknown --policy '" + policy + "'");
        }
        CeMetrics m = ce_metrics(pred, truth, pp);
        result = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
    } else if (!model_dir.empty() && !data_dir.empty()) {
        Dataset data = read_dataset(data_dir);
        TrainState state = state_from_checkpoint(load_checkpoint(fs::path(model_dir) / "checkpoint.json"));
        AlignmentEval eval = evaluate_alignment(data, state, flags.to_config(), SplitPart::Test);
        result = eval_to_json(eval);
    } else {
        throw ValidationError("eval: give --pred/--truth label CSVs or --model/--data");
    }

    if (!out_dir.empty()) {
        OutputGuard out(out_dir);
        write_text(out.file("metrics.json"), result.dump(2) + "\n");
        write_run_json(out, "eval", r.resolved);
        out.commit();
    }
    std::cout << result.dump() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-modal feature alignment by entropic optimal transport"};
    app.require_subcommand(1);

    int exit_code = 0;
    auto guard = [&exit_code](auto&& fn) {
        try {
            fn();
        } catch (const ValidationError& e) {
            std::cerr << "error: " << e.what() << "\n";
            exit_code = 2;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            exit_code = 1;
        }
    };

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
    static std::string gen_out, gen_config, gen_from, gen_diseases = "0,1,2,3,4,5";
    static std::size_t gen_samples = 200, gen_image_dim = 32, gen_label_dim = 24, gen_patches = 4, gen_maxpos = 2;
    static double gen_spread = 0.5, gen_separation = 10.0;
    static std::uint64_t gen_seed = 1;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--config", gen_config, "key=value config file");
    gen->add_option("--from-config", gen_from, "run.json from a previous run");
    auto* g_samples = gen->add_option("--samples", gen_samples, "Number of samples");
    auto* g_seed = gen->add_option("--seed", gen_seed, "Generator seed");
    auto* g_imgd = gen->add_option("--image-dim", gen_image_dim, "Raw image feature dimension");
    auto* g_lbld = gen->add_option("--label-dim", gen_label_dim, "Raw label feature dimension");
    auto* g_patches = gen->add_option("--patches", gen_patches, "Image rows per positive disease");
    auto* g_maxpos = gen->add_option("--max-positives", gen_maxpos, "Max positive diseases per sample");
    auto* g_spread = gen->add_option("--spread", gen_spread, "Cluster spread");
    auto* g_sep = gen->add_option("--separation", gen_separation, "Cluster separation");
    auto* g_dis = gen->add_option("--diseases", gen_diseases, "Comma-separated active disease indices");
    gen->callback([&] {
        guard([&] {
            ParamResolver r;
            r.load(gen_config, gen_from);
            r.apply("samples", gen_samples, g_samples);
            r.apply("seed", gen_seed, g_seed);
            r.apply("image_dim", gen_image_dim, g_imgd);
            r.apply("label_dim", gen_label_dim, g_lbld);
            r.apply("patches", gen_patches, g_patches);
            r.apply("max_positives", gen_maxpos, g_maxpos);
            r.apply("spread", gen_spread, g_spread);
            r.apply("separation", gen_separation, g_sep);
            r.apply("diseases", gen_diseases, g_dis);
            cmd_gen_data(r, gen_out, gen_samples, gen_seed, gen_image_dim, gen_label_dim, gen_patches, gen_maxpos,
                         gen_spread, gen_separation, gen_diseases);
        });
    });

    // ---- sinkhorn ----
    auto* sk = app.add_subcommand("sinkhorn", "Solve one entropic OT problem from a cost CSV");
    static std::string sk_cost, sk_out, sk_config, sk_from;
    static double sk_epsilon = 0.10, sk_tol = 1e-9;
    static std::size_t sk_iters = 100;
    auto* s_cost = sk->add_option("--cost", sk_cost, "Header-less cost matrix CSV");
    sk->add_option("--out", sk_out, "Output directory")->required();
    sk->add_option("--config", sk_config, "key=value config file");
    sk->add_option("--from-config", sk_from, "run.json from a previous run");
    auto* s_eps = sk->add_option("--epsilon", sk_epsilon, "Entropic regularization weight");
    auto* s_iters = sk->add_option("--iters", sk_iters, "Iteration budget");
    auto* s_tol = sk->add_option("--tol", sk_tol, "Marginal tolerance (<= 0 disables early stop)");
    sk->callback([&] {
        guard([&] {
            ParamResolver r;
            r.load(sk_config, sk_from);
            r.apply("cost", sk_cost, s_cost);
            r.apply("epsilon", sk_epsilon, s_eps);
            r.apply("iters", sk_iters, s_iters);
            r.apply("tol", sk_tol, s_tol);
            if (sk_cost.empty()) throw ValidationError("sinkhorn: --cost is required");
            cmd_sinkhorn(r, sk_cost, sk_out, sk_epsilon, sk_iters, sk_tol);
        });
    });

    // ---- pretrain ----
    auto* pre = app.add_subcommand("pretrain", "Contrastive pretraining of the toy encoder");
    static std::string pre_data, pre_out, pre_config, pre_from;
    static double pre_sigma = 0.1, pre_tau = 0.5, pre_lr = 1e-2;
    static std::size_t pre_epochs = 10, pre_batch = 32, pre_encdim = 0;
    static std::uint64_t pre_seed = 1;
    auto* p_data = pre->add_option("--data", pre_data, "Dataset directory");
    pre->add_option("--out", pre_out, "Output directory")->required();
    pre->add_option("--config", pre_config, "key=value config file");
    pre->add_option("--from-config", pre_from, "run.json from a previous run");
    auto* p_sigma = pre->add_option("--sigma", pre_sigma, "Noise standard deviation for positives");
    auto* p_tau = pre->add_option("--tau", pre_tau, "Temperature");
    auto* p_lr = pre->add_option("--lr", pre_lr, "Learning rate");
    auto* p_epochs = pre->add_option("--epochs", pre_epochs, "Epochs");
    auto* p_batch = pre->add_option("--batch", pre_batch, "Batch size");
    auto* p_enc = pre->add_option("--encoder-dim", pre_encdim, "Encoder output dim (0 keeps input dim)");
    auto* p_seed = pre->add_option("--seed", pre_seed, "Seed");
    pre->callback([&] {
        guard([&] {
            ParamResolver r;
            r.load(pre_config, pre_from);
            r.apply("data", pre_data, p_data);
            r.apply("sigma", pre_sigma, p_sigma);
            r.apply("tau", pre_tau, p_tau);
            r.apply("lr", pre_lr, p_lr);
            r.apply("epochs", pre_epochs, p_epochs);
            r.apply("batch", pre_batch, p_batch);
            r.apply("encoder_dim", pre_encdim, p_enc);
            r.apply("seed", pre_seed, p_seed);
            if (pre_data.empty()) throw ValidationError("pretrain: --data is required");
            cmd_pretrain(r, pre_data, pre_out, pre_sigma, pre_tau, pre_lr, pre_epochs, pre_batch, pre_encdim,
                         pre_seed);
        });
    });

    // ---- train ----
    auto* tr = app.add_subcommand("train", "Alignment training (projection heads + generator)");
    static std::string tr_data, tr_out, tr_config, tr_from;
    static TrainFlags tr_flags;
    auto* t_data = tr->add_option("--data", tr_data, "Dataset directory");
    tr->add_option("--out", tr_out, "Output directory")->required();
    tr->add_option("--config", tr_config, "key=value config file");
    tr->add_option("--from-config", tr_from, "run.json from a previous run");
    tr_flags.add_to(tr);
    tr->callback([&] {
        guard([&] {
            ParamResolver r;
            r.load(tr_config, tr_from);
            r.apply("data", tr_data, t_data);
            tr_flags.resolve(r);
            if (tr_data.empty()) throw ValidationError("train: --data is required");
            cmd_train(r, tr_data, tr_out, tr_flags);
        });
    });

    // ---- classify ----
    auto* cl = app.add_subcommand("classify", "Train the disease-label classifier");
    static std::string cl_data, cl_model, cl_out, cl_config, cl_from;
    static double cl_gamma = 2.0, cl_lr = 0.5;
    static std::size_t cl_epochs = 150, cl_batch = 32, cl_hidden = 0;
    static std::uint64_t cl_seed = 1;
    auto* c_data = cl->add_option("--data", cl_data, "Dataset directory");
    auto* c_model = cl->add_option("--model", cl_model, "Alignment run directory (use aligned features)");
    cl->add_option("--out", cl_out, "Output directory")->required();
    cl->add_option("--config", cl_config, "key=value config file");
    cl->add_option("--from-config", cl_from, "run.json from a previous run");
    auto* c_gamma = cl->add_option("--gamma", cl_gamma, "Focal exponent");
    auto* c_lr = cl->add_option("--lr", cl_lr, "Learning rate");
    auto* c_epochs = cl->add_option("--epochs", cl_epochs, "Epochs");
    auto* c_batch = cl->add_option("--batch", cl_batch, "Batch size");
    auto* c_hidden = cl->add_option("--hidden", cl_hidden, "Hidden layer width (0 = single affine)");
    auto* c_seed = cl->add_option("--seed", cl_seed, "Seed");
    cl->callback([&] {
        guard([&] {
            ParamResolver r;
            r.load(cl_config, cl_from);
            r.apply("data", cl_data, c_data);
            r.apply("model", cl_model, c_model);
            r.apply("gamma", cl_gamma, c_gamma);
            r.apply("lr", cl_lr, c_lr);
            r.apply("epochs", cl_epochs, c_epochs);
            r.apply("batch", cl_batch, c_batch);
            r.apply("hidden", cl_hidden, c_hidden);
            r.apply("seed", cl_seed, c_seed);
            if (cl_data.empty()) throw ValidationError("classify: --data is required");
            cmd_classify(r, cl_data, cl_model, cl_out, cl_gamma, cl_lr, cl_epochs, cl_batch, cl_hidden, cl_seed);
        });
    });

    // ---- sweep ----
    auto* sw = app.add_subcommand("sweep", "Ablation sweep over OT iterations or epsilon");
    static std::string sw_data, sw_out, sw_config, sw_from, sw_iters, sw_eps;
    static TrainFlags sw_flags;
    auto* w_data = sw->add_option("--data", sw_data, "Dataset directory");
    sw->add_option("--out", sw_out, "Output directory")->required();
    sw->add_option("--config", sw_config, "key=value config file");
    sw->add_option("--from-config", sw_from, "run.json from a previous run");
    auto* w_iters = sw->add_option("--iters", sw_iters, "Comma-separated iteration counts");
    auto* w_eps = sw->add_option("--epsilon", sw_eps, "Comma-separated epsilon values");
    sw_flags.add_to(sw, /*with_ot_scalars=*/false);
    sw->callback([&] {
        guard([&] {
            ParamResolver r;
            r.load(sw_config, sw_from);
            r.apply("data", sw_data, w_data);
            r.apply("iters_list", sw_iters, w_iters);
            r.apply("epsilon_list", sw_eps, w_eps);
            sw_flags.resolve(r);
            if (sw_data.empty()) throw ValidationError("sweep: --data is required");
            cmd_sweep(r, sw_data, sw_out, sw_flags, sw_iters, sw_eps);
        });
    });

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "CE metrics from label CSVs or a trained model");
    static std::string ev_pred, ev_truth, ev_model, ev_data, ev_out, ev_config, ev_from, ev_policy = "positive-only";
    static TrainFlags ev_flags;
    auto* e_pred = ev->add_option("--pred", ev_pred, "Predicted labels CSV");
    auto* e_truth = ev->add_option("--truth", ev_truth, "Ground-truth labels CSV");
    auto* e_model = ev->add_option("--model", ev_model, "Alignment run directory");
    auto* e_data = ev->add_option("--data", ev_data, "Dataset directory");
    ev->add_option("--out", ev_out, "Optional output directory");
    ev->add_option("--config", ev_config, "key=value config file");
    ev->add_option("--from-config", ev_from, "run.json from a previous run");
    auto* e_policy = ev->add_option("--policy", ev_policy, "positive-only | uncertain-positive");
    ev_flags.add_to(ev);
    ev->callback([&] {
        guard([&] {
            ParamResolver r;
            r.load(ev_config, ev_from);
            r.apply("pred", ev_pred, e_pred);
            r.apply("truth", ev_truth, e_truth);
            r.apply("model", ev_model, e_model);
            r.apply("data", ev_data, e_data);
            r.apply("policy", ev_policy, e_policy);
            ev_flags.resolve(r);
            cmd_eval(r, ev_pred, ev_truth, ev_model, ev_data, ev_out, ev_policy, ev_flags);
        });
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    return exit_code;
}
